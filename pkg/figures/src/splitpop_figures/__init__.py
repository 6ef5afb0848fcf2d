"""Static figures over splitpop's exported comparison files.

The plotting layer never runs simulations: it consumes the CSV/JSON files the
simulator CLI writes and renders deterministic SVG (fixed style, no
timestamps), so reruns on identical inputs are byte-identical.
"""

from .plots import FigureSpec, plot_extreme_convergence, plot_spectrum
from .io import SchemaError, read_checks_csv, read_reports_json

__version__ = "0.1.0"

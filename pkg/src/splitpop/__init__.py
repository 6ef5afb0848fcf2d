"""Splitting-tree population toolkit.

Simulation of the allelic partition of a supercritical branching population
under neutral Poissonian mutation, exact expected-spectrum numerics built on
scale functions, and Monte Carlo verification of the limit laws of the
largest and oldest families.
"""

from .models import (
    ExponentialLifetime,
    FixedLifetime,
    ImmortalLifetime,
    LifespanModel,
    ModelParams,
    Regime,
    TabulatedTail,
    birth_death,
    classify_regime,
    fixed_lifetime,
    malthusian_alpha,
    psi,
    psi_prime,
    psi_theta,
    psi_theta_prime_at_root,
    yule,
)
from .scale import (
    ScaleGrid,
    build_scale_grid,
    check_scale_asymptotics,
    eval_log_w,
    eval_log_w_theta,
    eval_w,
    eval_w_theta,
    quantile_h_conditional,
    with_mutation_rate,
    write_grid_csv,
)
from .simulate import (
    AllelicPartition,
    CoalescentTree,
    ExtremeSummary,
    HaplotypeId,
    MutationSet,
    extreme_stats,
    overlay_mutations,
    resolve_partition,
    simulate_partition,
    simulate_tree,
)
from .forward import ForwardRun, partition_forward, simulate_forward
from .spectrum import (
    ancestral_law,
    expected_age_density,
    expected_counts,
    expected_counts_parts,
    expected_spectrum,
    k_bound,
    spectrum_mass,
    total_expected_haplotypes,
)
from .limits import (
    AsymptoticConstants,
    LimitLaw,
    centering,
    constants,
    joint_limit_pmf,
    limit_cdf_extreme,
    limit_expectation,
    limit_law,
    mixed_poisson_pmf,
    solve_t_n,
)
from .experiments import (
    EmpiricalSummary,
    ExperimentConfig,
    compare_to_exact,
    fit_limit_law,
    run_replicates,
    run_suite,
)
from .streams import replicate_rng

__version__ = "0.1.0"

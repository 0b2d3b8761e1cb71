"""Structural-balance dynamics on temporal complete graphs.

Continuous-valued link weights on the complete graph evolve toward social
balance under saturating triadic drift, with links activated one at a time
for a fixed duration tau. The package provides the single-link and
aggregate integrators, incremental unbalanced-triad bookkeeping, the two
temporal update schemes, and an ensemble harness with shared initial
conditions across a tau grid.
"""

from .census import (
    DEFAULT_EPSILON,
    TriadCensus,
    census_apply_link_change,
    census_build,
    diagonal_nonnegative,
    is_population_balanced,
    sgn_eps,
    total_triads,
    triad_balanced,
)
from .dynamics import (
    IntegrationError,
    LinkCoefficients,
    ModelSpec,
    StateCorruptionError,
    Variant,
    WeightState,
    evolve_link_closed_form,
    evolve_link_numeric,
    evolve_self_loop,
    init_weights,
    integrate_aggregate,
    local_field,
)
from .experiments import (
    DEFAULT_TAU_GRID,
    EnsembleConfig,
    EnsembleError,
    EnsembleStats,
    average_timecourse,
    coupon_collector_line,
    generate_initial_state,
    harmonic_number,
    paired_slowdown,
    run_ensemble,
    size_sweep,
    updates_per_link,
)
from .schedulers import (
    RunOutcome,
    RunState,
    Scheduler,
    SchedulerKind,
    apply_event,
    link_count,
    next_pair,
    run_single,
    selectable_link_count,
)

__version__ = "0.1.0"

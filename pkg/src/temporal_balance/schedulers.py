"""Temporal update schemes and the per-run event loop.

Exactly one link is active at a time: an event picks a link, evolves its
weight for duration tau with every other weight frozen, and advances the
clock by tau. Two selection schemes are implemented: with replacement
(each event picks a link uniformly and independently) and without
replacement (a uniform random permutation of all links is consumed in
order and redrawn every full round).

A run terminates when the population first becomes balanced (no unbalanced
triads; for the self-loop variant additionally every diagonal entry at or
above epsilon), or when the clock would pass ``t_max``, whichever comes
first. The unbalanced-triad count is sampled at every multiple of
``sample_interval``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .census import (
    TriadCensus,
    census_apply_link_change,
    census_build,
    diagonal_nonnegative,
    verify_consistency,
)
from .dynamics import (
    DEFAULT_MAX_STEPS,
    DEFAULT_TOL,
    ModelSpec,
    Variant,
    WeightState,
    evolve_link_closed_form,
    evolve_link_numeric,
    evolve_self_loop,
    local_field,
)

__all__ = [
    "SchedulerKind",
    "Scheduler",
    "RunState",
    "RunOutcome",
    "link_count",
    "selectable_link_count",
    "next_pair",
    "apply_event",
    "run_single",
]

_BATCH = 8192


class SchedulerKind(Enum):
    WITH_REPLACEMENT = "with_replacement"
    WITHOUT_REPLACEMENT = "without_replacement"


@dataclass(frozen=True)
class Scheduler:
    """Update scheme plus the activation duration tau."""

    kind: SchedulerKind
    tau: float

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


def link_count(n: int) -> int:
    """Number of distinct links M = N(N-1)/2 (reporting always uses this)."""
    return n * (n - 1) // 2


def selectable_link_count(n: int, variant: Variant) -> int:
    """Size of the activation link set; self-pairs included for self-loops."""
    if variant is Variant.SELF_LOOPS:
        return n * (n + 1) // 2
    return link_count(n)


class RunState:
    """Mutable state of one run: weights, census, clock, and the scheduler.

    The clock is always recomputed as event_count * tau, never accumulated,
    so it carries no summation drift. For the without-replacement scheme
    ``permutation_cursor`` is the position inside the current round.
    """

    __slots__ = ("weights", "census", "clock", "event_count", "tau", "kind",
                 "rng", "link_i", "link_j", "n_links", "permutation",
                 "permutation_cursor", "_batch", "_batch_pos")

    def __init__(self, weights: WeightState, census: TriadCensus,
                 scheduler: Scheduler, rng: np.random.Generator,
                 variant: Variant):
        n = weights.n
        if variant is Variant.SELF_LOOPS:
            iu = np.triu_indices(n, 0)
        else:
            iu = np.triu_indices(n, 1)
        self.weights = weights
        self.census = census
        self.clock = 0.0
        self.event_count = 0
        self.tau = scheduler.tau
        self.kind = scheduler.kind
        self.rng = rng
        self.link_i = iu[0].astype(np.int64)
        self.link_j = iu[1].astype(np.int64)
        self.n_links = len(self.link_i)
        self.permutation = None
        self.permutation_cursor = 0
        self._batch = None
        self._batch_pos = 0


def next_pair(state: RunState) -> tuple[int, int]:
    """Pick the next active link (a self-pair has i == j)."""
    if state.kind is SchedulerKind.WITH_REPLACEMENT:
        batch = state._batch
        pos = state._batch_pos
        if batch is None or pos >= len(batch):
            batch = state.rng.integers(0, state.n_links, size=_BATCH)
            state._batch = batch
            pos = 0
        idx = batch[pos]
        state._batch_pos = pos + 1
    else:
        if state.permutation is None or state.permutation_cursor >= state.n_links:
            state.permutation = state.rng.permutation(state.n_links)
            state.permutation_cursor = 0
        idx = state.permutation[state.permutation_cursor]
        state.permutation_cursor += 1
    return int(state.link_i[idx]), int(state.link_j[idx])


def apply_event(state: RunState, pair: tuple[int, int], spec: ModelSpec,
                tol: float = DEFAULT_TOL,
                max_steps: int = DEFAULT_MAX_STEPS) -> None:
    """Evolve the active link for tau, refresh the census, advance the clock."""
    i, j = pair
    w = state.weights.weights
    tau = state.tau
    if i == j:
        w[i, i] = evolve_self_loop(float(w[i, i]), state.weights, i, tau,
                                   spec, tol, max_steps)
    else:
        coeff = local_field(state.weights, i, j, spec)
        x0 = float(w[i, j])
        if spec.variant is Variant.NO_SELF_LOOPS:
            x1 = evolve_link_closed_form(x0, coeff, tau, spec.r_bound)
        else:
            x1 = evolve_link_numeric(x0, coeff, tau, spec.r_bound, tol,
                                     max_steps)
        w[i, j] = x1
        w[j, i] = x1
        census_apply_link_change(state.census, state.weights, i, j, x1)
    state.event_count += 1
    state.clock = state.event_count * tau


@dataclass
class RunOutcome:
    """Result of one run.

    ``timecourse`` holds the unbalanced-triad count at t = 0,
    sample_interval, 2*sample_interval, ...; for a finished run the series
    ends at the last multiple <= t_balance, for an unfinished run at the
    last multiple <= t_max.
    """

    finished: bool
    t_balance: Optional[float]
    timecourse: np.ndarray
    sample_interval: float
    event_count: int
    final_state: Optional[WeightState] = None


def run_single(initial: WeightState, spec: ModelSpec, scheduler: Scheduler,
               rng: np.random.Generator, epsilon: float, t_max: float,
               sample_interval: float = 10.0, tol: float = DEFAULT_TOL,
               max_steps: int = DEFAULT_MAX_STEPS,
               keep_final_state: bool = False,
               shadow_check_every: int = 0) -> RunOutcome:
    """Run the temporal dynamics from ``initial`` until balance or t_max.

    The balance predicate is evaluated after every event (the incremental
    census makes this O(1)); t_balance is the clock value of the event
    during which it first holds. Only events ending at or before t_max are
    executed. ``shadow_check_every`` > 0 enables a periodic full recount
    cross-check of the incremental census (debugging aid; slow).
    """
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if sample_interval <= 0:
        raise ValueError(f"sample_interval must be positive, got {sample_interval}")
    if initial.has_diagonal != (spec.variant is Variant.SELF_LOOPS):
        raise ValueError("state diagonal presence must match the model variant")

    state = initial.copy()
    census = census_build(state, epsilon)
    rs = RunState(state, census, scheduler, rng, spec.variant)

    tau = scheduler.tau
    self_loops = spec.variant is Variant.SELF_LOOPS
    samples = [census.unbalanced_count]
    next_k = 1  # sample times are next_k * sample_interval, drift-free

    finished = False
    t_balance: Optional[float] = None
    while True:
        t_after = (rs.event_count + 1) * tau
        if t_after > t_max:
            break
        while next_k * sample_interval < t_after and \
                next_k * sample_interval <= t_max:
            samples.append(census.unbalanced_count)
            next_k += 1
        apply_event(rs, next_pair(rs), spec, tol, max_steps)
        if shadow_check_every and rs.event_count % shadow_check_every == 0:
            verify_consistency(census, state)
        if census.unbalanced_count == 0:
            if not self_loops or diagonal_nonnegative(state, epsilon):
                finished = True
                t_balance = rs.clock
                break

    end_t = t_balance if finished else t_max
    while next_k * sample_interval <= end_t:
        samples.append(census.unbalanced_count)
        next_k += 1

    return RunOutcome(
        finished=finished,
        t_balance=t_balance,
        timecourse=np.asarray(samples, dtype=np.int64),
        sample_interval=sample_interval,
        event_count=rs.event_count,
        final_state=state if keep_final_state else None,
    )

"""Ensemble protocol: shared initial conditions across a tau grid.

For every initial condition (derived deterministically from the master
seed and the run index) a run is executed for each tau in the grid, with
an independent scheduler stream per (run, tau). Time-to-balance statistics
use only the initial conditions that finished for *every* tau value (the
discard rule), so differences across tau cannot be an artifact of
different initial conditions. Averaged timecourses of the unbalanced-triad
fraction keep all runs, unfinished included.

The (run x tau) grid is embarrassingly parallel; accumulation uses integer
sums and per-index reductions, so results are bit-identical at any worker
count.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats as sp_stats

from .census import total_triads
from .dynamics import ModelSpec, Variant, WeightState, init_weights
from .schedulers import (
    RunOutcome,
    Scheduler,
    SchedulerKind,
    link_count,
    run_single,
)

__all__ = [
    "EnsembleConfig",
    "EnsembleError",
    "TauStats",
    "EnsembleStats",
    "AverageTimecourse",
    "SlowdownTest",
    "run_ensemble",
    "generate_initial_state",
    "updates_per_link",
    "harmonic_number",
    "coupon_collector_line",
    "average_timecourse",
    "TimecourseAccumulator",
    "log_histogram",
    "paired_slowdown",
    "size_sweep",
    "SweepRow",
]

DEFAULT_TAU_GRID = (0.01, 0.02, 0.05, 0.1, 0.22, 0.5, 1.0, 2.25)


class EnsembleError(RuntimeError):
    """A run failed with a numerical error (distinct from unfinished)."""


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything needed to reproduce one ensemble bit-for-bit."""

    n: int = 200
    mu: float = 0.0
    sigma: float = 1.0
    r_bound: float = 10.0
    epsilon: float = 1e-6
    tau_grid: tuple[float, ...] = DEFAULT_TAU_GRID
    variant: Variant = Variant.NO_SELF_LOOPS
    scheduler: SchedulerKind = SchedulerKind.WITH_REPLACEMENT
    runs: int = 1000
    t_max: float = 2e6
    sample_interval: float = 10.0
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ValueError(f"need n >= 3, got n={self.n}")
        if not self.tau_grid:
            raise ValueError("tau_grid must be nonempty")
        if any(t <= 0 for t in self.tau_grid):
            raise ValueError(f"tau values must be positive: {self.tau_grid}")
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.t_max <= 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.master_seed < 0:
            raise ValueError(f"master_seed must be >= 0, got {self.master_seed}")

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.variant, self.r_bound, self.n)


def initial_state_rng(master_seed: int, run_index: int) -> np.random.Generator:
    """Stream for the run's initial condition; identical for every tau."""
    return np.random.default_rng(
        np.random.SeedSequence([master_seed, 0, run_index]))


def scheduler_rng(master_seed: int, run_index: int,
                  tau_index: int) -> np.random.Generator:
    """Stream driving link selection for one (run, tau) cell."""
    return np.random.default_rng(
        np.random.SeedSequence([master_seed, 1, run_index, tau_index]))


def generate_initial_state(config: EnsembleConfig, run_index: int) -> WeightState:
    return init_weights(config.n, config.mu, config.sigma,
                        config.variant is Variant.SELF_LOOPS,
                        initial_state_rng(config.master_seed, run_index),
                        config.r_bound)


def updates_per_link(mean_t: float, n: int, tau: float) -> float:
    """Average number of per-link activations before balance: <T> / (M tau)."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return mean_t / (link_count(n) * tau)


def harmonic_number(m: int) -> float:
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    return float(np.sum(1.0 / np.arange(1, m + 1, dtype=np.float64)))


def coupon_collector_line(n: int) -> float:
    """Expected updates per link until every link was selected at least once.

    Uniform selection with replacement over M links needs M * H_M events in
    expectation, i.e. H_M updates per link; results at or below this line
    are slowed only by the coverage effect.
    """
    if n < 3:
        raise ValueError(f"need n >= 3, got n={n}")
    return harmonic_number(link_count(n))


class AverageTimecourse(NamedTuple):
    t: np.ndarray
    mean_fraction: np.ndarray
    runs_contributing: np.ndarray


class TimecourseAccumulator:
    """Streaming pointwise mean of unbalanced-triad counts over runs.

    Finished runs implicitly contribute zero beyond their last sample;
    unfinished runs contribute their sampled values throughout. Sums are
    integers, so the result is independent of accumulation order.
    """

    def __init__(self, sample_interval: float):
        self.sample_interval = sample_interval
        self.sums = np.zeros(0, dtype=np.int64)
        self.active = np.zeros(0, dtype=np.int64)
        self.n_runs = 0

    def add(self, counts: np.ndarray) -> None:
        ln = len(counts)
        if ln > len(self.sums):
            grow = ln - len(self.sums)
            self.sums = np.concatenate([self.sums, np.zeros(grow, np.int64)])
            self.active = np.concatenate([self.active, np.zeros(grow, np.int64)])
        self.sums[:ln] += counts
        self.active[:ln] += 1
        self.n_runs += 1

    def result(self, n_triads: int) -> AverageTimecourse:
        t = np.arange(len(self.sums), dtype=np.float64) * self.sample_interval
        denom = max(self.n_runs, 1) * n_triads
        return AverageTimecourse(t, self.sums / denom, self.active.copy())


def average_timecourse(outcomes: Sequence[RunOutcome],
                       n_triads: int) -> AverageTimecourse:
    """Ensemble mean of the unbalanced fraction at common sample times."""
    if not outcomes:
        raise ValueError("need at least one outcome")
    interval = outcomes[0].sample_interval
    if any(o.sample_interval != interval for o in outcomes):
        raise ValueError("outcomes must share a sample_interval")
    acc = TimecourseAccumulator(interval)
    for o in outcomes:
        acc.add(o.timecourse)
    return acc.result(n_triads)


def log_histogram(values: np.ndarray, bins_per_decade: int = 10,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Histogram with decade-aligned logarithmic bins (values must be > 0)."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    lo = math.floor(math.log10(values.min()))
    hi = math.ceil(math.log10(values.max()))
    if hi <= lo:
        hi = lo + 1
    edges = np.power(10.0, np.linspace(lo, hi, (hi - lo) * bins_per_decade + 1))
    edges[-1] = np.nextafter(edges[-1], np.inf)  # max value lands in last bin
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts.astype(np.int64)


@dataclass
class TauStats:
    """Aggregates for one tau value."""

    tau: float
    finished_count: int
    mean_t: float  # over jointly-finished runs only; NaN if none
    updates_per_link: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    timecourse: AverageTimecourse


@dataclass
class EnsembleStats:
    """Full ensemble result: per-tau aggregates plus raw T bookkeeping."""

    config: EnsembleConfig
    m_links: int
    coupon_line: float
    t_values: np.ndarray        # (runs, n_tau), NaN where unfinished
    finished: np.ndarray        # (runs, n_tau) bool
    event_counts: np.ndarray    # (runs, n_tau) int64
    discarded_indices: np.ndarray
    per_tau: list[TauStats]

    def updates_per_link_by_tau(self) -> np.ndarray:
        return np.array([ts.updates_per_link for ts in self.per_tau])


_WORKER_CTX: Optional[tuple] = None


def _worker_init(ctx: tuple) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _run_cell(task: tuple[int, int]):
    run_idx, tau_idx = task
    config, initial_states = _WORKER_CTX
    if initial_states is not None:
        initial = initial_states[run_idx]
    else:
        initial = generate_initial_state(config, run_idx)
    scheduler = Scheduler(config.scheduler, config.tau_grid[tau_idx])
    try:
        outcome = run_single(
            initial, config.model_spec(), scheduler,
            scheduler_rng(config.master_seed, run_idx, tau_idx),
            epsilon=config.epsilon, t_max=config.t_max,
            sample_interval=config.sample_interval)
    except Exception as exc:
        raise EnsembleError(
            f"run {run_idx} at tau={config.tau_grid[tau_idx]} failed: {exc}"
        ) from exc
    return (run_idx, tau_idx, outcome.finished, outcome.t_balance,
            outcome.event_count, outcome.timecourse)


def run_ensemble(config: EnsembleConfig, threads: int = 1,
                 initial_states: Optional[Sequence[WeightState]] = None,
                 ) -> EnsembleStats:
    """Execute the full (runs x tau_grid) protocol and aggregate.

    ``initial_states`` overrides the seeded initial conditions (used by
    tests to inject constructed states); it must contain one state per run.
    ``threads`` is the worker-process count; results are reduced by index,
    so the output is identical for any value.
    """
    if initial_states is not None and len(initial_states) != config.runs:
        raise ValueError("need exactly one injected initial state per run")

    n_tau = len(config.tau_grid)
    runs = config.runs
    t_values = np.full((runs, n_tau), np.nan)
    finished = np.zeros((runs, n_tau), dtype=bool)
    event_counts = np.zeros((runs, n_tau), dtype=np.int64)
    accumulators = [TimecourseAccumulator(config.sample_interval)
                    for _ in range(n_tau)]

    tasks = [(r, k) for k in range(n_tau) for r in range(runs)]
    ctx = (config, list(initial_states) if initial_states is not None else None)

    def consume(rec) -> None:
        run_idx, tau_idx, fin, t_bal, events, counts = rec
        finished[run_idx, tau_idx] = fin
        if fin:
            t_values[run_idx, tau_idx] = t_bal
        event_counts[run_idx, tau_idx] = events
        accumulators[tau_idx].add(counts)

    if threads <= 1 or len(tasks) == 1:
        _worker_init(ctx)
        try:
            for task in tasks:
                consume(_run_cell(task))
        finally:
            _worker_init(None)
    else:
        mp_ctx = multiprocessing.get_context("fork")
        with mp_ctx.Pool(threads, initializer=_worker_init,
                         initargs=(ctx,)) as pool:
            for rec in pool.imap(_run_cell, tasks, chunksize=1):
                consume(rec)

    discarded = np.where(~finished.all(axis=1))[0]
    kept = finished.all(axis=1)
    n_triads = total_triads(config.n)
    m = link_count(config.n)

    per_tau = []
    for k, tau in enumerate(config.tau_grid):
        finished_t = t_values[finished[:, k], k]
        mean_t = float(np.mean(t_values[kept, k])) if kept.any() else math.nan
        edges, hist = log_histogram(finished_t)
        per_tau.append(TauStats(
            tau=tau,
            finished_count=int(finished[:, k].sum()),
            mean_t=mean_t,
            updates_per_link=mean_t / (m * tau),
            hist_edges=edges,
            hist_counts=hist,
            timecourse=accumulators[k].result(n_triads),
        ))

    return EnsembleStats(
        config=config,
        m_links=m,
        coupon_line=coupon_collector_line(config.n),
        t_values=t_values,
        finished=finished,
        event_counts=event_counts,
        discarded_indices=discarded,
        per_tau=per_tau,
    )


class SlowdownTest(NamedTuple):
    """Paired comparison of T at a test tau against a baseline tau.

    ``mean_deviation`` is the mean of (T_high - T_low) / (M * tau_high)
    over jointly-finished initial conditions: the deviation of the test
    point from the baseline-anchored guide line <T>_low / (M tau), in
    updates-per-link units. ``p_value`` is the one-sided paired t-test for
    that deviation being positive (slowing down).
    """

    n_pairs: int
    mean_deviation: float
    t_statistic: float
    p_value: float


def paired_slowdown(stats: EnsembleStats, tau_low: float,
                    tau_high: float) -> SlowdownTest:
    grid = list(stats.config.tau_grid)
    k_low = grid.index(tau_low)
    k_high = grid.index(tau_high)
    kept = stats.finished.all(axis=1)
    t_low = stats.t_values[kept, k_low]
    t_high = stats.t_values[kept, k_high]
    if len(t_low) < 2:
        raise ValueError("need at least two jointly-finished runs")
    diff = (t_high - t_low) / (stats.m_links * tau_high)
    res = sp_stats.ttest_1samp(diff, 0.0, alternative="greater")
    return SlowdownTest(len(diff), float(np.mean(diff)),
                        float(res.statistic), float(res.pvalue))


class SweepRow(NamedTuple):
    n: int
    tau: float
    finished_count: int
    discarded: int
    updates_per_link: float
    normalized: float          # updates_per_link / updates_per_link(tau_base)
    coupon_normalized: float   # H_M / updates_per_link(tau_base)
    trivial_line: float        # tau_base / tau


def size_sweep(base: EnsembleConfig, n_grid: Sequence[int],
               threads: int = 1) -> list[SweepRow]:
    """Repeat the ensemble for each population size and normalize.

    Update counts are normalized by the value at the smallest tau in the
    grid (the aggregate-dynamics proxy), which makes sizes comparable; the
    coupon-collector line and the trivial-regime line tau_base/tau are
    reported on the same normalized scale.
    """
    if not n_grid:
        raise ValueError("n_grid must be nonempty")
    tau_base = min(base.tau_grid)
    rows: list[SweepRow] = []
    for n in n_grid:
        cfg_n = EnsembleConfig(
            n=n, mu=base.mu, sigma=base.sigma, r_bound=base.r_bound,
            epsilon=base.epsilon, tau_grid=base.tau_grid,
            variant=base.variant, scheduler=base.scheduler, runs=base.runs,
            t_max=base.t_max, sample_interval=base.sample_interval,
            master_seed=base.master_seed)
        stats = run_ensemble(cfg_n, threads=threads)
        k_base = list(cfg_n.tau_grid).index(tau_base)
        base_upl = stats.per_tau[k_base].updates_per_link
        coupon = stats.coupon_line
        for k, ts in enumerate(stats.per_tau):
            rows.append(SweepRow(
                n=n,
                tau=ts.tau,
                finished_count=ts.finished_count,
                discarded=len(stats.discarded_indices),
                updates_per_link=ts.updates_per_link,
                normalized=ts.updates_per_link / base_upl,
                coupon_normalized=coupon / base_upl,
                trivial_line=tau_base / ts.tau,
            ))
    return rows

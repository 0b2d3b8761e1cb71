"""Self-contained oracle battery behind the ``validate`` CLI subcommand.

Each check pits a fast production path against an independent reference:
the closed-form tanh solution against the adaptive integrator, the
adaptive integrator against a plain fixed-grid RK4, the incremental triad
census against full recounts, measured sign statistics against the
Gaussian orthant formula, and the with-replacement scheduler against
coupon-collector expectations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .census import census_apply_link_change, census_build, total_triads
from .dynamics import (
    LinkCoefficients,
    ModelSpec,
    Variant,
    _integrate_saturating,
    evolve_link_closed_form,
    evolve_link_numeric,
    init_weights,
)
from .experiments import coupon_collector_line, harmonic_number
from .schedulers import (
    RunState,
    Scheduler,
    SchedulerKind,
    apply_event,
    link_count,
    next_pair,
    run_single,
)

__all__ = ["CheckResult", "run_battery", "fixed_grid_rk4",
           "orthant_unbalanced_probability"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def fixed_grid_rk4(x0: float, s: float, b: float, q: float, normalizer: float,
                   r_bound: float, tau: float, dt: float) -> float:
    """Reference integrator: classical RK4 on a fixed grid, no adaptivity.

    Same drift family as the production integrator,
    dx/dt = (1 - x^2/R^2)(s + b x + q x^2) / normalizer, but a completely
    separate code path used only as an oracle.
    """
    inv_norm = 1.0 / normalizer
    inv_r2 = 1.0 / (r_bound * r_bound)

    def f(x: float) -> float:
        return (1.0 - x * x * inv_r2) * (s + x * (b + q * x)) * inv_norm

    n_steps = int(round(tau / dt))
    h = tau / n_steps
    x = x0
    for _ in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x += h * (k1 + 2.0 * (k2 + k3) + k4) / 6.0
    return min(r_bound, max(-r_bound, x))


def orthant_unbalanced_probability(mu: float, sigma: float) -> float:
    """P(triad unbalanced) for independent Gaussian link weights.

    The sign product is -1 iff one or all three links are negative:
    3 p q^2 + p^3 with p = P(x < 0) = 1 - Phi(mu/sigma).
    """
    p = 0.5 * math.erfc(mu / (sigma * math.sqrt(2.0)))
    q = 1.0 - p
    return 3.0 * p * q * q + p ** 3


def _random_riccati_cases(rng: np.random.Generator, count: int):
    r = 10.0 ** rng.uniform(-1, 2, size=count)           # R in [0.1, 100]
    x0 = rng.uniform(-1, 1, size=count) * r
    c = rng.standard_normal(count) * 10.0 ** rng.uniform(-2, 2, size=count)
    tau = 10.0 ** rng.uniform(-2, 1, size=count)
    return x0, c, tau, r


def check_closed_form_vs_numeric(cases: int = 2000,
                                 seed: int = 20240901) -> CheckResult:
    rng = np.random.default_rng(seed)
    x0s, cs, taus, rs = _random_riccati_cases(rng, cases)
    worst = 0.0
    for x0, c, tau, r in zip(x0s, cs, taus, rs):
        coeff = LinkCoefficients(float(c), 0.0, 1.0)
        exact = evolve_link_closed_form(float(x0), coeff, float(tau), float(r))
        numeric = evolve_link_numeric(float(x0), coeff, float(tau), float(r))
        # relative to the state scale: a trajectory may legitimately end
        # near zero while its error accrued at scale ~R
        rel = abs(numeric - exact) / (abs(exact) + float(r))
        worst = max(worst, rel)
    return CheckResult(
        "closed_form_vs_numeric",
        worst <= 1e-9,
        f"{cases} random cases, worst difference {worst:.3e} relative to "
        f"the state scale |x|+R (bound 1e-9)")


def check_numeric_vs_fixed_grid(cases: int = 20, seed: int = 20240902,
                                dt: float = 1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        r = 10.0
        x0 = float(rng.uniform(-0.9, 0.9) * r)
        s = float(rng.standard_normal() * 5.0)
        b = float(rng.standard_normal() * 2.0)
        q = float(rng.integers(0, 2))  # mix linear-only and quadratic drifts
        norm = float(rng.integers(3, 20))
        tau = float(10.0 ** rng.uniform(-1, 0.5))
        numeric = _integrate_saturating(x0, s, b, q, norm, r, tau, 1e-10,
                                        1_000_000)
        oracle = fixed_grid_rk4(x0, s, b, q, norm, r, tau, dt)
        rel = abs(numeric - oracle) / (abs(oracle) + r)
        worst = max(worst, rel)
    return CheckResult(
        "numeric_vs_fixed_grid",
        worst <= 1e-7,
        f"{cases} random drifts, worst difference {worst:.3e} relative to "
        f"the state scale (bound 1e-7, oracle dt={dt:g})")


def check_census_incremental(n: int = 20, changes: int = 3000,
                             seed: int = 20240903) -> CheckResult:
    rng = np.random.default_rng(seed)
    state = init_weights(n, 0.0, 1.0, False, rng, 10.0)
    census = census_build(state, 1e-6)
    mismatches = 0
    for step in range(changes):
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n - 1))
        if j >= i:
            j += 1
        new = float(rng.normal(0.0, 1.0))
        if rng.random() < 0.05:
            new = float(rng.uniform(-0.5e-6, 0.5e-6))  # dead-zone values too
        state.set_link(i, j, new)
        census_apply_link_change(census, state, i, j, new)
        if step % 100 == 0:
            if census_build(state, 1e-6).unbalanced_count != census.unbalanced_count:
                mismatches += 1
    final = census_build(state, 1e-6)
    ok = mismatches == 0 and final.unbalanced_count == census.unbalanced_count
    return CheckResult(
        "census_incremental_vs_recount",
        ok,
        f"{changes} random link changes at n={n}: incremental count "
        f"{census.unbalanced_count}, recount {final.unbalanced_count}, "
        f"{mismatches} checkpoint mismatches")


def check_orthant_fractions(n: int = 100, states: int = 20,
                            seed: int = 20240904) -> CheckResult:
    details = []
    ok = True
    for mu, expected in ((0.0, None), (1.0, None), (-1.0, None)):
        expected = orthant_unbalanced_probability(mu, 1.0)
        rng = np.random.default_rng([seed, int(mu) + 7])
        fractions = []
        for _ in range(states):
            state = init_weights(n, mu, 1.0, False, rng, 10.0)
            census = census_build(state, 1e-6)
            fractions.append(census.unbalanced_count / total_triads(n))
        mean = float(np.mean(fractions))
        ok = ok and abs(mean - expected) <= 0.01
        details.append(f"mu={mu:g}: measured {mean:.4f} vs orthant {expected:.4f}")
    return CheckResult("initial_unbalanced_fraction", ok, "; ".join(details))


def check_coupon_coverage(n: int = 50, seed: int = 20240905) -> CheckResult:
    m = link_count(n)
    expected = m * harmonic_number(m)
    variance = m * m * float(np.sum(1.0 / np.arange(1, m + 1) ** 2)) - expected
    sigma = math.sqrt(variance)
    rng = np.random.default_rng(seed)
    state = init_weights(n, 0.0, 1.0, False, rng, 10.0)
    census = census_build(state, 1e-6)
    rs = RunState(state, census, Scheduler(SchedulerKind.WITH_REPLACEMENT, 1.0),
                  rng, Variant.NO_SELF_LOOPS)
    seen = np.zeros(m, dtype=bool)
    remaining = m
    events = 0
    while remaining:
        i, j = next_pair(rs)
        idx = i * n - i * (i + 1) // 2 + (j - i - 1)  # row-major upper triangle
        if not seen[idx]:
            seen[idx] = True
            remaining -= 1
        events += 1
    dev = abs(events - expected) / sigma
    return CheckResult(
        "coupon_collector_coverage",
        dev <= 3.0,
        f"n={n}: first full coverage after {events} events, expected "
        f"{expected:.1f} +- {sigma:.1f} ({dev:.2f} sigma); "
        f"H_M line at n=200: {coupon_collector_line(200):.4f}")


def check_without_replacement_rounds(n: int = 30, rounds: int = 5,
                                     seed: int = 20240906) -> CheckResult:
    rng = np.random.default_rng(seed)
    state = init_weights(n, 0.0, 1.0, False, rng, 10.0)
    census = census_build(state, 1e-6)
    rs = RunState(state, census,
                  Scheduler(SchedulerKind.WITHOUT_REPLACEMENT, 1.0), rng,
                  Variant.NO_SELF_LOOPS)
    m = link_count(n)
    seqs = []
    ok = True
    for _ in range(rounds):
        seq = [next_pair(rs) for _ in range(m)]
        seqs.append(tuple(seq))
        if sorted(seq) != sorted(set(seq)) or len(set(seq)) != m:
            ok = False
    distinct = len(set(seqs))
    ok = ok and distinct >= 2
    return CheckResult(
        "without_replacement_rounds",
        ok,
        f"{rounds} rounds at n={n}: each a full permutation of {m} links, "
        f"{distinct} distinct orderings")


def check_absorbing_balance(n: int = 20, runs: int = 3,
                            seed: int = 20240907) -> CheckResult:
    spec = ModelSpec(Variant.NO_SELF_LOOPS, 10.0, n)
    scheduler = Scheduler(SchedulerKind.WITH_REPLACEMENT, 0.1)
    m = link_count(n)
    ok = True
    details = []
    for r in range(runs):
        init_rng = np.random.default_rng([seed, r])
        initial = init_weights(n, 1.0, 1.0, False, init_rng, 10.0)
        outcome = run_single(initial, spec, scheduler,
                             np.random.default_rng([seed, r, 1]),
                             epsilon=1e-6, t_max=1e5, keep_final_state=True)
        if not outcome.finished:
            ok = False
            details.append(f"run {r}: did not finish")
            continue
        state = outcome.final_state
        census = census_build(state, 1e-6)
        signs_before = census.signs.copy()
        abs_before = np.abs(state.weights)
        rs = RunState(state, census, scheduler,
                      np.random.default_rng([seed, r, 2]),
                      Variant.NO_SELF_LOOPS)
        for _ in range(10 * m):
            apply_event(rs, next_pair(rs), spec)
        if census.unbalanced_count != 0:
            ok = False
            details.append(f"run {r}: became unbalanced again")
        if not np.array_equal(signs_before, census.signs):
            ok = False
            details.append(f"run {r}: a sign flipped after balance")
        abs_after = np.abs(state.weights)
        off = ~np.eye(n, dtype=bool)
        if np.any(abs_after[off] < abs_before[off] - 1e-12):
            ok = False
            details.append(f"run {r}: |weight| decreased after balance")
    if not details:
        details.append(f"{runs} finished runs stayed balanced over "
                       f"{10 * m} extra events, signs frozen, |x| nondecreasing")
    return CheckResult("absorbing_balanced_state", ok, "; ".join(details))


def run_battery(quick: bool = False) -> list[CheckResult]:
    if quick:
        return [
            check_closed_form_vs_numeric(cases=300),
            check_numeric_vs_fixed_grid(cases=5, dt=1e-3),
            check_census_incremental(n=12, changes=600),
            check_orthant_fractions(n=60, states=8),
            check_coupon_coverage(n=30),
            check_without_replacement_rounds(),
            check_absorbing_balance(n=12, runs=2),
        ]
    return [
        check_closed_form_vs_numeric(),
        check_numeric_vs_fixed_grid(),
        check_census_incremental(),
        check_orthant_fractions(),
        check_coupon_coverage(),
        check_without_replacement_rounds(),
        check_absorbing_balance(),
    ]

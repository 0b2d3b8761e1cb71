"""Link-weight state and equations of motion.

The system lives on the undirected complete graph with N nodes. Each link
carries a real weight x_ij = x_ji whose sign encodes a friendly (+) or
hostile (-) relationship. Weights evolve under a triadic drift saturated
into [-R, R]:

    dx_ij/dt = (1/normalizer) * (1 - x_ij^2/R^2) * sum_k x_ik x_kj

Two variants are supported. Without self-loops the sum runs over the N-2
third parties and the normalizer is N-2; with self-loops the sum runs over
all N nodes (diagonal entries x_ii exist and evolve too) and the normalizer
is N.

Single-link activations freeze every other weight, so the per-event drift
coefficients are constants. For the no-self-loop variant that makes the
event dynamics a Riccati equation with an exact tanh solution; the
self-loop variant adds a term linear (off-diagonal) or quadratic (diagonal)
in the evolving weight and is integrated numerically with adaptive
step-doubling RK4. A classical fixed-step RK4 over all links at once serves
as the aggregate (all-links-simultaneous) reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "Variant",
    "ModelSpec",
    "WeightState",
    "LinkCoefficients",
    "IntegrationError",
    "StateCorruptionError",
    "init_weights",
    "local_field",
    "evolve_link_closed_form",
    "evolve_link_numeric",
    "evolve_self_loop",
    "integrate_aggregate",
]

# Realized global error of the adaptive integrator reaches ~25x the local
# tolerance on long saturating trajectories; 1e-11 keeps closed-form vs
# numeric agreement under 1e-9 (state-scale relative) with margin.
DEFAULT_TOL = 1e-11
DEFAULT_MAX_STEPS = 1_000_000

# Largest double strictly below 1, headroom included: atanh stays finite here.
_ATANH_CLIP = 1.0 - 2.0 ** -52


class Variant(Enum):
    NO_SELF_LOOPS = "no_self_loops"
    SELF_LOOPS = "self_loops"


class IntegrationError(RuntimeError):
    """Adaptive integration exceeded its hard step cap."""


class StateCorruptionError(RuntimeError):
    """A weight was found outside the invariant range [-R, R]."""


@dataclass(frozen=True)
class ModelSpec:
    """Which dynamics variant to run, its saturation bound R, and N."""

    variant: Variant
    r_bound: float
    n: int

    def __post_init__(self) -> None:
        if self.r_bound <= 0:
            raise ValueError(f"r_bound must be positive, got {self.r_bound}")
        if self.n < 3:
            raise ValueError(f"need n >= 3 for triads to exist, got n={self.n}")

    @property
    def normalizer(self) -> int:
        return self.n - 2 if self.variant is Variant.NO_SELF_LOOPS else self.n

    @property
    def has_diagonal(self) -> bool:
        return self.variant is Variant.SELF_LOOPS


class LinkCoefficients(NamedTuple):
    """Frozen-environment drift coefficients for one activated link.

    The single-link drift is (1/normalizer) * (1 - x^2/R^2) * (s_const +
    b_linear * x); b_linear is zero for the no-self-loop variant.
    """

    s_const: float
    b_linear: float
    normalizer: float


class WeightState:
    """Symmetric N x N link weights, optionally with diagonal entries.

    The matrix is stored full for fast row operations; every write goes
    through ``set_link`` which mirrors the identical float into both
    triangles, so x_ij == x_ji holds bit-for-bit at all times. The diagonal
    is identically zero unless ``has_diagonal`` (self-loop variant).
    """

    __slots__ = ("n", "weights", "has_diagonal")

    def __init__(self, n: int, weights: Optional[np.ndarray] = None,
                 has_diagonal: bool = False):
        if n < 3:
            raise ValueError(f"need n >= 3, got n={n}")
        self.n = n
        self.has_diagonal = has_diagonal
        if weights is None:
            self.weights = np.zeros((n, n), dtype=np.float64)
        else:
            w = np.array(weights, dtype=np.float64)
            if w.shape != (n, n):
                raise ValueError(f"weights must be {n}x{n}, got {w.shape}")
            if not np.array_equal(w, w.T):
                raise ValueError("weights matrix must be exactly symmetric")
            if not has_diagonal and np.any(np.diagonal(w) != 0.0):
                raise ValueError("diagonal must be zero without self-loops")
            self.weights = w

    def link(self, i: int, j: int) -> float:
        return float(self.weights[i, j])

    def set_link(self, i: int, j: int, value: float) -> None:
        if i == j:
            raise ValueError("use set_diagonal for self-loop entries")
        self.weights[i, j] = value
        self.weights[j, i] = value

    def diagonal(self) -> Optional[np.ndarray]:
        if not self.has_diagonal:
            return None
        return np.diagonal(self.weights)

    def set_diagonal(self, i: int, value: float) -> None:
        if not self.has_diagonal:
            raise ValueError("state has no diagonal entries")
        self.weights[i, i] = value

    def copy(self) -> "WeightState":
        out = WeightState.__new__(WeightState)
        out.n = self.n
        out.has_diagonal = self.has_diagonal
        out.weights = self.weights.copy()
        return out

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.weights)))


def init_weights(n: int, mu: float, sigma: float, with_diagonal: bool,
                 rng: np.random.Generator, r_bound: float) -> WeightState:
    """Draw independent Gaussian(mu, sigma) weights for every unordered pair.

    Samples with |x| >= R are redrawn (vanishing probability at the default
    parameters, but it keeps the state space invariant by construction).
    The diagonal, when present, is drawn from the same distribution.
    """
    if n < 3:
        raise ValueError(f"need n >= 3, got n={n}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if r_bound <= 0:
        raise ValueError(f"r_bound must be positive, got {r_bound}")

    def draw(count: int) -> np.ndarray:
        vals = rng.normal(mu, sigma, size=count)
        bad = np.abs(vals) >= r_bound
        while np.any(bad):
            vals[bad] = rng.normal(mu, sigma, size=int(bad.sum()))
            bad = np.abs(vals) >= r_bound
        return vals

    m = n * (n - 1) // 2
    w = np.zeros((n, n), dtype=np.float64)
    iu = np.triu_indices(n, 1)
    upper = draw(m)
    w[iu] = upper
    w[(iu[1], iu[0])] = upper
    if with_diagonal:
        w[np.diag_indices(n)] = draw(n)
    state = WeightState.__new__(WeightState)
    state.n = n
    state.has_diagonal = with_diagonal
    state.weights = w
    return state


def local_field(state: WeightState, i: int, j: int,
                spec: ModelSpec) -> LinkCoefficients:
    """Drift coefficients for link (i, j) with all other weights frozen.

    s_const collects sum_{k != i,j} x_ik x_kj; for the self-loop variant the
    k=i and k=j terms contribute b_linear = x_ii + x_jj times the evolving
    weight itself.
    """
    if i == j:
        raise ValueError("local_field is for distinct node pairs; "
                         "self-loops evolve via evolve_self_loop")
    w = state.weights
    dot = float(w[i].dot(w[j]))
    if spec.variant is Variant.NO_SELF_LOOPS:
        # zero diagonal makes the full row dot equal the third-party sum
        return LinkCoefficients(dot, 0.0, float(spec.n - 2))
    b = float(w[i, i] + w[j, j])
    s = dot - b * float(w[i, j])
    return LinkCoefficients(s, b, float(spec.n))


def evolve_link_closed_form(x0: float, coeff: LinkCoefficients, tau: float,
                            r_bound: float) -> float:
    """Exact solution of dx/dt = c (1 - x^2/R^2) for duration tau.

    c = s_const / normalizer is constant during the activation, so
    x(tau) = R tanh(c tau / R + atanh(x0 / R)). Only valid when
    b_linear == 0 (the no-self-loop variant).
    """
    if coeff.b_linear != 0.0:
        raise ValueError("closed form requires b_linear == 0")
    r = r_bound
    if abs(x0) > r:
        raise StateCorruptionError(f"|x0|={abs(x0)} exceeds R={r}")
    c = coeff.s_const / coeff.normalizer
    if c == 0.0 or x0 == r or x0 == -r:
        return x0
    y = x0 / r
    if y > _ATANH_CLIP:
        y = _ATANH_CLIP
    elif y < -_ATANH_CLIP:
        y = -_ATANH_CLIP
    x = r * math.tanh(c * tau / r + math.atanh(y))
    if x > r:
        return r
    if x < -r:
        return -r
    return x


def _integrate_saturating(x0: float, s: float, b: float, q: float,
                          normalizer: float, r_bound: float, tau: float,
                          tol: float, max_steps: int) -> float:
    """Adaptive step-doubling RK4 for dx/dt = (1-x^2/R^2)(s + b x + q x^2)/norm.

    One full RK4 step is compared against two half steps; the Richardson
    difference drives both acceptance (local error <= tol relative) and the
    next step size. The accepted value is the extrapolated one.
    """
    r = r_bound
    if abs(x0) > r:
        raise StateCorruptionError(f"|x0|={abs(x0)} exceeds R={r}")
    if x0 == r or x0 == -r:
        return x0
    if s == 0.0 and b == 0.0 and q == 0.0:
        return x0

    inv_norm = 1.0 / normalizer
    inv_r2 = 1.0 / (r * r)

    def rk4(x: float, h: float) -> float:
        # drift inlined per stage; this is the hottest loop in the package
        k1 = (1.0 - x * x * inv_r2) * (s + x * (b + q * x)) * inv_norm
        y = x + 0.5 * h * k1
        k2 = (1.0 - y * y * inv_r2) * (s + y * (b + q * y)) * inv_norm
        y = x + 0.5 * h * k2
        k3 = (1.0 - y * y * inv_r2) * (s + y * (b + q * y)) * inv_norm
        y = x + h * k3
        k4 = (1.0 - y * y * inv_r2) * (s + y * (b + q * y)) * inv_norm
        return x + h * (k1 + 2.0 * (k2 + k3) + k4) / 6.0

    t = 0.0
    x = x0
    h = tau
    steps = 0
    while t < tau:
        if steps >= max_steps:
            raise IntegrationError(
                f"step cap {max_steps} exceeded at t={t} of tau={tau}")
        steps += 1
        if h > tau - t:
            h = tau - t
        # keep |h f'(x)| small: in the saturating tail the drift decays
        # exponentially and unconstrained step growth would push RK4 out of
        # its asymptotic regime, where step doubling underestimates the error
        lam = abs(((-2.0 * x * inv_r2) * (s + x * (b + q * x))
                   + (1.0 - x * x * inv_r2) * (b + 2.0 * q * x)) * inv_norm)
        if h * lam > 1.5:
            h = 1.5 / lam
        big = rk4(x, h)
        half = rk4(x, 0.5 * h)
        small = rk4(half, 0.5 * h)
        err = abs(small - big) / 15.0
        drift0 = (1.0 - x * x * inv_r2) * (s + x * (b + q * x)) * inv_norm
        scale = abs(x) + abs(h * drift0) + 1e-30
        if err <= tol * scale:
            t += h
            x = small + (small - big) / 15.0
            if err == 0.0:
                h *= 5.0
            else:
                h *= min(5.0, 0.9 * (tol * scale / err) ** 0.2)
        else:
            h *= max(0.2, 0.9 * (tol * scale / err) ** 0.2)
    if x > r:
        return r
    if x < -r:
        return -r
    return x


def evolve_link_numeric(x0: float, coeff: LinkCoefficients, tau: float,
                        r_bound: float, tol: float = DEFAULT_TOL,
                        max_steps: int = DEFAULT_MAX_STEPS) -> float:
    """Numerically evolve one link under drift (1-x^2/R^2)(s + b x)/norm."""
    return _integrate_saturating(x0, coeff.s_const, coeff.b_linear, 0.0,
                                 coeff.normalizer, r_bound, tau, tol,
                                 max_steps)


def evolve_self_loop(x0: float, state: WeightState, i: int, tau: float,
                     spec: ModelSpec, tol: float = DEFAULT_TOL,
                     max_steps: int = DEFAULT_MAX_STEPS) -> float:
    """Evolve diagonal entry x_ii for duration tau (self-loop variant).

    The frozen-environment drift is (1/N)(1 - x^2/R^2)(S + x^2) with
    S = sum_{k != i} x_ik^2 >= 0, so the diagonal never decreases while
    inside (-R, R).
    """
    if spec.variant is not Variant.SELF_LOOPS:
        raise ValueError("self-loop evolution requires the self-loop variant")
    row = state.weights[i]
    s = float(row.dot(row)) - float(row[i]) ** 2
    return _integrate_saturating(x0, s, 0.0, 1.0, float(spec.n), spec.r_bound,
                                 tau, tol, max_steps)


def _aggregate_drift(w: np.ndarray, spec: ModelSpec, inv_r2: float) -> np.ndarray:
    f = (w @ w) * (1.0 - w * w * inv_r2) / spec.normalizer
    if spec.variant is Variant.NO_SELF_LOOPS:
        np.fill_diagonal(f, 0.0)
    return f


def _resymmetrize(w: np.ndarray) -> np.ndarray:
    upper = np.triu(w, 1)
    return upper + upper.T + np.diag(np.diagonal(w))


def integrate_aggregate(state: WeightState, spec: ModelSpec, t_end: float,
                        dt: float, sample_interval: Optional[float] = None,
                        ) -> list[tuple[float, WeightState]]:
    """Evolve all links simultaneously with fixed-step classical RK4.

    Reference dynamics for the tau -> 0 limit of the temporal scheme; not
    used on the main experiment path. Returns (t, state) snapshots at t=0,
    at every multiple of ``sample_interval`` (which must be an integer
    multiple of dt), and at t_end. With ``sample_interval=None`` only the
    endpoints are kept. Weights are clamped to [-R, R] and re-mirrored from
    the upper triangle after every step so symmetry stays exact.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end < 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    if state.has_diagonal != (spec.variant is Variant.SELF_LOOPS):
        raise ValueError("state diagonal presence must match the model variant")
    if sample_interval is not None:
        ratio = sample_interval / dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("sample_interval must be an integer multiple of dt")
        sample_every = int(round(ratio))
    else:
        sample_every = 0

    r = spec.r_bound
    inv_r2 = 1.0 / (r * r)
    w = state.weights.copy()
    has_diag = state.has_diagonal
    n_steps = int(math.ceil(t_end / dt - 1e-12)) if t_end > 0 else 0

    def snapshot(t: float) -> tuple[float, WeightState]:
        snap = WeightState.__new__(WeightState)
        snap.n = state.n
        snap.has_diagonal = has_diag
        snap.weights = w.copy()
        return (t, snap)

    trajectory = [snapshot(0.0)]
    for step in range(1, n_steps + 1):
        h = dt if step < n_steps else t_end - (n_steps - 1) * dt
        k1 = _aggregate_drift(w, spec, inv_r2)
        k2 = _aggregate_drift(w + 0.5 * h * k1, spec, inv_r2)
        k3 = _aggregate_drift(w + 0.5 * h * k2, spec, inv_r2)
        k4 = _aggregate_drift(w + h * k3, spec, inv_r2)
        w = w + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        np.clip(w, -r, r, out=w)
        w = _resymmetrize(w)
        if step == n_steps:
            trajectory.append(snapshot(t_end))
        elif sample_every and step % sample_every == 0:
            trajectory.append(snapshot(step * dt))
    return trajectory

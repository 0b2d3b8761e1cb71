"""Sign classification and unbalanced-triad bookkeeping.

Link signs use a three-valued rule with a dead zone: sgn(x) = +1 for
x >= eps, -1 for x <= -eps, 0 otherwise. A triad {i, j, k} is balanced iff
the product of its three link signs equals +1; a zero sign therefore makes
every triad through that link unbalanced. The census caches the sign of
every link and keeps the global count of unbalanced triads current in O(N)
per single-link change, which is what makes per-event termination checks
affordable.
"""

from __future__ import annotations

import numpy as np

from .dynamics import WeightState

__all__ = [
    "DEFAULT_EPSILON",
    "TriadCensus",
    "sgn_eps",
    "triad_balanced",
    "census_build",
    "census_apply_link_change",
    "is_population_balanced",
    "diagonal_nonnegative",
    "total_triads",
]

DEFAULT_EPSILON = 1e-6


def sgn_eps(x: float, epsilon: float) -> int:
    """Three-valued sign with dead zone |x| < epsilon; boundaries inclusive."""
    if x >= epsilon:
        return 1
    if x <= -epsilon:
        return -1
    return 0


def triad_balanced(s1: int, s2: int, s3: int) -> bool:
    """A triad is balanced iff its sign product is exactly +1."""
    return s1 * s2 * s3 == 1


def total_triads(n: int) -> int:
    return n * (n - 1) * (n - 2) // 6


def _sign_matrix(state: WeightState, epsilon: float) -> np.ndarray:
    w = state.weights
    signs = np.zeros(w.shape, dtype=np.int8)
    signs[w >= epsilon] = 1
    signs[w <= -epsilon] = -1
    np.fill_diagonal(signs, 0)  # diagonal entries are not links
    return signs


def _count_unbalanced(signs: np.ndarray) -> int:
    """Full enumeration of unbalanced triads from a sign matrix.

    Vectorized per leading node: for each i the (j, k) block with j, k > i
    gives all triads {i, j, k} with i < j < k exactly once.
    """
    n = signs.shape[0]
    balanced = 0
    for i in range(n - 2):
        v = signs[i, i + 1:]
        block = signs[i + 1:, i + 1:]
        prod = v[:, None] * block * v[None, :]
        balanced += int(np.count_nonzero(np.triu(prod, 1) == 1))
    return total_triads(n) - balanced


class TriadCensus:
    """Cached link signs plus the running count of unbalanced triads."""

    __slots__ = ("n", "epsilon", "signs", "unbalanced_count", "total_triads")

    def __init__(self, n: int, epsilon: float, signs: np.ndarray,
                 unbalanced_count: int):
        self.n = n
        self.epsilon = epsilon
        self.signs = signs
        self.unbalanced_count = unbalanced_count
        self.total_triads = total_triads(n)

    def unbalanced_fraction(self) -> float:
        return self.unbalanced_count / self.total_triads


def census_build(state: WeightState, epsilon: float = DEFAULT_EPSILON) -> TriadCensus:
    """Classify every link and count unbalanced triads by full enumeration."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    signs = _sign_matrix(state, epsilon)
    return TriadCensus(state.n, epsilon, signs, _count_unbalanced(signs))


def census_apply_link_change(census: TriadCensus, state: WeightState, i: int,
                             j: int, new_weight: float) -> None:
    """Update the census after link (i, j) changed to ``new_weight``.

    Only the N-2 triads through (i, j) can change class. Reclassifies them
    under the old and new sign in O(N) and adjusts the running count by the
    difference; a sign-preserving change costs O(1).
    """
    if i == j:
        raise ValueError("diagonal entries are not links")
    new_s = sgn_eps(new_weight, census.epsilon)
    signs = census.signs
    old_s = int(signs[i, j])
    if new_s == old_s:
        return
    # v[k] = s_ik * s_jk; the k=i and k=j entries are 0 (diagonal cache is 0)
    # and contribute one spurious "unbalanced" to both counts, so they cancel.
    v = signs[i] * signs[j]
    old_unb = int(np.count_nonzero(old_s * v != 1))
    new_unb = int(np.count_nonzero(new_s * v != 1))
    census.unbalanced_count += new_unb - old_unb
    signs[i, j] = new_s
    signs[j, i] = new_s


def is_population_balanced(census: TriadCensus) -> bool:
    return census.unbalanced_count == 0


def diagonal_nonnegative(state: WeightState, epsilon: float) -> bool:
    """True iff every diagonal entry is >= epsilon (self-loop variant only)."""
    diag = state.diagonal()
    if diag is None:
        raise ValueError("state has no diagonal entries")
    return bool(np.all(diag >= epsilon))


def verify_consistency(census: TriadCensus, state: WeightState) -> None:
    """Shadow check: recount from scratch and compare against the cache."""
    fresh = census_build(state, census.epsilon)
    if not np.array_equal(fresh.signs, census.signs):
        raise AssertionError("sign cache inconsistent with state")
    if fresh.unbalanced_count != census.unbalanced_count:
        raise AssertionError(
            f"incremental count {census.unbalanced_count} != "
            f"recount {fresh.unbalanced_count}")

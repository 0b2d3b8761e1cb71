import numpy as np
import pytest

from temporal_balance.census import (
    census_apply_link_change,
    census_build,
    diagonal_nonnegative,
    is_population_balanced,
    sgn_eps,
    total_triads,
    triad_balanced,
    verify_consistency,
)
from temporal_balance.dynamics import WeightState, init_weights

from oracles import brute_force_unbalanced

EPS = 1e-6
R = 10.0


def make_state(matrix, has_diagonal=False):
    m = np.asarray(matrix, dtype=np.float64)
    return WeightState(m.shape[0], m, has_diagonal=has_diagonal)


def random_state(n, rng, dead_zone_fraction=0.1):
    """Random weights with a controlled share of dead-zone values."""
    w = rng.normal(0.0, 1.0, size=(n, n))
    dead = rng.random(size=(n, n)) < dead_zone_fraction
    w[dead] = rng.uniform(-0.5 * EPS, 0.5 * EPS, size=int(dead.sum()))
    w = np.triu(w, 1)
    w = w + w.T
    return make_state(w)


class TestSgnEps:
    @pytest.mark.parametrize("x,expected", [
        (0.5, 1),
        (1e-6, 1),        # boundary is inclusive
        (-1e-6, -1),      # boundary is inclusive
        (5e-7, 0),
        (-5e-7, 0),
        (-0.5, -1),
        (0.0, 0),
    ])
    def test_three_branch_rule(self, x, expected):
        assert sgn_eps(x, EPS) == expected

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            census_build(make_state(np.zeros((3, 3))), epsilon=0.0)


class TestTriadBalanced:
    @pytest.mark.parametrize("signs,expected", [
        ((1, 1, 1), True),
        ((1, 1, -1), False),
        ((-1, -1, 1), True),
        ((-1, -1, -1), False),
        ((0, 1, 1), False),
        ((0, 0, 0), False),
    ])
    def test_truth_table(self, signs, expected):
        assert triad_balanced(*signs) is expected


class TestCensusBuild:
    def test_total_triads_at_200(self):
        state = make_state(np.zeros((200, 200)))
        census = census_build(state, EPS)
        assert census.total_triads == 1_313_400
        assert total_triads(200) == 1_313_400
        # all-zero weights: every triad has a 0 sign, all unbalanced
        assert census.unbalanced_count == census.total_triads

    def test_all_positive_saturated_is_balanced(self):
        w = np.full((50, 50), R)
        np.fill_diagonal(w, 0.0)
        census = census_build(make_state(w), EPS)
        assert census.unbalanced_count == 0

    def test_centered_gaussian_fraction_half(self):
        state = init_weights(200, 0.0, 1.0, False, np.random.default_rng(8), R)
        census = census_build(state, EPS)
        assert abs(census.unbalanced_fraction() - 0.5) <= 0.01

    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            state = random_state(12, rng)
            census = census_build(state, EPS)
            assert census.unbalanced_count == \
                brute_force_unbalanced(state.weights, EPS)

    def test_diagonal_ignored_for_triads(self):
        rng = np.random.default_rng(18)
        plain = random_state(10, rng)
        with_diag = plain.copy()
        with_diag.has_diagonal = True
        for i in range(10):
            with_diag.weights[i, i] = -3.0
        assert census_build(plain, EPS).unbalanced_count == \
            census_build(with_diag, EPS).unbalanced_count


class TestIncrementalUpdate:
    def test_sign_preserving_change_is_noop(self):
        rng = np.random.default_rng(23)
        state = random_state(8, rng, dead_zone_fraction=0.0)
        census = census_build(state, EPS)
        before = census.unbalanced_count
        signs_before = census.signs.copy()
        new = state.weights[2, 5] * 2.0  # same sign, different magnitude
        state.set_link(2, 5, new)
        census_apply_link_change(census, state, 2, 5, new)
        assert census.unbalanced_count == before
        assert np.array_equal(census.signs, signs_before)

    def test_triangle_flip(self):
        w = np.ones((3, 3))
        np.fill_diagonal(w, 0.0)
        state = make_state(w)
        census = census_build(state, EPS)
        assert census.unbalanced_count == 0
        state.set_link(0, 1, -1.0)
        census_apply_link_change(census, state, 0, 1, -1.0)
        assert census.unbalanced_count == 1

    def test_random_flips_match_recount(self):
        rng = np.random.default_rng(29)
        n = 30
        state = random_state(n, rng)
        census = census_build(state, EPS)
        for step in range(10_000):
            i = int(rng.integers(0, n))
            j = int(rng.integers(0, n - 1))
            if j >= i:
                j += 1
            new = float(rng.normal(0.0, 1.0))
            if rng.random() < 0.05:
                new = float(rng.uniform(-EPS, EPS))
            state.set_link(i, j, new)
            census_apply_link_change(census, state, i, j, new)
            if step % 500 == 0:
                assert census.unbalanced_count == \
                    census_build(state, EPS).unbalanced_count
        verify_consistency(census, state)
        assert census.unbalanced_count == \
            brute_force_unbalanced(state.weights, EPS)

    def test_count_stays_in_bounds(self):
        rng = np.random.default_rng(31)
        n = 10
        state = random_state(n, rng)
        census = census_build(state, EPS)
        for _ in range(2000):
            i = int(rng.integers(0, n))
            j = int(rng.integers(0, n - 1))
            if j >= i:
                j += 1
            new = float(rng.normal(0.0, 1.0))
            state.set_link(i, j, new)
            census_apply_link_change(census, state, i, j, new)
            assert 0 <= census.unbalanced_count <= census.total_triads

    def test_rejects_diagonal(self):
        state = random_state(5, np.random.default_rng(0))
        census = census_build(state, EPS)
        with pytest.raises(ValueError):
            census_apply_link_change(census, state, 3, 3, 1.0)

    def test_verify_consistency_detects_corruption(self):
        state = random_state(8, np.random.default_rng(1))
        census = census_build(state, EPS)
        census.unbalanced_count += 1
        with pytest.raises(AssertionError):
            verify_consistency(census, state)


class TestPredicates:
    def test_balanced_saturated(self):
        w = np.full((10, 10), R)
        np.fill_diagonal(w, 0.0)
        assert is_population_balanced(census_build(make_state(w), EPS))

    def test_dead_zone_link_blocks_balance(self):
        w = np.full((10, 10), R)
        np.fill_diagonal(w, 0.0)
        w[0, 1] = w[1, 0] = 0.5 * EPS
        assert not is_population_balanced(census_build(make_state(w), EPS))

    def test_random_start_unbalanced(self):
        state = init_weights(200, 0.0, 1.0, False, np.random.default_rng(2), R)
        assert not is_population_balanced(census_build(state, EPS))

    def test_diagonal_nonnegative(self):
        w = np.full((5, 5), R)
        state = make_state(w, has_diagonal=True)
        assert diagonal_nonnegative(state, EPS)
        state.set_diagonal(2, 0.0)
        assert not diagonal_nonnegative(state, EPS)
        for i in range(5):
            state.set_diagonal(i, EPS)  # boundary inclusive
        assert diagonal_nonnegative(state, EPS)

    def test_diagonal_check_requires_diagonal(self):
        state = random_state(5, np.random.default_rng(3))
        with pytest.raises(ValueError):
            diagonal_nonnegative(state, EPS)


class TestInvariantProperties:
    def test_permutation_invariance(self):
        rng = np.random.default_rng(37)
        state = random_state(15, rng)
        count = census_build(state, EPS).unbalanced_count
        for _ in range(5):
            perm = rng.permutation(15)
            relabeled = make_state(state.weights[np.ix_(perm, perm)])
            assert census_build(relabeled, EPS).unbalanced_count == count

    def test_epsilon_independence_at_absorption(self):
        # a balanced configuration with |x| >= eps everywhere classifies the
        # same under every smaller threshold
        rng = np.random.default_rng(41)
        n = 12
        signs = np.sign(rng.normal(size=n))  # split into two factions
        w = np.outer(signs, signs) * rng.uniform(0.5, R, size=(n, n))
        w = np.triu(w, 1)
        w = w + w.T
        state = make_state(w)
        census = census_build(state, EPS)
        assert census.unbalanced_count == 0
        min_abs = np.abs(w[np.triu_indices(n, 1)]).min()
        for eps_prime in (1e-12, 1e-9, EPS, 0.1, min_abs):
            other = census_build(state, eps_prime)
            assert other.unbalanced_count == 0
            assert np.array_equal(other.signs, census.signs)

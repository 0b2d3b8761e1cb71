import math

import numpy as np
import pytest

from temporal_balance.census import census_build
from temporal_balance.dynamics import (
    ModelSpec,
    StateCorruptionError,
    Variant,
    WeightState,
    init_weights,
)
from temporal_balance.schedulers import (
    RunState,
    Scheduler,
    SchedulerKind,
    apply_event,
    link_count,
    next_pair,
    run_single,
    selectable_link_count,
)

EPS = 1e-6
R = 10.0
WITH = SchedulerKind.WITH_REPLACEMENT
WITHOUT = SchedulerKind.WITHOUT_REPLACEMENT


def make_state(matrix, has_diagonal=False):
    m = np.asarray(matrix, dtype=np.float64)
    return WeightState(m.shape[0], m, has_diagonal=has_diagonal)


def fresh_run_state(n, kind, tau=1.0, variant=Variant.NO_SELF_LOOPS, seed=0):
    rng = np.random.default_rng(seed)
    state = init_weights(n, 0.0, 1.0, variant is Variant.SELF_LOOPS, rng, R)
    census = census_build(state, EPS)
    return RunState(state, census, Scheduler(kind, tau), rng, variant)


class TestLinkSets:
    def test_counts(self):
        assert link_count(200) == 19900
        assert selectable_link_count(200, Variant.NO_SELF_LOOPS) == 19900
        assert selectable_link_count(200, Variant.SELF_LOOPS) == 20100

    def test_triangle_draws_only_distinct_pairs(self):
        rs = fresh_run_state(3, WITH)
        pairs = {next_pair(rs) for _ in range(200)}
        assert pairs == {(0, 1), (0, 2), (1, 2)}

    def test_self_pairs_included_for_self_loops(self):
        rs = fresh_run_state(4, WITH, variant=Variant.SELF_LOOPS, seed=3)
        pairs = {next_pair(rs) for _ in range(500)}
        assert (0, 0) in pairs and (3, 3) in pairs
        assert len(pairs) == selectable_link_count(4, Variant.SELF_LOOPS)

    def test_scheduler_requires_positive_tau(self):
        with pytest.raises(ValueError):
            Scheduler(WITH, 0.0)


class TestWithoutReplacement:
    def test_each_round_is_a_permutation(self):
        n = 30
        m = link_count(n)
        rs = fresh_run_state(n, WITHOUT, seed=5)
        orderings = []
        for _ in range(5):
            seq = [next_pair(rs) for _ in range(m)]
            assert len(set(seq)) == m  # every link exactly once
            orderings.append(tuple(seq))
        assert len(set(orderings)) >= 2  # rounds are reshuffled

    def test_cursor_resets_at_round_boundary(self):
        n = 5
        m = link_count(n)
        rs = fresh_run_state(n, WITHOUT, seed=6)
        for _ in range(m):
            next_pair(rs)
        assert rs.permutation_cursor == m
        next_pair(rs)
        assert rs.permutation_cursor == 1


class TestWithReplacement:
    def test_uniformity_chi_square(self):
        n = 200
        m = link_count(n)
        rs = fresh_run_state(n, WITH, seed=7)
        draws = 1_000_000
        counts = np.zeros(m, dtype=np.int64)
        for _ in range(draws):
            i, j = next_pair(rs)
            counts[i * n - i * (i + 1) // 2 + (j - i - 1)] += 1
        expected = draws / m
        chi2 = float(np.sum((counts - expected) ** 2) / expected)
        dof = m - 1
        assert abs(chi2 - dof) <= 5.0 * math.sqrt(2.0 * dof)

    def test_draws_independent_of_history(self):
        rs1 = fresh_run_state(10, WITH, seed=8)
        rs2 = fresh_run_state(10, WITH, seed=8)
        assert [next_pair(rs1) for _ in range(100)] == \
            [next_pair(rs2) for _ in range(100)]


class TestApplyEvent:
    def test_zero_field_event_only_advances_clock(self):
        w = np.zeros((4, 4))
        w[0, 1] = w[1, 0] = 1.0  # isolated link: its local field is zero
        state = make_state(w)
        census = census_build(state, EPS)
        rs = RunState(state, census, Scheduler(WITH, 0.5),
                      np.random.default_rng(0), Variant.NO_SELF_LOOPS)
        before = state.weights.copy()
        apply_event(rs, (0, 1), ModelSpec(Variant.NO_SELF_LOOPS, R, 4))
        assert np.array_equal(state.weights, before)
        assert rs.event_count == 1
        assert rs.clock == 0.5

    def test_saturated_link_is_fixed(self):
        w = np.full((4, 4), R)
        np.fill_diagonal(w, 0.0)
        state = make_state(w)
        census = census_build(state, EPS)
        rs = RunState(state, census, Scheduler(WITH, 2.0),
                      np.random.default_rng(0), Variant.NO_SELF_LOOPS)
        apply_event(rs, (1, 2), ModelSpec(Variant.NO_SELF_LOOPS, R, 4))
        assert state.weights[1, 2] == R

    def test_census_tracks_with_shadow_recount(self):
        spec = ModelSpec(Variant.NO_SELF_LOOPS, R, 10)
        initial = init_weights(10, 0.0, 1.0, False, np.random.default_rng(9), R)
        # shadow check raises internally on any census drift
        run_single(initial, spec, Scheduler(WITH, 0.5),
                   np.random.default_rng(10), epsilon=EPS, t_max=500.0,
                   shadow_check_every=50)

    def test_self_pair_event_moves_diagonal_only(self):
        spec = ModelSpec(Variant.SELF_LOOPS, R, 5)
        state = init_weights(5, 1.0, 1.0, True, np.random.default_rng(11), R)
        census = census_build(state, EPS)
        rs = RunState(state, census, Scheduler(WITH, 1.0),
                      np.random.default_rng(0), Variant.SELF_LOOPS)
        off_diag_before = state.weights.copy()
        x_before = state.weights[2, 2]
        apply_event(rs, (2, 2), spec)
        assert state.weights[2, 2] >= x_before
        off_diag_after = state.weights.copy()
        np.fill_diagonal(off_diag_before, 0.0)
        np.fill_diagonal(off_diag_after, 0.0)
        assert np.array_equal(off_diag_before, off_diag_after)


class TestRunSingle:
    def spec(self, n, variant=Variant.NO_SELF_LOOPS):
        return ModelSpec(variant, R, n)

    def test_pre_balanced_start_finishes_after_first_event(self):
        w = np.full((8, 8), R)
        np.fill_diagonal(w, 0.0)
        out = run_single(make_state(w), self.spec(8), Scheduler(WITH, 0.5),
                         np.random.default_rng(1), epsilon=EPS, t_max=100.0)
        assert out.finished
        assert out.t_balance == 0.5
        assert out.event_count == 1
        assert np.all(out.timecourse == 0)

    def test_cap_marks_unfinished(self):
        initial = init_weights(10, 0.0, 1.0, False, np.random.default_rng(2), R)
        out = run_single(initial, self.spec(10), Scheduler(WITH, 1.0),
                         np.random.default_rng(3), epsilon=EPS, t_max=5.0)
        assert not out.finished
        assert out.t_balance is None
        assert out.event_count == 5  # events only while (k+1) tau <= t_max

    def test_deterministic_bit_for_bit(self):
        initial = init_weights(15, 0.5, 1.0, False, np.random.default_rng(4), R)
        outs = [
            run_single(initial, self.spec(15), Scheduler(WITHOUT, 0.2),
                       np.random.default_rng(99), epsilon=EPS, t_max=1e5,
                       keep_final_state=True)
            for _ in range(2)
        ]
        assert outs[0].finished == outs[1].finished
        assert outs[0].t_balance == outs[1].t_balance
        assert np.array_equal(outs[0].timecourse, outs[1].timecourse)
        assert np.array_equal(outs[0].final_state.weights,
                              outs[1].final_state.weights)

    def test_clock_is_exact_multiple_of_tau(self):
        initial = init_weights(10, 1.0, 1.0, False, np.random.default_rng(5), R)
        tau = 0.1
        out = run_single(initial, self.spec(10), Scheduler(WITH, tau),
                         np.random.default_rng(6), epsilon=EPS, t_max=1e5)
        assert out.finished
        assert out.t_balance == out.event_count * tau  # product, not a sum

    def test_sampling_grid_for_quiet_system(self):
        # all weights in the dead zone: zero drift, counts never change
        w = np.full((5, 5), 1e-9)
        np.fill_diagonal(w, 0.0)
        state = make_state(w)
        out = run_single(state, self.spec(5), Scheduler(WITH, 3.0),
                         np.random.default_rng(7), epsilon=EPS, t_max=10.0,
                         sample_interval=2.0)
        # samples at t = 0, 2, 4, 6, 8, 10; events at 3, 6, 9
        assert len(out.timecourse) == 6
        assert np.all(out.timecourse == out.timecourse[0])
        assert out.event_count == 3

    def test_finished_timecourse_ends_at_balance(self):
        initial = init_weights(12, 1.0, 1.0, False, np.random.default_rng(8), R)
        out = run_single(initial, self.spec(12), Scheduler(WITH, 0.1),
                         np.random.default_rng(9), epsilon=EPS, t_max=1e5,
                         sample_interval=1.0)
        assert out.finished
        expected_len = int(out.t_balance // 1.0) + 1
        assert len(out.timecourse) == expected_len
        assert out.timecourse[-1] == 0 or out.t_balance % 1.0 != 0.0

    def test_absorbing_after_balance(self):
        spec = self.spec(15)
        m = link_count(15)
        initial = init_weights(15, 0.0, 1.0, False, np.random.default_rng(10), R)
        out = run_single(initial, spec, Scheduler(WITH, 0.1),
                         np.random.default_rng(11), epsilon=EPS, t_max=1e5,
                         keep_final_state=True)
        assert out.finished
        state = out.final_state
        census = census_build(state, EPS)
        rs = RunState(state, census, Scheduler(WITH, 0.1),
                      np.random.default_rng(12), Variant.NO_SELF_LOOPS)
        for _ in range(10 * m):
            apply_event(rs, next_pair(rs), spec)
            assert census.unbalanced_count == 0

    def test_self_loop_termination_requires_diagonal(self):
        spec = self.spec(10, Variant.SELF_LOOPS)
        initial = init_weights(10, 1.0, 1.0, True, np.random.default_rng(13), R)
        initial.set_diagonal(4, -3.0)  # must rise to >= eps before stopping
        out = run_single(initial, spec, Scheduler(WITH, 0.5),
                         np.random.default_rng(14), epsilon=EPS, t_max=1e6,
                         keep_final_state=True)
        assert out.finished
        assert np.all(out.final_state.diagonal() >= EPS)
        assert census_build(out.final_state, EPS).unbalanced_count == 0

    def test_variant_state_mismatch_rejected(self):
        initial = init_weights(10, 0.0, 1.0, False, np.random.default_rng(1), R)
        with pytest.raises(ValueError):
            run_single(initial, self.spec(10, Variant.SELF_LOOPS),
                       Scheduler(WITH, 0.5), np.random.default_rng(2),
                       epsilon=EPS, t_max=10.0)

    def test_corrupt_state_raises(self):
        w = np.full((5, 5), 11.0)  # outside [-R, R]
        np.fill_diagonal(w, 0.0)
        with pytest.raises(StateCorruptionError):
            run_single(make_state(w), self.spec(5), Scheduler(WITH, 0.5),
                       np.random.default_rng(3), epsilon=EPS, t_max=10.0)

    def test_invalid_arguments(self):
        initial = init_weights(5, 0.0, 1.0, False, np.random.default_rng(4), R)
        with pytest.raises(ValueError):
            run_single(initial, self.spec(5), Scheduler(WITH, 1.0),
                       np.random.default_rng(5), epsilon=EPS, t_max=0.0)
        with pytest.raises(ValueError):
            run_single(initial, self.spec(5), Scheduler(WITH, 1.0),
                       np.random.default_rng(5), epsilon=EPS, t_max=10.0,
                       sample_interval=0.0)

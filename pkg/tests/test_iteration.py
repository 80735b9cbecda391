"""Forward/backward iteration in the mixture basis vs the atomic oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kingman import (
    DegenerateMeasureError,
    MixtureMeasure,
    MomentSequence,
    MutationPath,
    atomic_iterate,
    backward_sequence,
    coefficient_expansion,
    forward_step,
    forward_step_atomic,
    terminal_gap,
)


def random_atomic(rng, n_pts):
    xs = np.sort(rng.uniform(0.05, 1.0, size=n_pts))
    while len(np.unique(xs)) != n_pts:
        xs = np.sort(rng.uniform(0.05, 1.0, size=n_pts))
    ws = rng.dirichlet(np.ones(n_pts))
    ws = [float(w) for w in ws]
    ws[-1] = 1.0 - math.fsum(ws[:-1])
    return MomentSequence.atomic(list(zip(xs, ws)))


class TestForwardStep:
    def test_single_step_from_q(self):
        q = MomentSequence.uniform()
        p = forward_step(MixtureMeasure.from_basis(q), 0.3)
        assert p.condensate == 0.0
        assert p.coeffs[0] == pytest.approx(0.3, abs=1e-15)
        assert p.coeffs[1] == pytest.approx(0.7, abs=1e-15)

    def test_point_mass_is_fixed_by_selection(self):
        q = MomentSequence.uniform()
        p = forward_step(MixtureMeasure.point_mass(q, 1.0), 0.25)
        assert p.condensate == pytest.approx(0.75, abs=1e-15)
        assert p.coeffs[0] == pytest.approx(0.25, abs=1e-15)

    def test_zero_mean_rejected(self):
        # a basis cannot have zero mean, so drive the mean to zero via h -> 0
        q = MomentSequence.atomic([(0.5, 1.0)])
        p = MixtureMeasure.from_basis(q)
        ok = forward_step(p, 0.0)
        assert ok.total_mass == pytest.approx(1.0)
        with pytest.raises(ValueError):
            forward_step(p, 1.0)  # b = 1 outside [0, 1)

    @given(st.lists(st.floats(0.0, 0.95), min_size=1, max_size=12))
    @settings(max_examples=50, deadline=None)
    def test_mass_conserved_along_paths(self, bs):
        q = MomentSequence.poly_decay(2)
        p = MixtureMeasure.from_basis(q)
        for b in bs:
            p = forward_step(p, b)
        assert p.total_mass == pytest.approx(1.0, abs=1e-12)

    def test_two_steps_match_atomic_oracle(self):
        q = MomentSequence.atomic([(0.25, 0.25), (0.5, 0.25), (1.0, 0.5)])
        mix = MixtureMeasure.from_basis(q)
        for b in (0.5, 0.5):
            mix = forward_step(mix, b)
        direct = atomic_iterate(q.as_atomic(), MutationPath(np.array([0.5, 0.5])), q)
        assert mix.as_atomic().tv_distance(direct) < 1e-14


class TestBackwardSequence:
    def test_empty_path(self):
        q = MomentSequence.uniform()
        terminal = MixtureMeasure.from_basis(q)
        assert backward_sequence(MutationPath(np.zeros(0)), terminal) == [terminal]

    def test_single_step(self):
        q = MomentSequence.uniform()
        seq = backward_sequence(MutationPath(np.array([0.4])),
                                MixtureMeasure.from_basis(q))
        last = seq[-1]
        assert last.coeffs[0] == pytest.approx(0.4, abs=1e-15)
        assert last.coeffs[1] == pytest.approx(0.6, abs=1e-15)

    def test_monotone_domination_atomic(self):
        # with the basis terminal, deeper recursions dominate stochastically
        q = MomentSequence.atomic([(0.3, 0.4), (0.6, 0.3), (0.9, 0.3)])
        rng = np.random.default_rng(5)
        bs = rng.uniform(0.2, 0.8, size=9)
        grid = np.array([x for x, _ in q.points])
        prev = None
        for n in range(1, 10):
            state = backward_sequence(MutationPath(bs[:n][::-1].copy()),
                                      MixtureMeasure.from_basis(q))[-1]
            cdf = state.as_atomic().cdf(grid)
            if prev is not None:
                assert np.all(cdf <= prev + 1e-12)
            prev = cdf

    def test_monotone_domination_parametric_moments(self):
        # moment dominance as the stochastic-order proxy for densities
        q = MomentSequence.uniform()
        rng = np.random.default_rng(6)
        bs = rng.uniform(0.2, 0.8, size=8)
        prev = None
        for n in range(1, 9):
            state = backward_sequence(MutationPath(bs[:n][::-1].copy()),
                                      MixtureMeasure.from_basis(q))[-1]
            moments = np.array([state.moment(k) for k in range(1, 65)])
            if prev is not None:
                assert np.all(moments >= prev - 1e-12)
            prev = moments


class TestAtomicOracle:
    def test_empty_path_identity(self):
        q = MomentSequence.atomic([(0.5, 0.5), (1.0, 0.5)])
        p0 = q.as_atomic()
        assert atomic_iterate(p0, MutationPath(np.zeros(0)), q) is p0

    def test_cross_oracle_long_path(self):
        rng = np.random.default_rng(17)
        q = random_atomic(rng, 8)
        bs = rng.uniform(0.0, 0.9, size=15)
        mix = MixtureMeasure.from_basis(q)
        for b in bs:
            mix = forward_step(mix, b)
        direct = atomic_iterate(q.as_atomic(), MutationPath(bs), q)
        assert mix.as_atomic().tv_distance(direct) < 1e-12


class TestCoefficientExpansion:
    def test_first_entry_is_b(self):
        q = MomentSequence.uniform()
        path = MutationPath(np.array([0.2, 0.5, 0.8]))
        rows = coefficient_expansion(q, path)
        for j in range(3):
            assert rows[j][0] == pytest.approx(path.values[j], abs=1e-15)

    def test_last_step_weight(self):
        # one step before the terminal: the nontrivial weight is 1 - b_n
        q = MomentSequence.poly_decay(1)
        path = MutationPath(np.array([0.35]))
        rows = coefficient_expansion(q, path)
        assert rows[0][1] == pytest.approx(0.65, abs=1e-14)

    def test_rows_match_backward_sequence(self):
        q = MomentSequence.uniform()
        path = MutationPath(np.array([j / 10 for j in range(1, 7)]))
        rows = coefficient_expansion(q, path)
        seq = backward_sequence(path, MixtureMeasure.from_basis(q))
        for j in range(7):
            got = seq[6 - j].coeffs
            assert np.max(np.abs(got - rows[j])) < 1e-12
            assert rows[j].sum() == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.floats(0.05, 0.9), min_size=2, max_size=10))
    @settings(max_examples=30, deadline=None)
    def test_rows_sum_to_one(self, bs):
        q = MomentSequence.poly_decay(2)
        rows = coefficient_expansion(q, MutationPath(np.array(bs)))
        for row in rows:
            assert row.sum() == pytest.approx(1.0, abs=1e-12)


class TestTerminalGap:
    def test_reports_both_limits(self):
        q = MomentSequence.uniform()
        rng = np.random.default_rng(2)
        out = terminal_gap(q, MutationPath(rng.uniform(0.3, 0.8, size=40)), h=1.0)
        assert out["moment_gaps"].shape == (8,)
        assert out["condensate_gap"] >= 0.0

    def test_gaps_shrink_with_depth(self):
        q = MomentSequence.uniform()
        rng = np.random.default_rng(3)
        bs = rng.uniform(0.3, 0.8, size=60)
        short = terminal_gap(q, MutationPath(bs[:10]), h=1.0)
        long = terminal_gap(q, MutationPath(bs), h=1.0)
        assert long["moment_gaps"][0] < short["moment_gaps"][0]

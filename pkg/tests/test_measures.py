"""Moment sequences, atomic measures, and mixture representations."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kingman import (
    AtomicMeasure,
    IncompatibleMeasureError,
    MixtureMeasure,
    MomentSequence,
    NormalizedMoments,
    UnsupportedFamilyError,
    parse_q_spec,
    tv_distance_atomic,
)


def atomic_points(min_size=2, max_size=6):
    """Strategy for valid atomic support lists with exact unit mass."""
    return st.lists(
        st.tuples(st.floats(0.05, 1.0), st.floats(0.05, 1.0)),
        min_size=min_size, max_size=max_size,
        unique_by=lambda t: round(t[0], 6),
    ).map(_normalize_points)


def _normalize_points(pairs):
    total = math.fsum(w for _, w in pairs)
    pts = [(x, w / total) for x, w in pairs]
    # repair float round-off so the weights sum to 1 exactly
    xs, ws = zip(*pts)
    ws = list(ws)
    ws[-1] = 1.0 - math.fsum(ws[:-1])
    return list(zip(xs, ws))


class TestMoments:
    def test_uniform_cubed(self):
        assert MomentSequence.uniform().moment(3) == pytest.approx(0.25, abs=1e-15)

    def test_atomic_square(self):
        q = MomentSequence.atomic([(0.5, 0.5), (1.0, 0.5)])
        assert q.moment(2) == pytest.approx(0.625, abs=1e-15)

    def test_poly_decay_mean_symbolic(self):
        # oracle: integrate 3 x (1-x)^2 over [0,1] symbolically
        import sympy
        x = sympy.symbols("x")
        expected = float(sympy.integrate(3 * x * (1 - x) ** 2, (x, 0, 1)))
        assert expected == 0.25
        assert MomentSequence.poly_decay(2).moment(1) == pytest.approx(expected, abs=1e-15)

    def test_poly_decay_high_orders_symbolic(self):
        import sympy
        x = sympy.symbols("x")
        q = MomentSequence.poly_decay(3)
        for k in (2, 5, 9):
            expected = float(sympy.integrate(4 * x ** k * (1 - x) ** 3, (x, 0, 1)))
            assert q.moment(k) == pytest.approx(expected, rel=1e-14)

    def test_beta_moments_product_form(self):
        q = MomentSequence.beta(2.0, 3.0)
        want = 1.0
        for k in range(1, 8):
            want *= (2.0 + k - 1) / (5.0 + k - 1)
            assert q.moment(k) == pytest.approx(want, rel=1e-14)

    def test_moment_zero_is_one(self):
        for q in (MomentSequence.uniform(), MomentSequence.poly_decay(1),
                  MomentSequence.beta(2, 3),
                  MomentSequence.atomic([(0.3, 0.5), (0.7, 0.5)])):
            assert q.moment(0) == 1.0

    def test_cache_cap_enforced(self):
        q = MomentSequence.uniform(k_cap=32)
        with pytest.raises(ValueError):
            q.moment(33)

    def test_scaled_moments_bounded(self):
        q = MomentSequence.atomic([(0.2, 0.6), (0.4, 0.4)])
        mu = q.scaled_moments(200)
        assert np.all(mu > 0) and np.all(mu <= 1.0)
        assert np.all(np.diff(mu) <= 0)


class TestSizeBias:
    def test_uniform_first(self):
        q = MomentSequence.uniform()
        assert q.size_biased_moment(1, 1) == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_normalization(self):
        q = MomentSequence.atomic([(0.3, 0.2), (0.9, 0.8)])
        assert q.size_biased_moment(5, 0) == 1.0

    def test_uniform_l2_k2(self):
        q = MomentSequence.uniform()
        assert q.size_biased_moment(2, 2) == pytest.approx(0.6, abs=1e-15)

    @given(atomic_points())
    @settings(max_examples=40, deadline=None)
    def test_mean_increases_with_biasing(self, pts):
        q = MomentSequence.atomic(pts)
        means = [q.size_biased_moment(l, 1) for l in range(12)]
        assert all(b > a for a, b in zip(means, means[1:]))


class TestHolderChain:
    @given(st.lists(st.tuples(st.integers(1, 99), st.integers(1, 20)),
                    min_size=2, max_size=5, unique_by=lambda t: t[0]))
    @settings(max_examples=40, deadline=None)
    def test_strict_chain_exact_arithmetic(self, raw):
        # exact-rational oracle: the float chain cannot resolve strictness at
        # high order, so verify the mathematical claim with Fractions
        pts = [(Fraction(x, 100), Fraction(w)) for x, w in raw]
        total = sum(w for _, w in pts)
        pts = [(x, w / total) for x, w in pts]
        m = [sum(w * x ** k for x, w in pts) for k in range(67)]
        for j in range(1, 64):
            assert m[j + 1] / m[j + 2] < m[j] / m[j + 1] < 1 / m[1]

    def test_float_chain_resolvable_range(self):
        q = MomentSequence.atomic([(0.5, 0.5), (1.0, 0.5)])
        m = q.moments(30)
        for j in range(1, 28):
            assert m[j + 1] / m[j + 2] < m[j] / m[j + 1] < 1.0 / m[1]


class TestNormalizedMoments:
    def test_monotone_and_bounded(self):
        q = MomentSequence.atomic([(0.4, 0.5), (0.8, 0.5)])
        nm = NormalizedMoments.of(q, 64)
        assert nm.s_q == 0.8
        assert np.all(nm.values <= 1.0) and np.all(nm.values > 0)
        assert np.all(np.diff(nm.values) <= 0)
        # strictness is resolvable in doubles only while the gap to the top
        # atom's share exceeds machine precision
        assert np.all(np.diff(nm.values[:40]) < 0)

    def test_point_mass_is_constant(self):
        q = MomentSequence.atomic([(0.7, 1.0)])
        nm = NormalizedMoments.of(q, 32)
        assert np.allclose(nm.values, 1.0)


class TestMixture:
    def test_pure_condensate_moments(self):
        q = MomentSequence.uniform()
        p = MixtureMeasure.point_mass(q, 1.0)
        assert all(p.moment(k) == 1.0 for k in range(5))

    def test_q_itself(self):
        q = MomentSequence.uniform()
        p = MixtureMeasure.from_basis(q)
        assert p.moment(1) == pytest.approx(0.5, abs=1e-15)

    def test_hand_expansion(self):
        q = MomentSequence.uniform()
        p = MixtureMeasure(basis=q, h=1.0, condensate=0.5, coeffs=np.array([0.0, 0.5]))
        assert p.moment(1) == pytest.approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0), abs=1e-15)

    def test_mass_zero_moment(self):
        q = MomentSequence.poly_decay(2)
        p = MixtureMeasure(basis=q, h=1.0, condensate=0.25,
                           coeffs=np.array([0.5, 0.25]))
        assert p.moment(0) == pytest.approx(1.0, abs=1e-12)

    def test_mass_validation(self):
        q = MomentSequence.uniform()
        with pytest.raises(ValueError):
            MixtureMeasure(basis=q, h=1.0, condensate=0.5, coeffs=np.array([0.6]))

    def test_h_below_support_rejected(self):
        q = MomentSequence.uniform()
        with pytest.raises(ValueError):
            MixtureMeasure(basis=q, h=0.5, condensate=0.0, coeffs=np.array([1.0]))

    def test_trimmed_tracks_unresolved(self):
        q = MomentSequence.uniform()
        coeffs = np.array([1.0 - 1e-20, 1e-20])
        p = MixtureMeasure(basis=q, h=1.0, condensate=0.0, coeffs=coeffs).trimmed()
        assert p.unresolved == pytest.approx(1e-20)
        assert len(p.coeffs) == 1
        assert p.total_mass == pytest.approx(1.0, abs=1e-15)

    def test_json_round_trip(self):
        q = MomentSequence.atomic([(0.25, 0.5), (1.0, 0.5)])
        p = MixtureMeasure(basis=q, h=1.0, condensate=0.125,
                           coeffs=np.array([0.5, 0.375]))
        back = MixtureMeasure.from_json(p.to_json())
        assert back.basis == p.basis
        assert back.condensate == p.condensate
        assert np.array_equal(back.coeffs, p.coeffs)
        payload = json.loads(p.to_json())
        assert set(payload) == {"h", "condensate", "coeffs", "unresolved", "basis"}


class TestTotalVariation:
    def test_identical(self):
        q = MomentSequence.atomic([(0.5, 0.5), (0.9, 0.5)])
        p = MixtureMeasure.from_basis(q)
        assert tv_distance_atomic(p, p) == 0.0

    def test_disjoint_supports(self):
        q = MomentSequence.atomic([(0.25, 0.5), (0.5, 0.5)])
        top = MixtureMeasure.point_mass(q, 1.0)
        base = MixtureMeasure.from_basis(q, h=1.0)
        assert tv_distance_atomic(top, base) == pytest.approx(1.0, abs=1e-15)

    def test_half_mixture(self):
        q = MomentSequence.atomic([(0.25, 0.5), (0.5, 0.5)])
        half = MixtureMeasure(basis=q, h=1.0, condensate=0.5, coeffs=np.array([0.5]))
        base = MixtureMeasure.from_basis(q, h=1.0)
        assert tv_distance_atomic(half, base) == pytest.approx(0.5, abs=1e-15)

    def test_mismatched_bases_rejected(self):
        q1 = MomentSequence.atomic([(0.5, 1.0)])
        q2 = MomentSequence.atomic([(0.6, 1.0)])
        with pytest.raises(IncompatibleMeasureError):
            tv_distance_atomic(MixtureMeasure.from_basis(q1, h=1.0),
                               MixtureMeasure.from_basis(q2, h=1.0))


class TestAtomicMeasure:
    def test_merge_duplicates(self):
        a = AtomicMeasure([0.5, 0.5, 1.0], [0.25, 0.25, 0.5])
        assert len(a.xs) == 2
        assert a.mass_at(0.5) == pytest.approx(0.5)

    def test_size_biased(self):
        a = AtomicMeasure([0.5, 1.0], [0.5, 0.5])
        sb = a.size_biased()
        assert sb.mass_at(1.0) == pytest.approx(0.5 * 1.0 / 0.75)
        assert sb.mean() > a.mean()

    def test_tv_symmetry(self):
        a = AtomicMeasure([0.2, 0.8], [0.3, 0.7])
        b = AtomicMeasure([0.2, 0.9], [0.6, 0.4])
        assert a.tv_distance(b) == pytest.approx(b.tv_distance(a))


class TestGrammar:
    @pytest.mark.parametrize("spec", [
        "uniform",
        "poly_decay p=2",
        "beta a=2 b=3",
        "atomic [(0.5,0.5),(1.0,0.5)]",
    ])
    def test_round_trip(self, spec):
        q = parse_q_spec(spec)
        again = parse_q_spec(q.to_spec())
        assert q == again

    def test_unknown_family(self):
        with pytest.raises(UnsupportedFamilyError):
            parse_q_spec("cauchy gamma=1")

    def test_bad_poly_degree(self):
        with pytest.raises(UnsupportedFamilyError):
            parse_q_spec("poly_decay p=7")

    def test_point_mass_at_zero_rejected(self):
        with pytest.raises(ValueError):
            MomentSequence.atomic([(0.0, 1.0)])

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            MomentSequence.atomic([(0.5, 0.5), (1.0, 0.4)])

"""Closed-form equilibrium for the constant mutation probability model.

With a constant mutation probability b the fitness distributions converge.
When mutation is strong enough relative to the room above the mutant
support (the threshold integral below is at least 1/b) the limit has a
density b*theta/(theta - (1-b)x) against Q, with theta the root of a scalar
integral equation.  Otherwise a positive fraction of the population piles
up on the top fitness value h: the condensed branch.

The module also carries the parametric description of the interior branch
for the uniform mutant distribution and the curvature diagnostic of its
mean fitness as a function of b, which drives the model-comparison demos.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .measures import AtomicMeasure, MomentSequence, UnsupportedFamilyError

__all__ = [
    "WrongBranchError", "NumericFailure", "threshold_integral", "solve_theta",
    "solve_theta_many", "equilibrium_growth_factor_many",
    "KingmanEquilibrium", "kingman_equilibrium", "equilibrium_growth_factor",
    "interior_curve_uniform", "curvature_expression", "theta_curvature_scan",
    "CurvatureScan",
]

ROOT_TOL = 1e-12


class WrongBranchError(ValueError):
    """The requested quantity belongs to the other equilibrium branch."""


class NumericFailure(RuntimeError):
    """Root bracketing or refinement failed; message carries diagnostics."""


@lru_cache(maxsize=None)
def _gauss_nodes(n=256):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _quad01(f) -> float:
    x, w = _gauss_nodes()
    return float(np.sum(w * f(x)))


def threshold_integral(q: MomentSequence, h: float) -> float:
    """Integral of 1/(1 - x/h) against Q; +inf when it diverges.

    Decides the equilibrium branch: the interior branch applies when this
    is at least 1/b.  Exact for atomic Q and for the shipped parametric
    families at h equal to the support supremum; smooth quadrature
    otherwise.
    """
    if h < q.s_q - 1e-15:
        raise ValueError(f"h={h} below the support supremum {q.s_q}")
    if q.kind == "atomic":
        xs = np.array([x for x, _ in q.points])
        ws = np.array([w for _, w in q.points])
        if np.any(np.isclose(xs, h, rtol=0.0, atol=1e-15)):
            return math.inf
        return float(np.sum(ws / (1.0 - xs / h)))
    at_top = h <= q.s_q + 1e-15
    if q.kind == "uniform":
        if at_top:
            return math.inf
        return h * math.log(h / (h - 1.0))
    if q.kind == "poly_decay":
        p = q.params["p"]
        if at_top:
            return (p + 1.0) / p
        return _quad01(lambda x: q.density(x) / (1.0 - x / h))
    if q.kind == "beta":
        a, b = q.params["a"], q.params["b"]
        if at_top:
            if b <= 1.0:
                return math.inf
            return (a + b - 1.0) / (b - 1.0)
        return _quad01(lambda x: q.density(x) / (1.0 - x / h))
    raise UnsupportedFamilyError(q.kind)


def _interior_equation(q: MomentSequence, b: float, theta: float) -> float:
    """F(theta) = integral of b*theta/(theta - (1-b)x) dQ; decreasing in theta."""
    c = 1.0 - b
    if q.kind == "atomic":
        xs = np.array([x for x, _ in q.points])
        ws = np.array([w for _, w in q.points])
        return float(np.sum(ws * b * theta / (theta - c * xs)))
    if q.kind == "uniform":
        return (b * theta / c) * math.log(theta / (theta - c))
    return _quad01(lambda x: q.density(x) * b * theta / (theta - c * x))


def solve_theta(q: MomentSequence, b: float, *, tol: float = ROOT_TOL) -> float:
    """Root of the interior equilibrium equation, by bracketed bisection.

    The root is unique on ((1-b) s_q, s_q] because F is strictly decreasing
    there; bisection is used instead of Newton since F can be near-singular
    at the left endpoint.  Requires the interior regime; a condensed-regime
    input raises WrongBranchError.

    Args:
        q: mutant distribution.
        b: constant mutation probability in (0, 1).
        tol: accept theta once |F(theta) - 1| < tol.
    """
    if not 0.0 < b < 1.0:
        raise ValueError(f"b={b} outside (0, 1)")
    thr = threshold_integral(q, q.s_q)
    if thr < 1.0 / b:
        raise WrongBranchError(
            f"threshold integral {thr:.6g} below 1/b={1.0/b:.6g}: condensed regime")
    if q.kind == "atomic" and len(q.points) == 1:
        return q.points[0][0]  # degenerate bracket: pure size-biasing fixes the atom
    s = q.s_q
    lo = (1.0 - b) * s * (1.0 + 1e-12)
    hi = s
    grow = 0
    while _interior_equation(q, b, hi) > 1.0:
        hi *= 2.0
        grow += 1
        if grow > 60:
            raise NumericFailure(f"upper bracket would not close: F({hi})>1")
    f_lo = _interior_equation(q, b, lo)
    if f_lo < 1.0:
        # the root sits against the left endpoint; regime boundary
        return lo
    theta = 0.5 * (lo + hi)
    for _ in range(200):
        theta = 0.5 * (lo + hi)
        f = _interior_equation(q, b, theta)
        if abs(f - 1.0) < tol:
            return theta
        if f > 1.0:
            lo = theta
        else:
            hi = theta
        if hi - lo < 1e-16 * max(theta, 1e-30):
            break
    f = _interior_equation(q, b, theta)
    if abs(f - 1.0) < 1e3 * tol:
        return theta
    raise NumericFailure(
        f"bisection stalled: theta={theta!r}, |F-1|={abs(f-1.0):.3e}, bracket=({lo!r},{hi!r})")


@dataclass(frozen=True)
class KingmanEquilibrium:
    """Limit fitness distribution of the constant-b model.

    Interior branch: density b*theta/(theta - (1-b)x) against Q, no mass at
    the top.  Condensed branch: density b/(1 - x/h) against Q plus the
    leftover mass as a point mass at h.
    """

    q: MomentSequence
    b: float
    h: float
    branch: str
    theta: float | None
    condensate: float

    def density_factor(self, x) -> np.ndarray:
        """Radon-Nikodym factor of the continuous part against Q."""
        x = np.asarray(x, dtype=float)
        if self.branch == "interior":
            return self.b * self.theta / (self.theta - (1.0 - self.b) * x)
        return self.b / (1.0 - x / self.h)

    def mean_fitness(self) -> float:
        if self.branch == "interior":
            return self.theta
        return (1.0 - self.b) * self.h

    def moment(self, k: int) -> float:
        """Integral of y^k against the equilibrium."""
        k = int(k)
        if k == 0:
            return 1.0
        q = self.q
        if self.branch == "interior":
            if q.kind == "atomic":
                xs = np.array([x for x, _ in q.points])
                ws = np.array([w for _, w in q.points])
                return float(np.sum(ws * xs ** k * self.density_factor(xs)))
            if q.kind == "uniform":
                c = 1.0 - self.b
                # J_i = integral of x^i/(theta - c x); stable forward recurrence
                j = math.log(self.theta / (self.theta - c)) / c
                for i in range(1, k + 1):
                    j = (self.theta * j - 1.0 / i) / c
                return self.b * self.theta * j
            return _quad01(lambda x: q.density(x) * x ** k * self.density_factor(x))
        atom = self.condensate * self.h ** k
        if q.kind == "atomic":
            xs = np.array([x for x, _ in q.points])
            ws = np.array([w for _, w in q.points])
            return atom + float(np.sum(ws * xs ** k * self.density_factor(xs)))
        at_top = self.h <= q.s_q + 1e-15
        if q.kind == "poly_decay" and at_top:
            p = q.params["p"]
            # (p+1) * Beta(k+1, p)
            val = (p + 1.0) * math.exp(gammaln(k + 1) + gammaln(p) - gammaln(k + p + 1))
            return atom + self.b * val
        if q.kind == "beta" and at_top:
            a, bb = q.params["a"], q.params["b"]
            if bb <= 1.0:
                raise WrongBranchError("condensed branch impossible for this family")
            val = math.exp(gammaln(a + k) + gammaln(bb - 1.0) - gammaln(a + k + bb - 1.0)
                           - gammaln(a) - gammaln(bb) + gammaln(a + bb))
            return atom + self.b * val
        return atom + self.b * _quad01(
            lambda x: q.density(x) * x ** k / (1.0 - x / self.h))

    def as_atomic(self) -> AtomicMeasure:
        """Exact atomic representation; needs an atomic mutant distribution."""
        if self.q.kind != "atomic":
            raise UnsupportedFamilyError("as_atomic needs an atomic mutant distribution")
        xs = np.array([x for x, _ in self.q.points])
        ws = np.array([w for _, w in self.q.points])
        masses = ws * self.density_factor(xs)
        if self.branch == "condensed" and self.condensate > 0.0:
            xs = np.append(xs, self.h)
            masses = np.append(masses, self.condensate)
        return AtomicMeasure(xs, masses)


def kingman_equilibrium(q: MomentSequence, b: float, h: float | None = None) -> KingmanEquilibrium:
    """Equilibrium of the constant-b model with top fitness value h.

    Args:
        q: mutant distribution.
        b: mutation probability in (0, 1).
        h: top fitness value, at least the support supremum (default: the
           supremum itself).

    The branch is decided by comparing the threshold integral at h with
    1/b; the interior branch stores theta, the condensed branch stores the
    point mass at h.
    """
    if not 0.0 < b < 1.0:
        raise ValueError(f"b={b} outside (0, 1)")
    h = q.s_q if h is None else float(h)
    thr = threshold_integral(q, h)
    if thr >= 1.0 / b:
        return KingmanEquilibrium(q=q, b=b, h=h, branch="interior",
                                  theta=solve_theta(q, b), condensate=0.0)
    condensate = 1.0 - b * thr
    if not -1e-12 <= condensate <= 1.0 + 1e-12:
        raise NumericFailure(f"condensate {condensate} outside [0, 1]")
    return KingmanEquilibrium(q=q, b=b, h=h, branch="condensed",
                              theta=None, condensate=min(max(condensate, 0.0), 1.0))


def equilibrium_growth_factor(q: MomentSequence, b: float) -> float:
    """Limit growth factor of the constant-b model, decided at h = s_q.

    Equals (1-b)/theta in the interior regime and 1/s_q in the condensed
    regime; the two expressions agree at the regime boundary.
    """
    if not 0.0 < b < 1.0:
        raise ValueError(f"b={b} outside (0, 1)")
    thr = threshold_integral(q, q.s_q)
    if thr <= 1.0 / b:
        return 1.0 / q.s_q
    return (1.0 - b) / solve_theta(q, b)


def _interior_equation_vec(q: MomentSequence, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
    c = 1.0 - b
    if q.kind == "uniform":
        return (b * theta / c) * np.log(theta / (theta - c))
    if q.kind == "atomic":
        xs = np.array([x for x, _ in q.points])
        ws = np.array([w for _, w in q.points])
        return np.sum(ws[None, :] * (b * theta)[:, None]
                      / (theta[:, None] - c[:, None] * xs[None, :]), axis=1)
    x, w = _gauss_nodes()
    dens = q.density(x)
    return np.sum((w * dens)[None, :] * (b * theta)[:, None]
                  / (theta[:, None] - c[:, None] * x[None, :]), axis=1)


def solve_theta_many(q: MomentSequence, bs: np.ndarray, *, tol: float = ROOT_TOL) -> np.ndarray:
    """Vectorized interior-branch root solve over an array of b's."""
    bs = np.asarray(bs, dtype=float)
    if bs.size == 0:
        return np.zeros(0)
    if q.kind == "atomic" and len(q.points) == 1:
        return np.full(bs.shape, q.points[0][0])
    s = q.s_q
    lo = (1.0 - bs) * s * (1.0 + 1e-12)
    hi = np.full_like(bs, s)
    f_lo = _interior_equation_vec(q, bs, lo)
    done_left = f_lo < 1.0  # root pinned at the left endpoint (regime boundary)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        f = _interior_equation_vec(q, bs, mid)
        take_lo = f > 1.0
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
        if np.all((hi - lo) < 1e-15 * np.maximum(hi, 1e-30)):
            break
    theta = 0.5 * (lo + hi)
    return np.where(done_left, (1.0 - bs) * s, theta)


def equilibrium_growth_factor_many(q: MomentSequence, bs: np.ndarray) -> np.ndarray:
    """Vectorized limit growth factor over an array of b's (decided at s_q)."""
    bs = np.asarray(bs, dtype=float)
    thr = threshold_integral(q, q.s_q)
    out = np.full(bs.shape, 1.0 / q.s_q)
    interior = thr * bs > 1.0 if math.isfinite(thr) else np.ones(bs.shape, dtype=bool)
    if np.any(interior):
        out[interior] = (1.0 - bs[interior]) / solve_theta_many(q, bs[interior])
    return out


# ---------------------------------------------------------------------------
# uniform mutant distribution: parametric interior branch and its curvature
# ---------------------------------------------------------------------------


def interior_curve_uniform(t: float) -> tuple[float, float]:
    """Parametric (b, theta) along the interior branch for uniform Q.

    For t in (0, 1):  b = -t/log(1-t)  and  theta = 1/t + 1/log(1-t);
    the growth factor (1-b)/theta equals t itself on this curve.
    """
    if not 0.0 < t < 1.0:
        raise ValueError(f"t={t} outside (0, 1)")
    log1mt = math.log1p(-t)
    return -t / log1mt, 1.0 / t + 1.0 / log1mt


def curvature_expression(t) -> np.ndarray:
    """Curvature numerator of the uniform-Q mean fitness in b.

    Evaluates m'(t) n(t) - m(t) n'(t) for the parametric interior branch,
    where m/n are the numerator and denominator of d(theta)/db.  The sign
    of the mean-fitness curvature d^2 theta / d b^2 is the opposite of the
    sign of this expression (the parameter t decreases in b).
    """
    t = np.asarray(t, dtype=float)
    log1mt = np.log1p(-t)
    return (-2.0 * t * (1.0 - t) ** 2 * log1mt ** 3
            + (-4.0 * t ** 2 + 3.0 * t ** 3) * log1mt ** 2
            - t ** 3 * (2.0 + t) * log1mt)


@dataclass(frozen=True)
class CurvatureScan:
    """Grid evaluation of the uniform-Q curvature diagnostic."""

    t: np.ndarray
    expression: np.ndarray     # m'n - mn' on the grid
    curvature: np.ndarray      # d^2 theta / d b^2 on the grid
    b: np.ndarray
    theta: np.ndarray
    sign_changes: tuple        # (t_left, t_right) pairs where the expression flips

    def has_both_signs(self) -> bool:
        return bool(np.any(self.expression > 0.0) and np.any(self.expression < 0.0))


def theta_curvature_scan(t_grid) -> CurvatureScan:
    """Scan the curvature of the uniform-Q mean fitness over a t-grid.

    Reports the raw expression values, the implied curvature of theta as a
    function of b, and any sign changes of the expression along the grid.
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise ValueError("t grid must lie inside (0, 1)")
    expr = curvature_expression(t)
    log1mt = np.log1p(-t)
    n_t = -(1.0 - t) * t ** 2 * log1mt - t ** 3
    db_dt = -(log1mt + t / (1.0 - t)) / log1mt ** 2
    curvature = expr / (n_t ** 2 * db_dt)
    pairs = [(float(t[i]), float(t[i + 1]))
             for i in range(len(t) - 1)
             if np.sign(expr[i]) != 0 and np.sign(expr[i + 1]) != 0
             and np.sign(expr[i]) != np.sign(expr[i + 1])]
    bs = np.array([-ti / math.log1p(-ti) for ti in t])
    thetas = np.array([1.0 / ti + 1.0 / math.log1p(-ti) for ti in t])
    return CurvatureScan(t=t, expression=expr, curvature=curvature,
                         b=bs, theta=thetas, sign_changes=tuple(pairs))

"""Probability measures on [0,1] represented through their moments.

The mutant fitness distribution Q enters every computation in this package
only through its moment sequence m_k and the supremum of its support.  This
module provides that representation (`MomentSequence`), plain atomic measures
on a finite grid (`AtomicMeasure`), and fitness distributions written as a
convex mixture of repeated size-biased transforms of Q plus a point mass at
the top fitness value (`MixtureMeasure`).

Moments are cached eagerly in extended precision and exposed both raw (m_k)
and scaled by the k-th power of the support supremum (mu_k = m_k / s_q^k).
The scaled form stays in (0, 1] for every k, which is what the recursion
kernels need to avoid under/overflow when s_q < 1.
"""

from __future__ import annotations

import ast
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_MOMENT_CAP = 512

_WEIGHT_TOL = 1e-14
_MASS_TOL = 1e-12
_COEFF_TRIM = 1e-16


class UnsupportedFamilyError(ValueError):
    """A parametric family without a closed-form or shipped quadrature rule."""


class IncompatibleMeasureError(ValueError):
    """Two measures that do not share the support required by an operation."""


def _validate_atomic_points(points: Sequence[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    if not points:
        raise ValueError("atomic measure needs at least one support point")
    cleaned = []
    for x, w in points:
        x, w = float(x), float(w)
        if not (0.0 <= x <= 1.0):
            raise ValueError(f"support point {x} outside [0, 1]")
        if w <= 0.0:
            raise ValueError(f"weight {w} must be positive")
        cleaned.append((x, w))
    cleaned.sort()
    xs = [x for x, _ in cleaned]
    if len(set(xs)) != len(xs):
        raise ValueError("duplicate support points")
    total = math.fsum(w for _, w in cleaned)
    if abs(total - 1.0) > _WEIGHT_TOL:
        raise ValueError(f"weights sum to {total}, expected 1 within {_WEIGHT_TOL}")
    if len(cleaned) == 1 and cleaned[0][0] == 0.0:
        raise ValueError("point mass at 0 is excluded")
    return tuple(cleaned)


class MomentSequence:
    """A mutant distribution Q on [0,1], known through its moments.

    Construct through one of the family classmethods (`uniform`, `poly_decay`,
    `beta`, `atomic`) or from the text grammar via `from_spec`.  Instances are
    immutable; the scaled-moment cache is precomputed eagerly up to `k_cap`
    (extension beyond that raises), so concurrent readers are safe.

    Attributes:
        kind: family tag, one of "uniform", "poly_decay", "beta", "atomic".
        s_q: supremum of the support.
        atom_at_sq: whether Q puts positive mass on {s_q}.
        k_cap: largest cached moment index.
    """

    __slots__ = ("kind", "params", "points", "s_q", "atom_at_sq", "k_cap", "_mu")

    def __init__(self, kind, params=None, points=None, k_cap=DEFAULT_MOMENT_CAP):
        self.kind = kind
        self.params = dict(params) if params else {}
        self.points = points
        self.k_cap = int(k_cap)
        if self.k_cap < 8:
            raise ValueError("k_cap too small")
        if kind == "atomic":
            self.points = _validate_atomic_points(points)
            self.s_q = self.points[-1][0]
            if self.s_q <= 0.0:
                raise ValueError("atomic support must reach above 0")
            self.atom_at_sq = True
        elif kind == "uniform":
            self.s_q, self.atom_at_sq = 1.0, False
        elif kind == "poly_decay":
            p = self.params.get("p")
            if p not in (1, 2, 3):
                raise UnsupportedFamilyError(f"poly_decay p must be 1, 2 or 3, got {p}")
            self.s_q, self.atom_at_sq = 1.0, False
        elif kind == "beta":
            a, b = self.params.get("a"), self.params.get("b")
            if not (a and b and a > 0 and b > 0):
                raise UnsupportedFamilyError(f"beta needs a > 0 and b > 0, got a={a} b={b}")
            self.s_q, self.atom_at_sq = 1.0, False
        else:
            raise UnsupportedFamilyError(f"unknown family {kind!r}")
        self._mu = self._build_scaled_cache()

    # -- constructors -----------------------------------------------------

    @classmethod
    def uniform(cls, k_cap=DEFAULT_MOMENT_CAP):
        """Lebesgue measure on [0,1]."""
        return cls("uniform", k_cap=k_cap)

    @classmethod
    def poly_decay(cls, p, k_cap=DEFAULT_MOMENT_CAP):
        """Density (p+1)(1-x)^p on [0,1], p in {1,2,3}."""
        return cls("poly_decay", params={"p": int(p)}, k_cap=k_cap)

    @classmethod
    def beta(cls, a, b, k_cap=DEFAULT_MOMENT_CAP):
        """Beta(a, b) density on [0,1]."""
        return cls("beta", params={"a": float(a), "b": float(b)}, k_cap=k_cap)

    @classmethod
    def atomic(cls, points, k_cap=DEFAULT_MOMENT_CAP):
        """Finitely supported measure given as [(x, weight), ...]."""
        return cls("atomic", points=tuple(points), k_cap=k_cap)

    @classmethod
    def from_spec(cls, text: str, k_cap=DEFAULT_MOMENT_CAP) -> "MomentSequence":
        """Parse the measure grammar.

        Accepted forms: ``uniform``, ``poly_decay p=2``, ``beta a=2 b=3``,
        ``atomic [(x1,w1),(x2,w2),...]``.
        """
        text = text.strip()
        if not text:
            raise UnsupportedFamilyError("empty measure spec")
        head, _, rest = text.partition(" ")
        rest = rest.strip()
        if head == "uniform":
            return cls.uniform(k_cap=k_cap)
        if head == "atomic":
            try:
                pts = ast.literal_eval(rest)
            except (SyntaxError, ValueError) as exc:
                raise UnsupportedFamilyError(f"cannot parse atomic point list: {rest!r}") from exc
            return cls.atomic(pts, k_cap=k_cap)
        if head in ("poly_decay", "beta"):
            params = {}
            for token in rest.split():
                key, _, value = token.partition("=")
                if not value:
                    raise UnsupportedFamilyError(f"bad parameter token {token!r}")
                params[key] = float(value)
            if head == "poly_decay":
                return cls.poly_decay(int(params.get("p", 0)), k_cap=k_cap)
            return cls.beta(params.get("a"), params.get("b"), k_cap=k_cap)
        raise UnsupportedFamilyError(f"unknown measure family {head!r}")

    def to_spec(self) -> str:
        """Serialize back to the grammar accepted by `from_spec`."""
        if self.kind == "uniform":
            return "uniform"
        if self.kind == "poly_decay":
            return f"poly_decay p={self.params['p']}"
        if self.kind == "beta":
            return f"beta a={self.params['a']!r} b={self.params['b']!r}"
        body = ",".join(f"({x!r},{w!r})" for x, w in self.points)
        return f"atomic [{body}]"

    # -- moments -----------------------------------------------------------

    def _build_scaled_cache(self) -> np.ndarray:
        """mu_k = m_k / s_q^k for k = 0..k_cap, in extended precision."""
        k = np.arange(self.k_cap + 1)
        if self.kind == "uniform":
            return 1.0 / (k.astype(np.longdouble) + 1.0)
        if self.kind == "poly_decay":
            p = self.params["p"]
            mu = np.ones(self.k_cap + 1, dtype=np.longdouble)
            # m_k = prod_{i=1}^{p+1} i / (k+i)
            for i in range(1, p + 2):
                mu *= np.longdouble(i) / (k + np.longdouble(i))
            return mu
        if self.kind == "beta":
            a, b = np.longdouble(self.params["a"]), np.longdouble(self.params["b"])
            mu = np.ones(self.k_cap + 1, dtype=np.longdouble)
            ratios = (a + k[:-1]) / (a + b + k[:-1])
            mu[1:] = np.cumprod(ratios)
            return mu
        xs = np.array([x for x, _ in self.points], dtype=np.longdouble)
        ws = np.array([w for _, w in self.points], dtype=np.longdouble)
        scaled = xs / np.longdouble(self.s_q)
        # power sums of scaled atoms: every term positive, no cancellation
        return (ws[None, :] * scaled[None, :] ** k[:, None]).sum(axis=1)

    def _check_k(self, k: int) -> int:
        k = int(k)
        if k < 0:
            raise ValueError("moment order must be >= 0")
        if k > self.k_cap:
            raise ValueError(f"moment order {k} exceeds cache cap {self.k_cap}")
        return k

    def moment(self, k: int) -> float:
        """Raw moment m_k = integral of x^k dQ."""
        k = self._check_k(k)
        return float(self._mu[k] * np.longdouble(self.s_q) ** k)

    def moments(self, upto: int) -> np.ndarray:
        """Array [m_0, ..., m_upto] as float64."""
        upto = self._check_k(upto)
        scale = np.longdouble(self.s_q) ** np.arange(upto + 1)
        return np.asarray(self._mu[: upto + 1] * scale, dtype=float)

    def scaled_moment(self, k: int) -> float:
        """mu_k = m_k / s_q^k, always in (0, 1]."""
        return float(self._mu[self._check_k(k)])

    def scaled_moments(self, upto: int) -> np.ndarray:
        upto = self._check_k(upto)
        return np.asarray(self._mu[: upto + 1], dtype=float)

    def size_biased_moment(self, l: int, k: int) -> float:
        """k-th moment of the l-fold size-biased transform: m_{l+k} / m_l."""
        l, k = self._check_k(l), self._check_k(k)
        self._check_k(l + k)
        ratio = self._mu[l + k] / self._mu[l]
        return float(ratio * np.longdouble(self.s_q) ** k)

    # -- misc ---------------------------------------------------------------

    def as_atomic(self) -> "AtomicMeasure":
        if self.kind != "atomic":
            raise UnsupportedFamilyError("only atomic kind converts to AtomicMeasure")
        xs = np.array([x for x, _ in self.points])
        ws = np.array([w for _, w in self.points])
        return AtomicMeasure(xs, ws)

    def density(self, x: np.ndarray) -> np.ndarray:
        """Density on [0,1] for the continuous families."""
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.ones_like(x)
        if self.kind == "poly_decay":
            p = self.params["p"]
            return (p + 1.0) * (1.0 - x) ** p
        if self.kind == "beta":
            from scipy.special import betaln
            a, b = self.params["a"], self.params["b"]
            with np.errstate(divide="ignore"):
                logpdf = (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)
            return np.exp(logpdf)
        raise UnsupportedFamilyError("atomic measures have no density")

    def __eq__(self, other):
        if not isinstance(other, MomentSequence):
            return NotImplemented
        return (self.kind, tuple(sorted(self.params.items())), self.points) == (
            other.kind, tuple(sorted(other.params.items())), other.points)

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items())), self.points))

    def __repr__(self):
        return f"MomentSequence({self.to_spec()!r})"


parse_q_spec = MomentSequence.from_spec


@dataclass(frozen=True)
class NormalizedMoments:
    """Scaled moment array mu_k = m_k / s_q^k of a mutant distribution.

    Every entry lies in (0, 1] and the sequence is non-increasing; this is
    the representation consumed by the recursion kernels.
    """

    s_q: float
    values: np.ndarray

    @classmethod
    def of(cls, q: MomentSequence, upto: int) -> "NormalizedMoments":
        return cls(s_q=q.s_q, values=q.scaled_moments(upto))

    def __len__(self):
        return len(self.values)


class AtomicMeasure:
    """Probability measure on a finite grid in [0,1].

    Used as the brute-force side of iteration cross-checks and for exact
    fixed-point verification: all operations are plain weighted sums.
    """

    __slots__ = ("xs", "ws")

    def __init__(self, xs, ws, *, tol=_MASS_TOL):
        xs = np.asarray(xs, dtype=float)
        ws = np.asarray(ws, dtype=float)
        if xs.shape != ws.shape or xs.ndim != 1:
            raise ValueError("xs and ws must be equal-length vectors")
        if np.any((xs < 0) | (xs > 1)):
            raise ValueError("support must lie in [0,1]")
        if np.any(ws < -tol):
            raise ValueError("negative mass")
        order = np.argsort(xs)
        xs, ws = xs[order], ws[order]
        if len(xs) > 1 and np.any(np.diff(xs) == 0.0):
            xs, ws = _merge_duplicates(xs, ws)
        total = math.fsum(ws.tolist())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mass {total} not 1")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ws", np.maximum(ws, 0.0) / total)

    def __setattr__(self, *a):
        raise AttributeError("AtomicMeasure is immutable")

    def moment(self, k: int) -> float:
        return float(np.sum(self.ws * self.xs ** k))

    def mean(self) -> float:
        return self.moment(1)

    def mass_at(self, x: float) -> float:
        hit = np.isclose(self.xs, x, rtol=0.0, atol=1e-15)
        return float(self.ws[hit].sum())

    def size_biased(self) -> "AtomicMeasure":
        m1 = self.mean()
        if m1 <= 0.0:
            raise ValueError("cannot size-bias a measure with zero mean")
        return AtomicMeasure(self.xs, self.ws * self.xs / m1)

    def tv_distance(self, other: "AtomicMeasure") -> float:
        grid = np.union1d(self.xs, other.xs)
        a = np.zeros(len(grid))
        b = np.zeros(len(grid))
        a[np.searchsorted(grid, self.xs)] = self.ws
        b[np.searchsorted(grid, other.xs)] = other.ws
        return 0.5 * float(np.abs(a - b).sum())

    def cdf(self, grid: np.ndarray) -> np.ndarray:
        return np.array([self.ws[self.xs <= g].sum() for g in np.asarray(grid, dtype=float)])

    def __repr__(self):
        return f"AtomicMeasure({len(self.xs)} atoms, mean={self.mean():.6g})"


def _merge_duplicates(xs, ws):
    ux, inverse = np.unique(xs, return_inverse=True)
    uw = np.zeros_like(ux)
    np.add.at(uw, inverse, ws)
    return ux, uw


@dataclass(frozen=True)
class MixtureMeasure:
    """Fitness distribution in the closed mixture basis.

    The measure is  condensate * delta_h  +  sum_l coeffs[l] * Q^l  where Q^l
    is the l-fold size-biased transform of the basis distribution.  Mass
    trimmed from the far coefficient tail is tracked in `unresolved` and
    never folded silently into the condensate.
    """

    basis: MomentSequence
    h: float
    condensate: float
    coeffs: np.ndarray
    unresolved: float = 0.0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", coeffs)
        if not (0.0 < self.h <= 1.0):
            raise ValueError(f"h={self.h} outside (0, 1]")
        if self.h < self.basis.s_q - 1e-15:
            raise ValueError(f"h={self.h} below the basis supremum {self.basis.s_q}")
        if self.condensate < -_MASS_TOL or np.any(coeffs < -_MASS_TOL):
            raise ValueError("negative mass in mixture")
        if abs(self.total_mass - 1.0) > _MASS_TOL:
            raise ValueError(f"mixture mass {self.total_mass} not 1 within {_MASS_TOL}")

    @property
    def total_mass(self) -> float:
        return float(self.condensate + self.coeffs.sum() + self.unresolved)

    @classmethod
    def from_basis(cls, basis: MomentSequence, h: float | None = None) -> "MixtureMeasure":
        """The basis distribution Q itself (c_0 = 1)."""
        return cls(basis=basis, h=basis.s_q if h is None else h,
                   condensate=0.0, coeffs=np.array([1.0]))

    @classmethod
    def point_mass(cls, basis: MomentSequence, h: float) -> "MixtureMeasure":
        """delta_h, carried in the condensate slot."""
        return cls(basis=basis, h=h, condensate=1.0, coeffs=np.zeros(0))

    def moment(self, k: int) -> float:
        """Integral of y^k against the mixture."""
        k = int(k)
        acc = self.condensate * self.h ** k
        for l, c in enumerate(self.coeffs):
            if c != 0.0:
                acc += c * self.basis.size_biased_moment(l, k)
        return float(acc)

    def mean(self) -> float:
        return self.moment(1)

    def trimmed(self) -> "MixtureMeasure":
        """Drop coefficients below 1e-16 of the largest into `unresolved`."""
        if len(self.coeffs) == 0:
            return self
        cutoff = _COEFF_TRIM * float(self.coeffs.max(initial=0.0))
        keep = len(self.coeffs)
        while keep > 1 and self.coeffs[keep - 1] < cutoff:
            keep -= 1
        tail = float(self.coeffs[keep:].sum())
        if tail == 0.0:
            return self
        return MixtureMeasure(basis=self.basis, h=self.h, condensate=self.condensate,
                              coeffs=self.coeffs[:keep].copy(),
                              unresolved=self.unresolved + tail)

    def as_atomic(self) -> AtomicMeasure:
        """Evaluate on the basis grid; needs an atomic basis.

        Masses at coinciding points (an atom of Q at h, say) simply add.
        Unresolved tail mass is spread on the top basis atom.
        """
        if self.basis.kind != "atomic":
            raise IncompatibleMeasureError("as_atomic needs an atomic basis")
        xs = np.array([x for x, _ in self.basis.points])
        ws = np.array([w for _, w in self.basis.points])
        mu = self.basis.scaled_moments(max(len(self.coeffs), 1))
        scaled = xs / self.basis.s_q
        masses = np.zeros_like(ws)
        power = np.ones_like(ws)
        for l, c in enumerate(self.coeffs):
            masses += c * ws * power / mu[l]
            power = power * scaled
        pts = list(xs)
        vals = list(masses)
        if self.condensate > 0.0 or self.h not in xs:
            pts.append(self.h)
            vals.append(self.condensate)
        if self.unresolved:
            vals[int(np.argmax(np.asarray(pts)))] += self.unresolved
        return AtomicMeasure(np.asarray(pts), np.asarray(vals))

    def to_json(self) -> str:
        return json.dumps({
            "h": self.h,
            "condensate": self.condensate,
            "coeffs": [float(c) for c in self.coeffs],
            "unresolved": self.unresolved,
            "basis": self.basis.to_spec(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MixtureMeasure":
        raw = json.loads(text)
        return cls(basis=MomentSequence.from_spec(raw["basis"]),
                   h=float(raw["h"]),
                   condensate=float(raw["condensate"]),
                   coeffs=np.asarray(raw["coeffs"], dtype=float),
                   unresolved=float(raw.get("unresolved", 0.0)))


def tv_distance_atomic(p1: MixtureMeasure, p2: MixtureMeasure) -> float:
    """Total variation distance of two mixtures over a shared atomic basis.

    Both mixtures must use the same atomic basis and the same top value h;
    the distance is then computed exactly on the common finite support.
    """
    if p1.basis != p2.basis:
        raise IncompatibleMeasureError("mixtures use different bases")
    if p1.h != p2.h:
        raise IncompatibleMeasureError("mixtures use different top values")
    return p1.as_atomic().tv_distance(p2.as_atomic())

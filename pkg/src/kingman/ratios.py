"""Determinant-free ratio recursions for the mutation-selection model.

Everything the equilibrium theory needs from the model's banded moment
matrices is carried by two families of scalar ratios:

* the moment ratio  R(j, k)  --  the ratio of the (k+1)-st to the first
  moment of the backward fitness state at position j, and
* the growth factor  g(j)  --  the per-generation ratio between the
  surviving fraction 1 - b_j and the mean fitness one step later.

Both satisfy a backward recursion in j driven only by the moments of the
mutant distribution and the odds gamma_j = (1 - b_j) / b_j.  Working with
the inverse odds t_j = b_j / (1 - b_j) makes b_j = 0 an ordinary input
instead of a floating-point infinity, and scaling the k-th ratio by
s_q^{-k} keeps every stored quantity in (0, 1] regardless of the support.

Raw determinants of the underlying matrices exist only in a small oracle
(`det_by_path_expansion`) used to cross-check the recursions at desk scale.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .measures import MomentSequence

__all__ = [
    "RatioState", "ratio_table", "RatioLimits", "ratio_limits",
    "batched_backward", "BatchResult", "cumulative_log_growth",
    "HessenbergMatrix", "moment_matrix", "det_by_path_expansion",
    "det_by_elimination", "det_paths_through",
    "derivative_checks", "DerivativeReport", "CheckResult",
    "OracleSizeError", "InfiniteOddsError", "StepTooLargeError",
    "ConvergenceFailure", "growth_factor_bounds",
]


class OracleSizeError(ValueError):
    """Matrix too large for the exponential path-expansion oracle."""


class InfiniteOddsError(ValueError):
    """Operation undefined when some mutation probability is zero."""


class StepTooLargeError(ValueError):
    """Finite-difference step reaches outside the open parameter domain."""


class ConvergenceFailure(RuntimeError):
    """Limit detection ran out of depth; carries the last bracket."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def _path_values(path) -> np.ndarray:
    """Accept a MutationPath, array, or sequence of b's in [0, 1)."""
    values = getattr(path, "values", path)
    b = np.asarray(values, dtype=float)
    if b.ndim != 1:
        raise ValueError("path must be one-dimensional")
    if np.any((b < 0.0) | (b >= 1.0)):
        raise ValueError("mutation probabilities must lie in [0, 1)")
    return b


def _inverse_odds(b: np.ndarray) -> np.ndarray:
    return b / (1.0 - b)


# ---------------------------------------------------------------------------
# finite-n table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioState:
    """All ratios of a finite path of length n.

    `rows[j]` holds the scaled moment ratios s_q^{-k} R(j, k) for
    k = 1..width(j), j = 1..n+1; row n+1 is the terminal convention
    m_{k+1} / m_1 (scaled).  `gl[j]` is the growth factor
    gamma_j L(j) for j = 1..n, with gl[n+1] = 1/m_1 as the terminal
    minor-ratio convention.
    """

    q: MomentSequence
    b: np.ndarray
    n: int
    k_max: int
    rows: tuple
    gl: np.ndarray

    @property
    def s_q(self) -> float:
        return self.q.s_q

    def scaled_moment_ratio(self, j: int, k: int) -> float:
        """s_q^{-k} R(j, k); defined for 1 <= j <= n+1, 1 <= k <= width."""
        row = self.rows[j]
        if not 1 <= k <= len(row):
            raise IndexError(f"k={k} outside computed width {len(row)} at j={j}")
        return float(row[k - 1])

    def moment_ratio(self, j: int, k: int) -> float:
        """R(j, k): the (k+1)-st over first moment of the backward state."""
        return self.scaled_moment_ratio(j, k) * self.s_q ** k

    def growth_factor(self, j: int) -> float:
        """gamma_j L(j) for 1 <= j <= n; finite also when b_j = 0."""
        if not 1 <= j <= self.n:
            raise IndexError(f"j={j} outside 1..{self.n}")
        return float(self.gl[j])

    def minor_ratio(self, j: int) -> float:
        """L(j) itself; equals 0 when b_j = 0, 1/m_1 at the terminal slot."""
        if j == self.n + 1:
            return float(self.gl[self.n + 1])
        t = self.b[j - 1] / (1.0 - self.b[j - 1])
        return t * self.growth_factor(j)

    def basis_weight(self, j: int, l: int) -> float:
        """Weight of the l-fold size-biased basis element at position j.

        The product of growth factors from j to j+l-1 times the minor ratio
        at j+l times m_{l+1}; zero when b_{j+l} = 0.
        """
        if l < 0 or j < 1 or j + l > self.n + 1:
            raise IndexError(f"(j={j}, l={l}) outside the table")
        acc = 1.0
        for i in range(l):
            acc *= self.gl[j + i]
        return acc * self.minor_ratio(j + l) * self.q.moment(l + 1)

    def coefficient_row(self, j: int) -> np.ndarray:
        """Mixture coefficients of the backward state at position j.

        Entry 0 is b_{j+1}; entry l >= 1 is (1 - b_{j+1}) times the basis
        weight at (j+2, l-1).  Rows sum to one.
        """
        if not 0 <= j <= self.n:
            raise IndexError(f"j={j} outside 0..{self.n}")
        if j == self.n:
            return np.array([1.0])
        b1 = self.b[j]
        row = np.empty(self.n - j + 1)
        row[0] = b1
        for l in range(1, self.n - j + 1):
            row[l] = (1.0 - b1) * self.basis_weight(j + 2, l - 1)
        return row

    def to_csv(self, fileobj) -> None:
        """Debug dump with columns j, k, n, R, gammaL."""
        fileobj.write("j,k,n,R,gammaL\n")
        for j in range(1, self.n + 2):
            g = self.gl[j]
            for k in range(1, len(self.rows[j]) + 1):
                r = self.rows[j][k - 1] * self.s_q ** k
                fileobj.write(f"{j},{k},{self.n},{r!r},{g!r}\n")


def _backward_rows(t: np.ndarray, mu: np.ndarray, s_q: float, k_top: int):
    """Single-path backward sweep; returns (rows, gl) as in RatioState."""
    n = len(t)
    m1 = mu[1] * s_q
    width = k_top + n
    if len(mu) < width + 2:
        raise ValueError("moment cache too short for requested table")
    rows: list = [None] * (n + 2)
    gl = np.zeros(n + 2)
    gl[n + 1] = 1.0 / m1
    row = mu[2: width + 2] / mu[1]
    rows[n + 1] = row
    for j in range(n, 0, -1):
        tj = t[j - 1]
        den = tj * m1 + s_q * row[0]
        gl[j] = 1.0 / den
        w = len(row) - 1
        row = s_q * (tj * mu[2: w + 2] + row[1: w + 1]) / den
        rows[j] = row
    return tuple(rows), gl


def ratio_table(q: MomentSequence, path, k_max: int = 1) -> RatioState:
    """Fill the full ratio table of a finite path by backward induction.

    Args:
        q: mutant distribution.
        path: MutationPath or sequence of b's in [0, 1).
        k_max: number of moment-ratio columns available at every position.

    The moment cache must cover k_max + n + 1.
    """
    b = _path_values(path)
    n = len(b)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    mu = q.scaled_moments(min(q.k_cap, k_max + n + 1))
    rows, gl = _backward_rows(_inverse_odds(b), mu, q.s_q, k_max)
    return RatioState(q=q, b=b, n=n, k_max=k_max, rows=rows, gl=gl)


def cumulative_log_growth(state: RatioState) -> float:
    """Sum of log growth factors minus log m_1 over the whole path.

    Equals the log of the odds product divided by the determinant of the
    full moment matrix; undefined when any b_j = 0.
    """
    if np.any(state.b == 0.0):
        raise InfiniteOddsError("cumulative log growth undefined for b_j = 0")
    return float(np.sum(np.log(state.gl[1: state.n + 1])) - math.log(state.q.moment(1)))


def growth_factor_bounds(q: MomentSequence, b_j: float) -> tuple[float, float]:
    """Open envelope for the limit growth factor at mutation probability b_j.

    Returns (gamma/(m_1 + gamma), gamma/(m_1 (1 + gamma))) written in the
    inverse-odds form that stays finite at b_j = 0.
    """
    m1 = q.moment(1)
    t = b_j / (1.0 - b_j)
    return 1.0 / (1.0 + t * m1), 1.0 / (m1 * (1.0 + t))


# ---------------------------------------------------------------------------
# certified limits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioLimits:
    """Brackets for the infinite-path limits from a doubling schedule.

    One side of each bracket is exact by monotonicity: the finite-depth
    moment ratios increase to their limits (so `rho_lo` rows are proven
    lower bounds) and the finite-depth growth factors decrease (so `gl_hi`
    is a proven upper bound).  The opposite ends pad the deepest value by a
    geometric extrapolation of the observed decrements between doublings
    with a safety factor; the convergence rate itself carries no proven
    bound, so those ends are estimates, not certificates.
    """

    q: MomentSequence
    b: np.ndarray
    depth: int
    converged: bool
    j_max: int
    k_max: int
    gl_lo: np.ndarray
    gl_hi: np.ndarray
    rho_lo: np.ndarray
    rho_hi: np.ndarray

    def growth_factor_interval(self, j: int) -> tuple[float, float]:
        if not 1 <= j <= self.j_max:
            raise IndexError(f"j={j} outside 1..{self.j_max}")
        return float(self.gl_lo[j - 1]), float(self.gl_hi[j - 1])

    def growth_factor(self, j: int) -> float:
        lo, hi = self.growth_factor_interval(j)
        return 0.5 * (lo + hi)

    def scaled_moment_ratio_interval(self, j: int, k: int) -> tuple[float, float]:
        if not (1 <= j <= self.j_max and 1 <= k <= self.k_max):
            raise IndexError(f"(j={j}, k={k}) outside computed window")
        return float(self.rho_lo[j - 1, k - 1]), float(self.rho_hi[j - 1, k - 1])

    def moment_ratio_interval(self, j: int, k: int) -> tuple[float, float]:
        lo, hi = self.scaled_moment_ratio_interval(j, k)
        s = self.q.s_q ** k
        return lo * s, hi * s

    def minor_ratio_interval(self, j: int) -> tuple[float, float]:
        t = self.b[j - 1] / (1.0 - self.b[j - 1])
        lo, hi = self.growth_factor_interval(j)
        return t * lo, t * hi

    def basis_weight_interval(self, j: int, l: int) -> tuple[float, float]:
        """Enclosure of the limit basis weight at (j, l); needs j + l <= j_max."""
        if j + l > self.j_max:
            raise IndexError("increase j_max to cover j + l")
        lo = hi = 1.0
        for i in range(l):
            glo, ghi = self.growth_factor_interval(j + i)
            lo *= glo
            hi *= ghi
        llo, lhi = self.minor_ratio_interval(j + l)
        m = self.q.moment(l + 1)
        return lo * llo * m, hi * lhi * m

    def width(self) -> float:
        w = float(np.max(self.gl_hi - self.gl_lo, initial=0.0))
        if self.rho_lo.size:
            w = max(w, float(np.max(self.rho_hi - self.rho_lo)))
        return w


def _limit_sweep(t, mu, s_q, j_max, k_max):
    """One backward sweep; returns finite-depth gl and scaled rho windows."""
    depth = len(t)
    m1 = mu[1] * s_q
    width = max(k_max, 1) + depth
    row = mu[2: width + 2] / mu[1]
    gl = np.zeros(j_max)
    rho = np.zeros((j_max, k_max))
    for j in range(depth, 0, -1):
        tj = t[j - 1]
        den = tj * m1 + s_q * row[0]
        if j <= j_max:
            gl[j - 1] = 1.0 / den
        w = len(row) - 1
        row = s_q * (tj * mu[2: w + 2] + row[1: w + 1]) / den
        if j <= j_max:
            rho[j - 1] = row[:k_max]
    return gl, rho


_TAIL_SAFETY = 2.0
_TAIL_RATIO_CAP = 0.95


def _geometric_pad(last_step: np.ndarray, prev_step: np.ndarray) -> np.ndarray:
    """Tail estimate for a monotone sequence from its last two decrements."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(prev_step > 0, last_step / prev_step, 0.0)
    ratio = np.clip(ratio, 0.0, _TAIL_RATIO_CAP)
    return _TAIL_SAFETY * last_step * ratio / (1.0 - ratio) + last_step


def ratio_limits(q: MomentSequence, path_source, *, tol: float = 1e-10,
                 j_max: int = 1, k_max: int = 1, depth_start: int = 32,
                 depth_max: int = 32768, require: bool = False) -> RatioLimits:
    """Bracket the infinite-path ratio limits by a doubling schedule.

    The depth doubles until every requested growth factor and scaled moment
    ratio moves by less than `tol` between doublings.  Both families are
    monotone in the depth, so one end of each bracket is exact; the other
    end pads the deepest value by a geometric extrapolation of the
    observed decrements (the convergence rate has no proven bound, so that
    end is an estimate).

    Args:
        q: mutant distribution.
        path_source: callable(num) -> first `num` mutation probabilities
            (must be prefix-stable), or a plain sequence.
        tol: movement between doublings demanded of every quantity.
        j_max: positions 1..j_max are bracketed.
        k_max: moment-ratio columns 1..k_max are bracketed.
        depth_start / depth_max: doubling schedule.
        require: raise ConvergenceFailure instead of returning an
            unconverged result.
    """
    if callable(path_source):
        fetch = lambda num: _path_values(path_source(num))
        available = depth_max
    else:
        fixed = _path_values(path_source)
        available = len(fixed)
        fetch = lambda num: fixed[:num]
    depth = min(max(depth_start, j_max + 2), available)
    prev = None          # (gl, rho) one doubling ago
    prev_step = None     # decrements of the doubling before that
    result = None
    while True:
        b = fetch(depth)
        if len(b) < depth:
            raise ValueError("path source returned fewer values than requested")
        mu = q.scaled_moments(min(q.k_cap, max(k_max, 1) + depth + 1))
        if len(mu) < max(k_max, 1) + depth + 2:
            break
        gl, rho = _limit_sweep(_inverse_odds(b), mu, q.s_q, j_max, k_max)
        if prev is not None:
            gl_step = np.abs(prev[0] - gl)       # gl decreases with depth
            rho_step = np.abs(rho - prev[1])     # rho increases with depth
            if prev_step is None:
                gl_pad = _geometric_pad(gl_step, gl_step)
                rho_pad = _geometric_pad(rho_step, rho_step)
            else:
                gl_pad = _geometric_pad(gl_step, prev_step[0])
                rho_pad = _geometric_pad(rho_step, prev_step[1])
            moved = max(gl_step.max(initial=0.0), rho_step.max(initial=0.0))
            result = RatioLimits(q=q, b=b, depth=depth, converged=moved < tol,
                                 j_max=j_max, k_max=k_max,
                                 gl_lo=gl - gl_pad, gl_hi=gl,
                                 rho_lo=rho, rho_hi=rho + rho_pad)
            if result.converged:
                return result
            prev_step = (gl_step, rho_step)
        prev = (gl, rho)
        if depth >= min(depth_max, available):
            break
        depth = min(depth * 2, depth_max, available)
    if result is None:
        raise ValueError("path or moment cache cannot support two doublings")
    if require:
        raise ConvergenceFailure(
            f"movement {result.width():.3e} above tol={tol} at depth {result.depth}",
            result=result)
    return result


# ---------------------------------------------------------------------------
# batched kernel for Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchResult:
    """Vectorized backward sweep over a batch of paths.

    All arrays are indexed by sample and hold the plain finite-n values:
    lower bounds of the limits for moment ratios, upper bounds for growth
    factors, both monotone in n with stable path prefixes.
    """

    rho2: np.ndarray          # (S, k_at_2) scaled moment ratios at position 2
    gl: np.ndarray | None     # (S, n) growth factors of every position
    captures: dict            # (level, k) -> array of shape (S,)


def batched_backward(q: MomentSequence, b_matrix: np.ndarray, *,
                     k_at_2: int = 1, keep_gl: bool = False,
                     captures: Sequence[tuple[int, int]] = ()) -> BatchResult:
    """Run the backward sweep on a batch of paths at once.

    Args:
        q: mutant distribution.
        b_matrix: (samples, n) mutation probabilities per path.
        k_at_2: how many scaled moment-ratio columns to keep at position 2.
        keep_gl: keep the growth factors of every position.
        captures: extra (level, k) scaled moment ratios to record.
    """
    b = np.asarray(b_matrix, dtype=float)
    if b.ndim != 2:
        raise ValueError("b_matrix must be (samples, n)")
    if np.any((b < 0.0) | (b >= 1.0)):
        raise ValueError("mutation probabilities must lie in [0, 1)")
    s, n = b.shape
    if n < 2:
        raise ValueError("paths must have length >= 2")
    t = b / (1.0 - b)
    s_q = q.s_q
    width = k_at_2 + n
    mu = q.scaled_moments(min(q.k_cap, width + 1))
    if len(mu) < width + 2:
        raise ValueError(f"moment cache {q.k_cap} too short for n={n}, k={k_at_2}")
    m1 = mu[1] * s_q

    row = np.broadcast_to(mu[2: width + 2] / mu[1], (s, width)).copy()
    gl = np.empty((s, n)) if keep_gl else None
    want = {}
    for level, k in captures:
        want.setdefault(level, []).append(k)
    got = {}
    rho2 = None
    for j in range(n, 0, -1):
        tj = t[:, j - 1: j]
        den = tj * m1 + s_q * row[:, :1]
        if keep_gl:
            gl[:, j - 1] = 1.0 / den[:, 0]
        w = row.shape[1] - 1
        row = s_q * (tj * mu[2: w + 2] + row[:, 1: w + 1]) / den
        if j in want:
            for k in want[j]:
                if k > row.shape[1]:
                    raise ValueError(f"capture k={k} beyond width at level {j}")
                got[(j, k)] = row[:, k - 1].copy()
        if j == 2:
            rho2 = row[:, :k_at_2].copy()
    return BatchResult(rho2=rho2, gl=gl, captures=got)


# ---------------------------------------------------------------------------
# determinant oracle
# ---------------------------------------------------------------------------

_ORACLE_MAX = 20


class HessenbergMatrix:
    """Dense square matrix with the sign pattern the model's matrices share.

    Entries are strictly positive on and above the diagonal, strictly
    negative on the first subdiagonal, and zero below it.  Determinants of
    such matrices expand into a sum of strictly positive terms indexed by
    increasing cut sequences, which `det_by_path_expansion` evaluates
    literally.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("square matrix required")
        n = a.shape[0]
        iu, ju = np.triu_indices(n)
        if np.any(a[iu, ju] <= 0.0):
            raise ValueError("upper part (incl. diagonal) must be strictly positive")
        if n > 1:
            sub = a[np.arange(1, n), np.arange(n - 1)]
            if np.any(sub >= 0.0):
                raise ValueError("first subdiagonal must be strictly negative")
            il, jl = np.tril_indices(n, -2)
            if np.any(a[il, jl] != 0.0):
                raise ValueError("entries below the subdiagonal must be zero")
        object.__setattr__(self, "entries", a)

    def __setattr__(self, *a):
        raise AttributeError("HessenbergMatrix is immutable")

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def moment_matrix(q: MomentSequence, path, j: int = 1, row_shift: int = 0) -> HessenbergMatrix:
    """Moment matrix of the path segment j..n (size n - j + 2).

    The first row holds m_{1+row_shift}..m_{n-j+2+row_shift}; below it, row i
    carries -gamma_{j+i-2} on the subdiagonal and m_1, m_2, ... rightwards.
    Requires all b's in the segment strictly positive.
    """
    b = _path_values(path)
    n = len(b)
    if not 1 <= j <= n:
        raise ValueError(f"j={j} outside 1..{n}")
    if np.any(b[j - 1:] == 0.0):
        raise InfiniteOddsError("matrix entries infinite when some b_j = 0")
    gam = (1.0 - b) / b
    size = n - j + 2
    m = q.moments(size + row_shift + 1)
    a = np.zeros((size, size))
    for col in range(size):
        a[0, col] = m[col + 1 + row_shift]
    for i in range(1, size):
        a[i, i - 1] = -gam[j + i - 2]
        for col in range(i, size):
            a[i, col] = m[col - i + 1]
    return HessenbergMatrix(a)


def _block_terms(a: np.ndarray):
    """d(block) lookup: d[i][j] = a[i,j] * prod of |subdiag| inside rows i..j."""
    n = a.shape[0]
    sub = np.abs(np.concatenate(([1.0], a[np.arange(1, n), np.arange(n - 1)])))
    d = np.zeros((n, n))
    for i in range(n):
        prod = 1.0
        for j in range(i, n):
            if j > i:
                prod *= sub[j]
            d[i, j] = a[i, j] * prod
    return d


def _cut_product(d: np.ndarray, cuts: tuple[int, ...], n: int) -> float:
    prev = 0
    term = 1.0
    for c in cuts:
        term *= d[prev, c - 1]
        prev = c
    return term * d[prev, n - 1]


def det_by_path_expansion(mat: HessenbergMatrix) -> float:
    """Determinant as the literal sum over increasing cut sequences.

    Every term of the expansion is strictly positive; the number of terms is
    2^{n-1}, so the matrix size is capped at 20.
    """
    n = mat.size
    if n > _ORACLE_MAX:
        raise OracleSizeError(f"size {n} beyond oracle cap {_ORACLE_MAX}")
    d = _block_terms(mat.entries)
    total = 0.0
    interior = range(1, n)  # 0-based cut positions between rows
    for r in range(0, n):
        for cuts in itertools.combinations(interior, r):
            total += _cut_product(d, cuts, n)
    return total


def det_paths_through(mat: HessenbergMatrix, split: int) -> float:
    """Sum of expansion terms whose cut set contains position `split`.

    `split` is 1-based: the sum equals the product of the two corner-block
    determinants obtained by cutting between rows split and split + 1.
    """
    n = mat.size
    if n > _ORACLE_MAX:
        raise OracleSizeError(f"size {n} beyond oracle cap {_ORACLE_MAX}")
    if not 1 <= split < n:
        raise ValueError("split must be interior")
    d = _block_terms(mat.entries)
    total = 0.0
    interior = [c for c in range(1, n) if c != split]
    for r in range(0, n - 1):
        for extra in itertools.combinations(interior, r):
            cuts = tuple(sorted(extra + (split,)))
            total += _cut_product(d, cuts, n)
    return total


def det_by_elimination(mat: HessenbergMatrix) -> float:
    """LU-based determinant; the independent side of the oracle pair."""
    return float(np.linalg.det(mat.entries))


def corner_block(mat: HessenbergMatrix, i: int, j: int) -> HessenbergMatrix:
    """Sub-square with (i,i) and (j,j) as diagonal corners (1-based)."""
    return HessenbergMatrix(mat.entries[i - 1: j, i - 1: j])


# ---------------------------------------------------------------------------
# finite-difference verification of the derivative identities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    observed: float
    requirement: str
    margin: float
    fd_error: float

    @property
    def passed(self) -> bool:
        return self.margin > 10.0 * self.fd_error


@dataclass(frozen=True)
class DerivativeReport:
    checks: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def _log_det(q, b):
    return math.log(det_by_path_expansion(moment_matrix(q, b)))


def _second_diff(f, x, h):
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / h ** 2


def _mixed_diff(f, x, y, h):
    return (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h ** 2)


def _richardson(coarse, fine):
    """One-step refinement of an O(h^2) scheme plus a residual error gauge."""
    value = (4.0 * fine - coarse) / 3.0
    return value, abs(fine - coarse) / 3.0


def _guard_step(b, idx, h):
    if not (2 * h < b[idx] < 1.0 - 2 * h):
        raise StepTooLargeError(
            f"b_{idx + 1}={b[idx]} within 2h={2 * h} of the domain edge")


def derivative_checks(q: MomentSequence, path, i: int, j: int, *,
                      step: float = 1e-5, k: int = 2) -> DerivativeReport:
    """Finite-difference verification of the determinant derivative laws.

    Five families are checked on the given path (positions are 1-based,
    i < j required, n <= 10 so the determinant oracle applies):

    a. the logarithmic derivative of the determinant in the odds at
       position i lies strictly inside (b_i, 1/gamma_i);
    b. the mixed second partial of the log determinant in (b_i, b_j) is
       strictly positive;
    c. the cumulative log growth is strictly concave in b_j;
    d. the growth factor at i decreases in b_i and increases in b_j;
    e. the moment ratio R(1, k) decreases in b_j and is concave in b_i.

    Each check carries a margin and a finite-difference error estimate;
    it passes when the margin exceeds ten times the estimate.
    """
    b0 = _path_values(path).copy()
    n = len(b0)
    if not (1 <= i < j <= n):
        raise ValueError("need 1 <= i < j <= n")
    if n > 10:
        raise ValueError("derivative checks limited to n <= 10 (oracle range)")
    if np.any(b0 == 0.0):
        raise InfiniteOddsError("derivative checks need all b_j > 0")
    h = float(step)
    _guard_step(b0, i - 1, h)
    _guard_step(b0, j - 1, h)
    checks = []

    def with_b(idx_vals):
        b = b0.copy()
        for idx, val in idx_vals:
            b[idx] = val
        return b

    # a. logarithmic derivative wrt the odds: exact for the linear entry,
    #    evaluated at two symmetric steps to gauge roundoff
    gam = (1.0 - b0) / b0
    gi = gam[i - 1]

    def det_at_gamma(g):
        return det_by_path_expansion(moment_matrix(q, with_b([(i - 1, 1.0 / (1.0 + g))])))

    logders = []
    for delta in (0.5 * max(1.0, gi), 0.25 * max(1.0, gi)):
        d = (det_at_gamma(gi + delta) - det_at_gamma(gi - delta)) / (2.0 * delta)
        logders.append(d / det_at_gamma(gi))
    logder = logders[1]
    err_a = abs(logders[1] - logders[0]) + 1e-14 * (1.0 + abs(logder))
    checks.append(CheckResult(
        name="log_det_derivative_bracket",
        observed=logder,
        requirement=f"in ({b0[i-1]:.6g}, {1.0/gi:.6g})",
        margin=min(logder - b0[i - 1], 1.0 / gi - logder),
        fd_error=err_a))

    # b. mixed partial of log det in (b_i, b_j) > 0
    f_ij = lambda x, y: _log_det(q, with_b([(i - 1, x), (j - 1, y)]))
    coarse = _mixed_diff(f_ij, b0[i - 1], b0[j - 1], h)
    fine = _mixed_diff(f_ij, b0[i - 1], b0[j - 1], h / 2.0)
    mixed, err_b = _richardson(coarse, fine)
    err_b += 64.0 * np.finfo(float).eps * abs(_log_det(q, b0)) / h ** 2
    checks.append(CheckResult(
        name="log_det_mixed_partial_positive",
        observed=mixed, requirement="> 0", margin=mixed, fd_error=err_b))

    # c. cumulative log growth concave in b_j
    def log_growth(x):
        return cumulative_log_growth(ratio_table(q, with_b([(j - 1, x)])))

    coarse = _second_diff(log_growth, b0[j - 1], h)
    fine = _second_diff(log_growth, b0[j - 1], h / 2.0)
    curv, err_c = _richardson(coarse, fine)
    err_c += 64.0 * np.finfo(float).eps * abs(log_growth(b0[j - 1])) / h ** 2
    checks.append(CheckResult(
        name="log_growth_concave",
        observed=curv, requirement="< 0", margin=-curv, fd_error=err_c))

    # d. growth factor at i: decreasing in b_i, increasing in b_j (j > i)
    def growth_i(idx, x):
        return ratio_table(q, with_b([(idx, x)])).growth_factor(i)

    for idx, direction, name in ((i - 1, -1.0, "growth_factor_decreasing_own"),
                                 (j - 1, +1.0, "growth_factor_increasing_later")):
        d_coarse = (growth_i(idx, b0[idx] + h) - growth_i(idx, b0[idx] - h)) / (2.0 * h)
        d_fine = (growth_i(idx, b0[idx] + h / 2) - growth_i(idx, b0[idx] - h / 2)) / h
        slope, err = _richardson(d_coarse, d_fine)
        err += 8.0 * np.finfo(float).eps * abs(growth_i(idx, b0[idx])) / h
        checks.append(CheckResult(
            name=name, observed=slope,
            requirement="< 0" if direction < 0 else "> 0",
            margin=direction * slope, fd_error=err))

    # e. moment ratio R(1, k): decreasing in b_j, concave in b_i
    def ratio_1k(idx, x):
        return ratio_table(q, with_b([(idx, x)]), k_max=k).moment_ratio(1, k)

    d_coarse = (ratio_1k(j - 1, b0[j - 1] + h) - ratio_1k(j - 1, b0[j - 1] - h)) / (2.0 * h)
    d_fine = (ratio_1k(j - 1, b0[j - 1] + h / 2) - ratio_1k(j - 1, b0[j - 1] - h / 2)) / h
    slope, err_e1 = _richardson(d_coarse, d_fine)
    err_e1 += 8.0 * np.finfo(float).eps * abs(ratio_1k(j - 1, b0[j - 1])) / h
    checks.append(CheckResult(
        name="moment_ratio_decreasing",
        observed=slope, requirement="< 0", margin=-slope, fd_error=err_e1))

    f_conc = lambda x: ratio_1k(i - 1, x)
    coarse = _second_diff(f_conc, b0[i - 1], h)
    fine = _second_diff(f_conc, b0[i - 1], h / 2.0)
    curv, err_e2 = _richardson(coarse, fine)
    err_e2 += 64.0 * np.finfo(float).eps * abs(f_conc(b0[i - 1])) / h ** 2
    checks.append(CheckResult(
        name="moment_ratio_concave",
        observed=curv, requirement="< 0", margin=-curv, fd_error=err_e2))

    return DerivativeReport(checks=tuple(checks))

"""Exact iteration of fitness distributions in the closed mixture basis.

One generation maps a fitness distribution P to
(1 - b) * (size-biased P) + b * Q.  On the mixture basis {delta_h, Q, Q^1,
Q^2, ...} the size-biasing acts by shifting coefficients one slot to the
right, so the whole evolution is a small exact update of the coefficient
vector.  A direct pointwise iterator over atomic measures provides an
independent brute-force oracle for the same dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import AtomicMeasure, MixtureMeasure, MomentSequence
from . import ratios

__all__ = [
    "MutationPath", "DegenerateMeasureError", "forward_step",
    "backward_sequence", "forward_step_atomic", "atomic_iterate",
    "coefficient_expansion", "terminal_gap",
]


class DegenerateMeasureError(ValueError):
    """Size-biasing is undefined for a measure with zero mean."""


@dataclass(frozen=True)
class MutationPath:
    """A finite sequence of mutation probabilities b_1..b_n in [0, 1)."""

    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.values, dtype=float)
        if b.ndim != 1:
            raise ValueError("path must be one-dimensional")
        if np.any((b < 0.0) | (b >= 1.0)):
            raise ValueError("mutation probabilities must lie in [0, 1)")
        object.__setattr__(self, "values", b)

    @classmethod
    def constant(cls, b: float, n: int) -> "MutationPath":
        return cls(np.full(n, float(b)))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def gammas(self) -> np.ndarray:
        """Odds (1-b)/b; +inf where b = 0."""
        with np.errstate(divide="ignore"):
            return np.where(self.values > 0.0,
                            (1.0 - self.values) / np.maximum(self.values, 1e-300),
                            np.inf)

    @property
    def inverse_odds(self) -> np.ndarray:
        """t = b/(1-b); the finite parametrization of the odds."""
        return self.values / (1.0 - self.values)

    def __len__(self):
        return self.n


def forward_step(p: MixtureMeasure, b: float) -> MixtureMeasure:
    """One generation of selection plus mutation on the mixture basis.

    With M the mean of p: the condensate keeps (1-b) * condensate * h / M,
    each basis coefficient c_l sends (1-b) * c_l * (m_{l+1}/m_l) / M one
    slot up, and mutation deposits b on slot 0.
    """
    if not 0.0 <= b < 1.0:
        raise ValueError(f"b={b} outside [0, 1)")
    mean = p.mean()
    if mean <= 0.0:
        raise DegenerateMeasureError("measure has zero first moment")
    q = p.basis
    coeffs = np.zeros(len(p.coeffs) + 1)
    coeffs[0] = b
    for l, c in enumerate(p.coeffs):
        if c != 0.0:
            coeffs[l + 1] = (1.0 - b) * c * q.size_biased_moment(l, 1) / mean
    condensate = (1.0 - b) * p.condensate * p.h / mean
    # unresolved tail is size-biased by at most h/M; keep the conservative value
    unresolved = (1.0 - b) * p.unresolved * p.h / mean
    drift = 1.0 - (condensate + coeffs.sum() + unresolved)
    if abs(drift) > 1e-9:
        raise DegenerateMeasureError(f"mass drifted by {drift}")
    coeffs[0] += drift  # re-absorb float round-off where mutation mass sits
    return MixtureMeasure(basis=q, h=p.h, condensate=condensate,
                          coeffs=coeffs, unresolved=unresolved).trimmed()


def backward_sequence(path: MutationPath, terminal: MixtureMeasure) -> list[MixtureMeasure]:
    """States of the backward recursion, deepest first.

    Starting from the terminal state at position n, applies one generation
    with b_n, then b_{n-1}, ..., then b_1; entry i of the result is the
    state at position n - i, so the list ends with the position-0 state.
    """
    out = [terminal]
    for b in path.values[::-1]:
        out.append(forward_step(out[-1], b))
    return out


def forward_step_atomic(p: AtomicMeasure, b: float, q: AtomicMeasure) -> AtomicMeasure:
    """The same generation map evaluated pointwise on a finite grid."""
    if not 0.0 <= b < 1.0:
        raise ValueError(f"b={b} outside [0, 1)")
    mean = p.mean()
    if mean <= 0.0:
        raise DegenerateMeasureError("measure has zero first moment")
    grid = np.union1d(p.xs, q.xs)
    mass = np.zeros(len(grid))
    mass[np.searchsorted(grid, p.xs)] += (1.0 - b) * p.ws * p.xs / mean
    mass[np.searchsorted(grid, q.xs)] += b * q.ws
    return AtomicMeasure(grid, mass)


def atomic_iterate(p0: AtomicMeasure, path: MutationPath, q: MomentSequence | AtomicMeasure) -> AtomicMeasure:
    """Brute-force forward iteration on a finite grid.

    Applies the generation map with b_1, then b_2, ..., b_n.  `q` must be
    atomic; the result is exact up to float round-off.
    """
    if isinstance(q, MomentSequence):
        q = q.as_atomic()
    state = p0
    for b in path.values:
        state = forward_step_atomic(state, b, q)
    return state


def coefficient_expansion(q: MomentSequence, path: MutationPath) -> list[np.ndarray]:
    """Mixture coefficients of every backward state, computed by ratios.

    Row j (0-based, j = 0..n) gives the weights of {Q, Q^1, ..., Q^{n-j}}
    for the backward state at position j when the recursion terminates in Q
    itself.  Row 0 entry 0 equals b_1; each row sums to one.  Agrees with
    `backward_sequence` coefficient vectors identically -- the two routes
    are used as mutual oracles in the test suite.
    """
    state = ratios.ratio_table(q, path)
    return [state.coefficient_row(j) for j in range(path.n + 1)]


def terminal_gap(q: MomentSequence, path: MutationPath, h: float,
                 k_moments: int = 8) -> dict:
    """Distance between the two backward limits at the same truncation.

    Runs the backward recursion once from the mutant distribution and once
    from the point mass at h, then reports the moment gaps of the two
    position-0 states.  Whether the gaps vanish as the path grows is open
    for general deterministic paths; the function reports, it does not
    assert.
    """
    from_q = backward_sequence(path, MixtureMeasure.from_basis(q, h=h))[-1]
    from_top = backward_sequence(path, MixtureMeasure.point_mass(q, h))[-1]
    gaps = [abs(from_q.moment(k) - from_top.moment(k)) for k in range(1, k_moments + 1)]
    return {
        "from_q": from_q,
        "from_point_mass": from_top,
        "moment_gaps": np.array(gaps),
        "condensate_gap": abs(from_q.condensate - from_top.condensate),
    }

"""Small-scale invariant suite runnable from the command line.

Each check re-derives a structural property of the library from scratch at
desk scale and reports a named pass/fail line; the CLI's selftest command
prints them and sets the exit code.  A fault-injection hook lets the test
suite confirm that a corrupted input is actually caught by the checker
that owns the invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import AtomicMeasure, MixtureMeasure, MomentSequence, tv_distance_atomic
from .iteration import MutationPath, atomic_iterate, backward_sequence, coefficient_expansion
from . import ratios
from . import equilibrium as eq

__all__ = ["CheckLine", "run_selftest"]


@dataclass(frozen=True)
class CheckLine:
    name: str
    passed: bool
    detail: str


def _holder_chain(q: MomentSequence, k_top: int, fault: str | None) -> tuple[bool, str]:
    m = q.moments(k_top + 2)
    if fault == "holder":
        m = m.copy()
        m[3] = m[2]  # break strict decay of moment ratios
    worst = math.inf
    for j in range(1, k_top):
        worst = min(worst, m[j] / m[j + 1] - m[j + 1] / m[j + 2])
        worst = min(worst, 1.0 / m[1] - m[j] / m[j + 1])
    return worst > 0.0, f"min ratio gap {worst:.3e}"


def _monotone_ratios(q: MomentSequence, rng) -> tuple[bool, str]:
    b = rng.uniform(0.1, 0.9, size=12)
    worst = math.inf
    prev = ratios.ratio_table(q, b[:4], k_max=4)
    for n in range(5, 13):
        cur = ratios.ratio_table(q, b[:n], k_max=4)
        for j in range(1, 5):
            for k in range(1, 5):
                worst = min(worst, cur.scaled_moment_ratio(j, k) - prev.scaled_moment_ratio(j, k))
            worst = min(worst, prev.growth_factor(j) - cur.growth_factor(j))
        prev = cur
    return worst > 0.0, f"min monotone step {worst:.3e}"


def _envelope(q: MomentSequence, rng) -> tuple[bool, str]:
    b = rng.uniform(0.1, 0.9, size=16)
    st = ratios.ratio_table(q, b)
    m1 = q.moment(1)
    worst = math.inf
    for j in range(1, 17):
        lo, hi = ratios.growth_factor_bounds(q, b[j - 1])
        g = st.growth_factor(j)
        worst = min(worst, g - lo, hi - g)
        r = st.moment_ratio(j, 1)
        worst = min(worst, r - m1, 1.0 - r)
    return worst > 0.0, f"min envelope margin {worst:.3e}"


def _partial_row_identity(q: MomentSequence, rng) -> tuple[bool, str]:
    b = rng.uniform(0.1, 0.9, size=10)
    st = ratios.ratio_table(q, b, k_max=10)
    worst = 0.0
    for k in range(1, 10):
        prod = 1.0
        for j in range(1, k + 1):
            prod *= st.growth_factor(j)
        total = prod * st.moment_ratio(k + 1, k) + sum(st.basis_weight(1, i) for i in range(k))
        worst = max(worst, abs(total - 1.0))
    return worst < 1e-11, f"max identity residual {worst:.3e}"


def _oracle_agreement(q: MomentSequence, rng, fault: str | None) -> tuple[bool, str]:
    b = rng.uniform(0.15, 0.85, size=6)
    mat = ratios.moment_matrix(q, b)
    d_path = ratios.det_by_path_expansion(mat)
    d_elim = ratios.det_by_elimination(mat)
    if fault == "determinant":
        d_path *= 1.0 + 1e-6
    rel = abs(d_path - d_elim) / abs(d_elim)
    st = ratios.ratio_table(q, b)
    lhs = ratios.cumulative_log_growth(st)
    gam = (1.0 - b) / b
    rhs = float(np.sum(np.log(gam))) - math.log(d_elim)
    rel2 = abs(lhs - rhs)
    ok = rel < 1e-12 and rel2 < 1e-10
    return ok, f"det rel {rel:.2e}; log-growth gap {rel2:.2e}"


def _mixture_vs_atomic(rng) -> tuple[bool, str]:
    pts = np.sort(rng.uniform(0.05, 1.0, size=6))
    w = [float(x) for x in rng.dirichlet(np.ones(6))]
    w[-1] = 1.0 - math.fsum(w[:-1])
    q = MomentSequence.atomic(list(zip(pts, w)))
    path = MutationPath(rng.uniform(0.05, 0.9, size=10))
    mix = backward_sequence(path, MixtureMeasure.from_basis(q))[-1]
    atom = atomic_iterate(q.as_atomic(), MutationPath(path.values[::-1].copy()), q)
    tv = mix.as_atomic().tv_distance(atom)
    return tv < 1e-12, f"TV {tv:.3e}"


def _coefficient_agreement(q: MomentSequence, rng) -> tuple[bool, str]:
    path = MutationPath(rng.uniform(0.05, 0.9, size=8))
    rows = coefficient_expansion(q, path)
    seq = backward_sequence(path, MixtureMeasure.from_basis(q))
    worst = 0.0
    for j in range(path.n + 1):
        got = seq[path.n - j].coeffs
        want = rows[j]
        worst = max(worst, float(np.max(np.abs(got - want))))
        worst = max(worst, abs(want.sum() - 1.0))
    return worst < 1e-12, f"max coefficient gap {worst:.3e}"


def _kingman_fixed_points(rng) -> tuple[bool, str]:
    from .iteration import forward_step_atomic
    q = MomentSequence.atomic([(0.3, 0.4), (0.5, 0.35), (0.95, 0.25)])
    qa = q.as_atomic()
    interior = eq.kingman_equilibrium(q, 0.5)  # atom at the top forces interior
    fix1 = forward_step_atomic(interior.as_atomic(), 0.5, qa)
    tv1 = fix1.tv_distance(interior.as_atomic())
    q2 = MomentSequence.atomic([(0.2, 0.5), (0.5, 0.5)])
    cond = eq.kingman_equilibrium(q2, 0.2, h=1.0)
    fix2 = forward_step_atomic(cond.as_atomic(), 0.2, q2.as_atomic())
    tv2 = fix2.tv_distance(cond.as_atomic())
    ok = tv1 < 1e-10 and tv2 < 1e-10 and cond.branch == "condensed"
    return ok, f"interior TV {tv1:.2e}; condensed TV {tv2:.2e}"


def _derivative_spotcheck(q: MomentSequence) -> tuple[bool, str]:
    rep = ratios.derivative_checks(q, [0.3, 0.5, 0.7], 1, 3)
    bad = rep.failures()
    names = ";".join(c.name for c in bad) if bad else "none"
    return rep.all_passed, f"failing: {names}"


def _theta_identity() -> tuple[bool, str]:
    q = MomentSequence.uniform()
    worst = 0.0
    for t in (0.2, 0.5, 0.8):
        b, theta = eq.interior_curve_uniform(t)
        worst = max(worst, abs(eq.solve_theta(q, b) - theta))
    return worst < 1e-10, f"max |theta - closed form| {worst:.3e}"


def run_selftest(seed: int = 0, inject_fault: str | None = None) -> list[CheckLine]:
    """Run every named invariant at small scale.

    Args:
        seed: seed for the randomized instances (deterministic checks do
            not depend on it).
        inject_fault: name of a deliberate corruption ("holder" or
            "determinant") used to verify the checks actually reject bad
            data.
    """
    rng = np.random.default_rng(seed)
    q_uniform = MomentSequence.uniform()
    q_atomic = MomentSequence.atomic([(0.25, 0.3), (0.6, 0.45), (0.9, 0.25)])
    lines = []

    def run(name, fn, *args):
        try:
            ok, detail = fn(*args)
        except Exception as exc:  # a crash is a failure with the message attached
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        lines.append(CheckLine(name=name, passed=ok, detail=detail))

    run("moment_ratio_decay_strict", _holder_chain, q_atomic, 24, inject_fault)
    run("ratio_monotone_in_depth", _monotone_ratios, q_uniform, rng)
    run("growth_factor_envelope", _envelope, q_atomic, rng)
    run("partial_row_identity", _partial_row_identity, q_uniform, rng)
    run("determinant_oracle_agreement", _oracle_agreement, q_uniform, rng, inject_fault)
    run("mixture_atomic_iteration_match", _mixture_vs_atomic, rng)
    run("coefficient_expansion_match", _coefficient_agreement, q_uniform, rng)
    run("kingman_fixed_points", _kingman_fixed_points, rng)
    run("derivative_identities", _derivative_spotcheck, q_uniform)
    run("interior_root_closed_form", _theta_identity)
    return lines

"""Command-line front end.

Subcommands: kingman (closed-form equilibrium), criterion (condensation
criterion chain and verdict), compare (model comparison table), equilibrium
(sampled i.i.d. equilibrium), selftest (invariant suite).  Configuration
comes from an INI-style key=value file or a flat JSON object, with flags
overriding; identical (config, seed) pairs produce byte-identical output.

Exit codes: 0 success, 1 selftest failure, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from .measures import MomentSequence
from . import equilibrium as eq
from . import random_models as rm
from .selftest import run_selftest

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Run parameters shared by the subcommands."""

    q_spec: str = "uniform"
    beta_spec: str = "degenerate b=0.5"
    h: float | None = None
    limit_tol: float = 1e-10
    root_tol: float = 1e-12
    mc_tol: float = 1e-6
    n_trunc: int = 256
    l_max: int = 128
    k_max: int = 128
    k_list: tuple = (1, 2, 3)
    samples: int = 20000
    seed: int = 0
    workers: int = 1
    out: str | None = None
    format: str = "csv"

    def validate(self) -> "RunConfig":
        for name in ("limit_tol", "root_tol", "mc_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.samples < 2:
            raise ConfigError("samples must be at least 2")
        try:
            q = MomentSequence.from_spec(self.q_spec)
        except ValueError as exc:
            raise ConfigError(f"bad q_spec: {exc}") from exc
        if self.h is not None and self.h < q.s_q - 1e-15:
            raise ConfigError(f"h={self.h} below the support supremum {q.s_q}")
        try:
            rm.MutationLaw.from_spec(self.beta_spec)
        except ValueError as exc:
            raise ConfigError(f"bad beta_spec: {exc}") from exc
        return self


_INT_KEYS = {"n_trunc", "l_max", "k_max", "samples", "seed", "workers"}
_FLOAT_KEYS = {"h", "limit_tol", "root_tol", "mc_tol"}


def _coerce(key: str, value):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key == "k_list":
        if isinstance(value, str):
            return tuple(int(x) for x in value.replace(",", " ").split())
        return tuple(int(x) for x in value)
    return value


def load_config(path: str) -> RunConfig:
    """Read an INI-style key=value file (section headers allowed) or JSON."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {}
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ConfigError("JSON config must be an object")
        items = raw.items()
    else:
        parser = configparser.ConfigParser()
        try:
            parser.read_string("[DEFAULT]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        items = []
        for section in ["DEFAULT", *parser.sections()]:
            items.extend(parser[section].items())
    for key, value in items:
        key = key.strip()
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = _coerce(key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return RunConfig(**values)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x + 0.0) if x == 0.0 else repr(x)
    return str(x)


def emit_rows(header: list[str], rows: list[list], fmt: str, out: str | None) -> None:
    """Write rows as CSV (comma separator, dot decimal) or JSON records."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in rows:
            buf.write(",".join(_fmt(x) for x in row) + "\n")
        payload = buf.getvalue()
    else:
        records = [dict(zip(header, row)) for row in rows]
        payload = json.dumps(records, sort_keys=True, indent=2,
                             default=_fmt) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _setup(args) -> tuple[RunConfig, MomentSequence, rm.MutationLaw]:
    cfg = load_config(args.config) if args.config else RunConfig()
    for key in ("seed", "samples", "out", "format", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "q", None):
        cfg.q_spec = args.q
    if getattr(args, "beta", None):
        cfg.beta_spec = args.beta
    if getattr(args, "h", None) is not None:
        cfg.h = args.h
    cfg.validate()
    q = MomentSequence.from_spec(cfg.q_spec)
    law = rm.MutationLaw.from_spec(cfg.beta_spec)
    return cfg, q, law


def cmd_kingman(args) -> int:
    cfg, q, law = _setup(args)
    b = law.mean
    h = cfg.h if cfg.h is not None else q.s_q
    ke = eq.kingman_equilibrium(q, b, h)
    rows = [["branch", ke.branch, "", ""],
            ["b", b, 0.0, ""],
            ["h", h, 0.0, ""]]
    if ke.branch == "interior":
        rows.append(["theta", ke.theta, cfg.root_tol, ""])
    else:
        rows.append(["condensate", ke.condensate, cfg.root_tol, ""])
    rows.append(["mean_fitness", ke.mean_fitness(), cfg.root_tol, ""])
    for k in cfg.k_list:
        rows.append([f"moment_k={k}", ke.moment(k), cfg.root_tol, ""])
    rows.append(["growth_factor", eq.equilibrium_growth_factor(q, b), cfg.root_tol, ""])
    emit_rows(["quantity", "value", "tolerance", "note"], rows, cfg.format, cfg.out)
    return EXIT_OK


def cmd_criterion(args) -> int:
    cfg, q, law = _setup(args)
    h = cfg.h if cfg.h is not None else q.s_q
    shared = rm.estimate_log_growth_shared(law, q, samples=cfg.samples, seed=cfg.seed)
    iid = rm.estimate_log_growth_iid(law, q, samples=cfg.samples, seed=cfg.seed,
                                     tol=cfg.mc_tol, n_max=cfg.n_trunc)
    const = math.log(eq.equilibrium_growth_factor(q, law.mean))
    verdict = rm.condensation_verdict(h, q, iid)
    rows = [
        ["log_growth_shared", shared.value, shared.combined_error, ""],
        ["log_growth_iid", iid.value, iid.combined_error,
         f"n_trunc={iid.n_trunc}"],
        ["log_growth_constant", const, cfg.root_tol, ""],
        ["criterion_threshold", verdict.threshold, 0.0, f"h={h!r}"],
        ["verdict_margin_sigmas", verdict.margin_sigmas, 0.0, ""],
        ["verdict", verdict.verdict, "",
         "sufficient_only" if verdict.sufficient_only else "two_sided"],
    ]
    emit_rows(["quantity", "value", "error", "note"], rows, cfg.format, cfg.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg, q, law = _setup(args)
    report = rm.compare_models(law, q, k_list=cfg.k_list, samples=cfg.samples,
                               seed=cfg.seed, n_trunc=cfg.n_trunc, l_max=cfg.l_max)
    rows = [[r.quantity, r.model, r.estimate, r.std_error, r.paper_direction,
             r.satisfied] for r in report.rows]
    emit_rows(["quantity", "model", "estimate", "std_error", "paper_direction",
               "satisfied"], rows, cfg.format, cfg.out)
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    cfg, q, law = _setup(args)
    sample = rm.sample_equilibrium_iid(law, q, n_trunc=cfg.n_trunc,
                                       l_max=cfg.l_max, seed=cfg.seed,
                                       sample_index=args.sample_index)
    mix = sample.mixture
    rows = [
        ["condensate", mix.condensate, sample.residual, ""],
        ["condensate_interval_low", sample.condensate_interval[0], 0.0, ""],
        ["condensate_interval_high", sample.condensate_interval[1], 0.0, ""],
        ["unresolved", mix.unresolved, 0.0, ""],
        ["truncation_warning", sample.truncation_warning, 0.0, ""],
    ]
    for k in cfg.k_list:
        rows.append([f"moment_k={k}", mix.moment(k), sample.residual, ""])
    for l, c in enumerate(mix.coeffs):
        rows.append([f"coeff_l={l}", float(c), 0.0, ""])
    emit_rows(["quantity", "value", "error", "note"], rows, cfg.format, cfg.out)
    return EXIT_OK


def cmd_selftest(args) -> int:
    cfg, _, _ = _setup(args)
    lines = run_selftest(seed=cfg.seed, inject_fault=args.inject_fault)
    rows = [[line.name, "pass" if line.passed else "FAIL", line.detail]
            for line in lines]
    emit_rows(["invariant", "status", "detail"], rows, cfg.format, cfg.out)
    failed = [line for line in lines if not line.passed]
    for line in failed:
        print(f"selftest failure: {line.name}: {line.detail}", file=sys.stderr)
    return EXIT_SELFTEST if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kingman",
        description="Mutation-selection equilibria: closed forms, criteria, comparisons.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI key=value or JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--workers", type=int, default=None,
                       help="worker hint; results are identical for any value")
        p.add_argument("--q", default=None, help="mutant distribution spec")
        p.add_argument("--beta", default=None, help="mutation-probability law spec")
        p.add_argument("--h", type=float, default=None, help="top fitness value")

    for name, fn in (("kingman", cmd_kingman), ("criterion", cmd_criterion),
                     ("compare", cmd_compare), ("equilibrium", cmd_equilibrium),
                     ("selftest", cmd_selftest)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn)
        if name == "equilibrium":
            p.add_argument("--sample-index", type=int, default=0)
        if name == "selftest":
            p.add_argument("--inject-fault", default=None,
                           help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage already; normalize other codes
        return EXIT_CONFIG if exc.code not in (0,) else 0
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (eq.NumericFailure, eq.WrongBranchError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

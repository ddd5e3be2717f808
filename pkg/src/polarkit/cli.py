"""Experiment driver: subcommands over the library with reproducible output.

Configuration is a flat key=value file (one experiment per file); command
line flags override file values.  Every run is a pure function of the
resolved config, so reruns produce byte-identical output.  Exit codes:
0 success, 2 invalid kernel, 3 budget exceeded, 4 bad config or usage.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, fields, replace

from . import becpolar, codec, construct
from .asymptotics import loglog_exponent, polar_threshold, q_function, q_inverse
from .becpolar import DEFAULT_BUDGET
from .errors import (
    BudgetExceeded,
    DimensionTooLarge,
    DomainError,
    NotPolarizing,
    PolarkitError,
    PrefixTooDeep,
    SingularMatrix,
)
from .gf2kernel import BitMatrix, kernel_profile
from .serialize import dumps_17g, fmt_real

EXIT_OK = 0
EXIT_BAD_KERNEL = 2
EXIT_BUDGET = 3
EXIT_BAD_CONFIG = 4

DEFAULT_PATHS = 100000


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment parameters; round-trips through key=value text."""

    kernel: str = "10;11"
    eps: float = 0.5
    n: tuple = (10,)
    rate: tuple = (0.5,)
    t: tuple = (0.0,)
    beta: tuple = (0.4, 0.6)
    seed: int = 1
    trials: int = 10000
    paths: int = DEFAULT_PATHS
    budget: int = DEFAULT_BUDGET
    out: str = ""

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                s = ",".join(
                    fmt_real(x) if isinstance(x, float) else str(x) for x in v
                )
            elif isinstance(v, float):
                s = fmt_real(v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key == "kernel" or key == "out":
            return raw
        if key == "eps":
            return float(raw)
        if key in ("seed", "trials", "paths", "budget"):
            return int(raw)
        if key == "n":
            return tuple(int(p) for p in raw.split(",") if p.strip())
        if key in ("rate", "t", "beta"):
            return tuple(float(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    raise ConfigError(f"unknown config key {key!r}")


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, raw = line.partition("=")
        key = key.strip()
        cfg = replace(cfg, **{key: _parse_value(key, raw)})
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for key in ("kernel", "eps", "n", "rate", "t", "beta", "seed",
                "trials", "paths", "budget", "out"):
        v = getattr(args, key, None)
        if v is None:
            continue
        overrides[key] = _parse_value(key, v) if isinstance(v, str) else v
    if overrides:
        try:
            cfg = replace(cfg, **overrides)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    if not cfg.n or any(d < 0 for d in cfg.n):
        raise ConfigError("n must list nonnegative depths")
    if math.isnan(cfg.eps) or not 0.0 <= cfg.eps <= 1.0:
        raise ConfigError("eps must lie in [0, 1]")
    if cfg.trials < 1 or cfg.paths < 1 or cfg.budget < 1:
        raise ConfigError("trials, paths and budget must be positive")
    return cfg


def _kernel(cfg: ExperimentConfig) -> BitMatrix:
    try:
        return BitMatrix.from_literal(cfg.kernel)
    except (DomainError, DimensionTooLarge) as exc:
        raise ConfigError(f"bad kernel literal: {exc}") from exc


def _exact_cdf(g, cfg, depth):
    return becpolar.enumerate_level(g, cfg.eps, depth, budget=cfg.budget)


def cmd_kernel_analyze(cfg: ExperimentConfig) -> str:
    prof = kernel_profile(_kernel(cfg))
    doc = {
        "kernel": prof.kernel.to_literal(),
        "ell": prof.ell,
        "partial_distances": list(prof.partial_distances),
        "exponent": prof.exponent,
        "second_exponent": prof.second_exponent,
        "row_weights": list(prof.row_weights),
        "weight_exponent": prof.weight_exponent,
        "weight_second_exponent": prof.weight_second_exponent,
        "derived_h": prof.derived_h.to_literal(),
        "h_partial_distances": list(prof.h_partial_distances),
        "h_exponent": prof.h_exponent,
        "h_second_exponent": prof.h_second_exponent,
        "h_monotone": prof.h_monotone,
        "c3_constant": prof.c3_constant,
        "comp_branch_degrees": list(prof.comp_branch_degrees),
        "comp_branch_indices": list(prof.comp_branch_indices),
        "comp_map_consistent": prof.comp_map_consistent,
    }
    return dumps_17g(doc, indent=2) + "\n"


def cmd_polarize(cfg: ExperimentConfig) -> str:
    """Level CDF at depth n[0]: exact within budget, sampled beyond it."""
    g = _kernel(cfg)
    depth = cfg.n[0]
    if g.ell**depth <= cfg.budget:
        cdf = _exact_cdf(g, cfg, depth)
    else:
        samples = becpolar.sample_paths(g, cfg.eps, depth, cfg.paths, cfg.seed)
        cdf = becpolar.level_from_samples(samples, g, cfg.eps, depth, cfg.seed)
    return cdf.to_csv()


def cmd_scaling_verify(cfg: ExperimentConfig) -> str:
    g = _kernel(cfg)
    prof = kernel_profile(g)
    channel_i = 1.0 - cfg.eps
    lines = ["n,t,exact_F,predicted,abs_error"]
    for depth in cfg.n:
        cdf = _exact_cdf(g, cfg, depth)
        for tval in cfg.t:
            thr = polar_threshold(depth, tval, prof, side="good")
            exact = float(cdf.cdf_at_neglog(thr.neglog2()))
            pred = channel_i * q_function(tval)
            lines.append(
                ",".join(
                    [
                        str(depth),
                        fmt_real(tval),
                        fmt_real(exact),
                        fmt_real(pred),
                        fmt_real(abs(exact - pred)),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def cmd_exponent_verify(cfg: ExperimentConfig) -> str:
    g = _kernel(cfg)
    lines = ["n,beta,fraction"]
    for depth in cfg.n:
        cdf = _exact_cdf(g, cfg, depth)
        for beta in cfg.beta:
            lam = math.pow(g.ell, beta * depth)
            frac = float(cdf.cdf_at_neglog(lam))
            lines.append(
                ",".join([str(depth), fmt_real(beta), fmt_real(frac)])
            )
    return "\n".join(lines) + "\n"


def _loglog(v, ell: int) -> float:
    return loglog_exponent(v, ell)


def cmd_selection_compare(cfg: ExperimentConfig) -> str:
    """polar / rm / hybrid selections at rate[0], overlap against RM rate[-1]."""
    g = _kernel(cfg)
    prof = kernel_profile(g)
    r = cfg.rate[0]
    r_rm = cfg.rate[-1]
    beta = cfg.beta[0]
    tval = cfg.t[0]
    lines = ["n,rule,union_bound_loglog,dmin,map_lower_loglog,overlap_with_rm"]
    for depth in cfg.n:
        cdf = _exact_cdf(g, cfg, depth)
        rm = construct.rm_selection(g, depth, r_rm)
        rows = [
            ("polar", construct.polar_selection(cdf, r)),
            ("rm", construct.rm_selection(g, depth, r)),
        ]
        m = construct.default_prefix_depth(depth, beta, prof, budget=cfg.budget)
        prefix = _exact_cdf(g, cfg, m) if m < depth else cdf
        rows.append(
            (
                "hybrid",
                construct.hybrid_selection(
                    prefix, g, depth, r, beta, tval, pad_cdf=cdf
                ),
            )
        )
        for rule, sel in rows:
            bounds = construct.selection_bounds(sel, cdf, prof, cfg.eps)
            lines.append(
                ",".join(
                    [
                        str(depth),
                        rule,
                        fmt_real(_loglog(bounds.union_bound, g.ell)),
                        str(bounds.dmin_upper),
                        fmt_real(_loglog(bounds.map_lower, g.ell)),
                        fmt_real(construct.overlap_fraction(sel, rm)),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def cmd_codec_sim(cfg: ExperimentConfig) -> str:
    g = _kernel(cfg)
    prof = kernel_profile(g)
    header = None
    rows = []
    for depth in cfg.n:
        cdf = _exact_cdf(g, cfg, depth)
        for r in cfg.rate:
            sel = construct.polar_selection(cdf, r)
            code = codec.PolarCode.from_selection(prof, sel)
            rep = codec.simulate(code, cfg.eps, cfg.trials, cfg.seed)
            head, row = rep.to_csv().strip().split("\n")
            header = head
            rows.append(row)
    return header + "\n" + "\n".join(rows) + "\n"


def cmd_map_bound(cfg: ExperimentConfig) -> str:
    """Weight-side bound table: log-log of the MAP lower bound vs its limit.

    theorem3_rhs = n*E_w + sqrt(n*V_w) * Qinv(rate / I); requires rate < I.
    """
    g = _kernel(cfg)
    prof = kernel_profile(g)
    channel_i = 1.0 - cfg.eps
    lines = ["n,rate,dmin_upper,map_lower_loglog,sc_union_loglog,theorem3_rhs"]
    for depth in cfg.n:
        cdf = _exact_cdf(g, cfg, depth)
        for r in cfg.rate:
            if not 0.0 < r < channel_i:
                raise ConfigError(
                    f"rate {fmt_real(r)} must lie inside (0, I={fmt_real(channel_i)})"
                )
            sel = construct.polar_selection(cdf, r)
            bounds = construct.selection_bounds(sel, cdf, prof, cfg.eps)
            rhs = depth * prof.weight_exponent + math.sqrt(
                depth * prof.weight_second_exponent
            ) * q_inverse(r / channel_i)
            lines.append(
                ",".join(
                    [
                        str(depth),
                        fmt_real(r),
                        str(bounds.dmin_upper),
                        fmt_real(_loglog(bounds.map_lower, g.ell)),
                        fmt_real(_loglog(bounds.union_bound, g.ell)),
                        fmt_real(rhs),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


_COMMANDS = {
    "kernel-analyze": cmd_kernel_analyze,
    "polarize": cmd_polarize,
    "scaling-verify": cmd_scaling_verify,
    "exponent-verify": cmd_exponent_verify,
    "selection-compare": cmd_selection_compare,
    "codec-sim": cmd_codec_sim,
    "map-bound": cmd_map_bound,
}


class _Parser(argparse.ArgumentParser):
    """argparse that exits with the bad-config code on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="polarkit", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value experiment file")
        p.add_argument("--kernel", help="kernel literal, rows ';'-joined")
        p.add_argument("--eps", help="erasure probability")
        p.add_argument("--n", help="depth or comma sweep, e.g. 12,16,20")
        p.add_argument("--rate", help="rate or comma list")
        p.add_argument("--t", help="deviation t or comma grid")
        p.add_argument("--beta", help="exponent beta or comma grid")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--budget", type=int)
        p.add_argument("--out", help="output path (stdout when omitted)")
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        text = _COMMANDS[args.command](cfg)
    except (NotPolarizing, SingularMatrix) as exc:
        print(f"polarkit: invalid kernel: {exc}", file=sys.stderr)
        return EXIT_BAD_KERNEL
    except (BudgetExceeded, PrefixTooDeep, DimensionTooLarge) as exc:
        print(f"polarkit: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, DomainError) as exc:
        print(f"polarkit: bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except PolarkitError as exc:
        print(f"polarkit: bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Usage::

    quantcurve [COMMAND] --config run.cfg [--set key=value ...]

Commands: ``fit``, ``qdensity``, ``auction``, ``experiment`` and ``echo``
(sample round trip).  The command may also be given as ``command=`` in the
config.  Exit status is 0 on success, 1 on a validation error and 2 on a
runtime failure.
"""

from __future__ import annotations

import argparse
import itertools
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bahadur import plugin_beta
from .basis import ORDERING, enumerate_indices
from .errors import DomainError
from .estimator import EvalPoint, InnerRegion, fit_at, fit_grid, thread_count
from .files import (
    Config,
    ConfigError,
    DataError,
    apply_overrides,
    atomic_write_text,
    ingest_csv,
    read_config,
    render_csv,
    write_sample_csv,
)
from .kernel import DEFAULT_FAMILY, FAMILIES, SUPPORT_RADIUS, KernelSpec
from .mc_lab import RateExperiment, run_experiment
from .qdensity import (
    SCHEME_KINDS,
    apply_scheme,
    asymptotic_variance,
    auction_private_value,
    fits_inside,
    kde_at,
    make_scheme,
    one_sided_fallback,
)

COMMANDS = ("fit", "qdensity", "auction", "experiment", "echo")
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    input: Path | None = None
    output: Path | None = None
    p: int = 1
    kernel: str = DEFAULT_FAMILY
    alphas: list = field(default_factory=list)
    hs: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    scheme: str = "central"
    scheme_order: int = 2
    nodes: list | None = None
    h_q: float | None = None
    h_q_ratio: float = 1.0
    bidders: int | None = None
    variance: bool = False
    bahadur: bool = False
    experiment: Config | None = None


def _x_grid(cfg: Config):
    if cfg.has("x"):
        return cfg.vectors("x")
    if not cfg.has("x_min"):
        return []
    lo = cfg.vectors("x_min")[0]
    hi = cfg.vectors("x_max")[0] if cfg.has("x_max") else None
    if hi is None or len(hi) != len(lo):
        raise ConfigError("x_max", "must be given with the same length as x_min")
    count = cfg.int("x_count", required=True)
    if count < 1:
        raise ConfigError("x_count", "must be >= 1")
    axes = [np.linspace(a, b, count) for a, b in zip(lo, hi)]
    return [tuple(float(c) for c in pt) for pt in itertools.product(*axes)]


def _existing(cfg: Config, key: str) -> Path:
    p = Path(cfg.one(key, required=True))
    if not p.is_file():
        raise ConfigError(key, f"file not found: {p}")
    return p


def build_run_config(raw: dict, command: str | None = None) -> RunConfig:
    """Validate a parsed config; raises :class:`ConfigError` naming the field."""
    cfg = Config(raw)
    # a command given on the command line takes precedence over command=
    command = command or cfg.one("command")
    if command is None:
        raise ConfigError("command", "missing; give it on the command line or as command=")
    if command not in COMMANDS:
        raise ConfigError("command", f"unknown command {command!r}; choose from {COMMANDS}")

    if command == "experiment":
        if cfg.has("experiment"):
            exp_raw = read_config(_existing(cfg, "experiment"))
            # keys in the run config (including --set) override the experiment file
            exp_raw.update({k: v for k, v in raw.items() if k not in ("command", "experiment", "output")})
        else:
            exp_raw = {k: v for k, v in raw.items() if k not in ("command", "output")}
        RateExperiment.from_config(Config(exp_raw))
        return RunConfig(command, output=Path(cfg.one("output", required=True)), experiment=Config(exp_raw))

    rc = RunConfig(command, input=_existing(cfg, "input"), output=Path(cfg.one("output", required=True)))
    if command == "echo":
        return rc

    rc.p = cfg.int("p", 1)
    if rc.p < 0:
        raise ConfigError("p", f"must be >= 0, got {rc.p}")
    rc.kernel = cfg.one("kernel", DEFAULT_FAMILY)
    if rc.kernel not in FAMILIES:
        raise ConfigError("kernel", f"unknown family {rc.kernel!r}; choose from {FAMILIES}")
    rc.alphas = cfg.floats("alpha")
    rc.hs = cfg.floats("h")
    rc.xs = _x_grid(cfg)
    for key, grid in (("alpha", rc.alphas), ("h", rc.hs), ("x", rc.xs)):
        if not grid:
            raise ConfigError(key, "grid is empty")
    for a in rc.alphas:
        if not 0.0 < a < 1.0:
            raise ConfigError("alpha", f"must lie in (0, 1), got {a}")
    for h in rc.hs:
        if not h > 0:
            raise ConfigError("h", f"must be positive, got {h}")
    if len({len(x) for x in rc.xs}) != 1:
        raise ConfigError("x", "all evaluation points must have the same dimension")

    if command in ("qdensity", "auction"):
        rc.scheme = cfg.one("scheme", "central")
        if rc.scheme not in SCHEME_KINDS:
            raise ConfigError("scheme", f"unknown scheme {rc.scheme!r}; choose from {SCHEME_KINDS}")
        rc.scheme_order = cfg.int("scheme_order", 2 if rc.scheme == "central" else 1)
        if rc.scheme == "custom-nodes":
            rc.nodes = cfg.floats("nodes")
        rc.h_q = cfg.float("h_q")
        rc.h_q_ratio = cfg.float("h_q_ratio", 1.0)
        if rc.h_q is not None and not rc.h_q > 0:
            raise ConfigError("h_q", f"must be positive, got {rc.h_q}")
        if not rc.h_q_ratio > 0:
            raise ConfigError("h_q_ratio", f"must be positive, got {rc.h_q_ratio}")
        try:
            make_scheme(rc.scheme, rc.scheme_order, rc.nodes)
        except DomainError as exc:
            raise ConfigError("scheme", str(exc)) from None
        rc.variance = cfg.bool("variance", False)
        rc.bahadur = cfg.bool("bahadur", False)
    if command == "auction":
        rc.bidders = cfg.int("bidders", required=True)
        if rc.bidders < 2:
            raise ConfigError("bidders", f"need at least 2, got {rc.bidders}")
    return rc


# ---------------------------------------------------------------------------
# commands


def _setup(rc: RunConfig):
    sample = ingest_csv(rc.input)
    if len(rc.xs[0]) != sample.d:
        raise ConfigError("x", f"evaluation points have dimension {len(rc.xs[0])}, data has d={sample.d}")
    try:
        basis = enumerate_indices(sample.d, rc.p)
    except DomainError as exc:
        raise ConfigError("p", str(exc)) from None
    return sample, basis, KernelSpec(rc.kernel, sample.d)


def cmd_fit(rc: RunConfig) -> str:
    sample, basis, kernel = _setup(rc)
    cells = fit_grid(sample, rc.alphas, rc.hs, rc.xs, basis, kernel)
    header = ["alpha", "h"] + [f"x{j}" for j in range(1, sample.d + 1)]
    header += [v.label() for v in basis.indices] + ["status", "active_points", "boundary"]
    rows, failed = [], 0
    for c in cells:
        row = [c.theta.alpha, c.theta.h, *c.theta.x]
        if c.fit is None:
            failed += 1
            row += [math.nan] * basis.P + [f"failed: {c.error}".replace(",", ";"), 0, None]
        else:
            row += list(c.fit.coeffs_natural) + [c.fit.solver.status, c.fit.solver.active_points, c.fit.boundary]
        rows.append(row)
    comments = [f"basis ordering ({ORDERING}): " + " ".join(str(v) for v in basis.indices),
                f"kernel: {kernel.family}", f"n: {sample.n}"]
    atomic_write_text(rc.output, render_csv(header, rows, comments))
    return f"fit: {len(cells)} cells, {len(cells) - failed} ok, {failed} failed -> {rc.output}"


def _qd_cells(rc: RunConfig, sample, basis, kernel):
    """Yield one dict per (alpha, h, x) with the quantile and quantile density."""
    base = make_scheme(rc.scheme, rc.scheme_order, rc.nodes)
    for a in rc.alphas:
        for h in rc.hs:
            region = InnerRegion.from_sample(sample, h * SUPPORT_RADIUS)
            h_q = rc.h_q if rc.h_q is not None else rc.h_q_ratio * h
            for x in rc.xs:
                theta = EvalPoint(a, h, x)
                out = dict(theta=theta, h_q=h_q, scheme=base.kind, q=math.nan, Q=math.nan, status="ok",
                           boundary=None, fit=None)
                scheme = one_sided_fallback(base, a, h_q)
                if scheme is not base:
                    out["scheme"] = f"{scheme.kind}(fallback)"
                if not fits_inside(scheme, a, h_q):
                    out["status"] = "failed: quantile levels outside (0; 1)"
                    yield out
                    continue
                try:
                    cache = {}

                    def qf(level, x=x, h=h, region=region, cache=cache):
                        if level not in cache:
                            cache[level] = fit_at(sample, EvalPoint(level, h, x), basis, kernel, region=region).quantile
                        return cache[level]

                    out["q"] = apply_scheme(scheme, qf, a, h_q)
                    fit = fit_at(sample, theta, basis, kernel, region=region)
                    out["Q"] = fit.quantile
                    out["fit"] = fit
                    out["boundary"] = fit.boundary
                except (DomainError, np.linalg.LinAlgError, ValueError) as exc:
                    out["status"] = f"failed: {type(exc).__name__}: {exc}".replace(",", ";")
                yield out


def cmd_qdensity(rc: RunConfig) -> str:
    sample, basis, kernel = _setup(rc)
    header = ["alpha", "h", "h_q"] + [f"x{j}" for j in range(1, sample.d + 1)] + ["Q_hat", "q_hat", "scheme"]
    if rc.variance:
        header.append("asymptotic_variance")
    if rc.bahadur:
        header += [f"beta_plugin_{v.label()}" for v in basis.indices]
    header += ["status", "boundary"]
    rows, failed = [], 0
    for c in _qd_cells(rc, sample, basis, kernel):
        t = c["theta"]
        row = [t.alpha, t.h, c["h_q"], *t.x, c["Q"], c["q"], c["scheme"]]
        if rc.variance:
            fx = kde_at(sample, t.x, t.h, kernel)
            ok = c["status"] == "ok" and fx > 0
            row.append(asymptotic_variance(t.alpha, sample.n, t.h, sample.d, c["q"], fx) if ok else math.nan)
        if rc.bahadur:
            if c["status"] == "ok" and c["q"] > 0:
                try:
                    row += list(plugin_beta(sample, c["fit"], c["q"], basis, kernel))
                except np.linalg.LinAlgError:
                    row += [math.nan] * basis.P
            else:
                row += [math.nan] * basis.P
        row += [c["status"], c["boundary"]]
        failed += c["status"] != "ok"
        rows.append(row)
    comments = [f"scheme: {rc.scheme} order {rc.scheme_order}", f"kernel: {kernel.family}", f"n: {sample.n}"]
    if rc.variance:
        comments.append("asymptotic_variance: up to the proportionality constant")
    if rc.bahadur:
        comments.append("beta_plugin: plug-in, no oracle (f(Q|x) replaced by 1/q_hat)")
    atomic_write_text(rc.output, render_csv(header, rows, comments))
    return f"qdensity: {len(rows)} cells, {len(rows) - failed} ok, {failed} failed -> {rc.output}"


def cmd_auction(rc: RunConfig) -> str:
    sample, basis, kernel = _setup(rc)
    header = ["alpha", "h", "h_q"] + [f"x{j}" for j in range(1, sample.d + 1)]
    header += ["Q_bid", "q_bid", "Q_value", "scheme", "status", "boundary"]
    rows, failed = [], 0
    for c in _qd_cells(rc, sample, basis, kernel):
        t = c["theta"]
        value = math.nan
        if c["status"] == "ok":
            value = auction_private_value(t.alpha, c["q"], c["Q"], rc.bidders)
        else:
            failed += 1
        rows.append([t.alpha, t.h, c["h_q"], *t.x, c["Q"], c["q"], value, c["scheme"], c["status"], c["boundary"]])
    comments = [f"bidders: {rc.bidders}", f"scheme: {rc.scheme} order {rc.scheme_order}", f"n: {sample.n}"]
    atomic_write_text(rc.output, render_csv(header, rows, comments))
    return f"auction: {len(rows)} cells, {len(rows) - failed} ok, {failed} failed -> {rc.output}"


def cmd_experiment(rc: RunConfig) -> str:
    exp = RateExperiment.from_config(rc.experiment)
    res = run_experiment(exp)
    csv_path, json_path = res.write(rc.output)
    slope = "n/a" if res.slope is None else f"{res.slope:.4f}"
    verdict = {True: "pass", False: "fail", None: "informational"}[res.passed]
    return f"experiment {exp.target}: slope {slope}, expected {res.expected_slope}, {verdict} -> {csv_path}, {json_path}"


def cmd_echo(rc: RunConfig) -> str:
    sample = ingest_csv(rc.input)
    write_sample_csv(rc.output, sample)
    return f"echo: {sample.n} rows, d={sample.d} -> {rc.output}"


HANDLERS = {
    "fit": cmd_fit,
    "qdensity": cmd_qdensity,
    "auction": cmd_auction,
    "experiment": cmd_experiment,
    "echo": cmd_echo,
}


def run(rc: RunConfig) -> str:
    return HANDLERS[rc.command](rc)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quantcurve", description="Local polynomial quantile estimation.")
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="command (overrides command= in the config)")
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key (repeat for list values)")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        thread_count()
        raw = read_config(args.config) if args.config else {}
        raw = apply_overrides(raw, args.set)
        rc = build_run_config(raw, args.command)
        summary = run(rc)
    except (ConfigError, DataError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: pressure sweeps, deviation estimates, tropical solves, validation.

Every command reads one JSON config.  Sweep tables go to CSV, summaries and
reports to JSON; every number carries a source tag (walters, transfer,
tropical or fit).

Exit codes: 0 ok, 1 failed invariant, 2 config error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from . import asymptotics, ergodic_opt, transfer, walters
from . import fixtures
from .potential import (ONE_FIX, ZERO_FIX, GeometricTailSequence, LocallyConstantPotential, PointClass,
                        WaltersPotential, one_run, project, zero_run)
from .shift_space import EPPoint, ShiftSpace, parse_word, shift

EXIT_OK, EXIT_INVALID, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class NumericFailure(RuntimeError):
    pass


Potential = Union[WaltersPotential, LocallyConstantPotential]


# ------------------------------------------------------------------ config

@dataclass
class RunConfig:
    name: str
    potential: Potential
    grid: Optional[asymptotics.BetaGrid] = None
    depth: int = 10
    source: Optional[str] = None
    targets: List[str] = field(default_factory=list)
    tolerances: Dict[str, float] = field(default_factory=dict)
    tamper_U: Dict[PointClass, float] = field(default_factory=dict)
    validate_beta: float = 4.0
    transfer_depth: int = asymptotics.TRANSFER_DEPTH

    @property
    def is_walters(self) -> bool:
        return isinstance(self.potential, WaltersPotential)

    @property
    def space(self) -> ShiftSpace:
        return self.potential.space

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))


DEFAULT_TOLERANCES = {
    "calibration": 1e-12,
    "r_plus": 1e-12,
    "eigen": 1e-10,
    "identity": 1e-9,
}


def _tail(spec, what: str) -> GeometricTailSequence:
    if not isinstance(spec, dict):
        raise ConfigError(f"{what}: expected an object with coeff and ratio")
    try:
        coeff, ratio = float(spec["coeff"]), float(spec["ratio"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: needs numeric coeff and ratio ({exc})") from exc
    if not 0 < ratio < 1:
        raise ConfigError(f"{what}: tail_ratio must lie in (0, 1), got {ratio}")
    prefix = tuple(float(v) for v in spec.get("prefix", ()))
    try:
        return GeometricTailSequence(coeff, ratio, prefix)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _space(spec) -> ShiftSpace:
    spec = spec or {}
    try:
        transition = spec.get("transition")
        if transition is not None:
            transition = tuple(tuple(int(v) for v in row) for row in transition)
        return ShiftSpace(int(spec.get("alphabet_size", 2)), float(spec.get("theta", 0.5)), transition)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"space: {exc}") from exc


def parse_class(text: str) -> PointClass:
    """``zero_fix``, ``one_fix``, ``zero_run:N`` or ``one_run:N``."""
    name, _, n = text.partition(":")
    try:
        if name == "zero_fix":
            return ZERO_FIX
        if name == "one_fix":
            return ONE_FIX
        if name == "zero_run":
            return zero_run(int(n))
        if name == "one_run":
            return one_run(int(n))
    except ValueError as exc:
        raise ConfigError(f"bad class {text!r}: {exc}") from exc
    raise ConfigError(f"bad class {text!r}")


def build_potential(spec, space_spec=None) -> Potential:
    if not isinstance(spec, dict):
        raise ConfigError("potential: expected an object")
    if "fixture" in spec:
        name = spec["fixture"]
        table = {**fixtures.WALTERS_FIXTURES, **fixtures.TABLE_FIXTURES}
        if name not in table:
            raise ConfigError(f"potential: unknown fixture {name!r}; known: {sorted(table)}")
        return table[name]()
    kind = spec.get("type")
    if kind == "walters":
        try:
            b, d = float(spec["b"]), float(spec["d"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"potential: walters needs numeric b and d ({exc})") from exc
        try:
            return WaltersPotential(b, d, _tail(spec.get("a"), "potential.a"),
                                    _tail(spec.get("c"), "potential.c"), _space(space_spec),
                                    strict=bool(spec.get("strict", True)))
        except ValueError as exc:
            raise ConfigError(f"potential: {exc}") from exc
    if kind == "table":
        try:
            return LocallyConstantPotential(_space(space_spec), int(spec["depth"]),
                                            tuple(float(v) for v in spec["values"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"potential: {exc}") from exc
    raise ConfigError(f"potential: unknown type {kind!r} (walters, table or fixture)")


def _grid(spec) -> Optional[asymptotics.BetaGrid]:
    if spec is None:
        return None
    try:
        if isinstance(spec, str):
            return asymptotics.BetaGrid.parse(spec)
        if isinstance(spec, dict):
            return asymptotics.BetaGrid.linspace(float(spec["start"]), float(spec["stop"]), int(spec["count"]))
        return asymptotics.BetaGrid(tuple(float(v) for v in spec))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc


def split_targets(text: str) -> List[str]:
    """Split on commas outside brackets, so ``0(1,0)`` stays one target."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return out


def load_config(data: dict, grid: Optional[str] = None, depth: Optional[int] = None,
                targets: Optional[str] = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    pot = build_potential(data.get("potential"), data.get("space"))
    cfg = RunConfig(name=str(data.get("name", "run")), potential=pot)
    cfg.grid = _grid(grid if grid is not None else data.get("grid"))
    k = depth if depth is not None else data.get("depth", 10)
    try:
        cfg.depth = int(k)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"depth: {exc}") from exc
    if cfg.depth < 2:
        raise ConfigError("depth must be >= 2")
    if isinstance(pot, LocallyConstantPotential) and pot.depth > cfg.depth + 1:
        raise ConfigError(f"depth {cfg.depth} too small for a depth-{pot.depth} table")
    src = data.get("source")
    if src not in (None, "walters", "transfer"):
        raise ConfigError(f"source must be walters or transfer, got {src!r}")
    if src == "walters" and not cfg.is_walters:
        raise ConfigError("source walters needs a run-class potential")
    cfg.source = src
    raw_targets = split_targets(targets) if targets else data.get("targets", [])
    cfg.targets = [t.strip() for t in raw_targets if t.strip()]
    tol = data.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("tolerances must be an object")
    cfg.tolerances = {**DEFAULT_TOLERANCES, **{k: float(v) for k, v in tol.items()}}
    tamper = data.get("tamper_U", {})
    if tamper and not cfg.is_walters:
        raise ConfigError("tamper_U applies to run-class potentials only")
    cfg.tamper_U = {parse_class(k): float(v) for k, v in tamper.items()}
    cfg.validate_beta = float(data.get("validate_beta", 4.0))
    cfg.transfer_depth = int(data.get("transfer_depth", asymptotics.TRANSFER_DEPTH))
    return cfg


def read_config(path: str, **overrides) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return load_config(data, **overrides)


# ------------------------------------------------------------------ output

def fmt(x: float) -> str:
    """17 significant digits; ``inf``/``-inf``/``nan`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "+inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return float(f"{x:.17g}") + 0.0
    return x


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out(directory: str, name: str) -> str:
    os.makedirs(directory, exist_ok=True)
    return os.path.join(directory, name)


# ---------------------------------------------------------------- commands

def _tropical(cfg: RunConfig) -> ergodic_opt.SubactionTable:
    f = project(cfg.potential, cfg.depth + 1) if cfg.is_walters else cfg.potential
    return ergodic_opt.solve(f, cfg.depth)


def _pressure_values(cfg: RunConfig, grid: asymptotics.BetaGrid):
    if cfg.is_walters and cfg.source != "transfer":
        return [walters.pressure_w(cfg.potential, b) for b in grid], "walters"
    f = project(cfg.potential, cfg.depth + 1) if cfg.is_walters else cfg.potential
    return [transfer.spectral(f, b, cfg.depth).log_lambda for b in grid], "transfer"


def cmd_pressure(cfg: RunConfig, out: str) -> int:
    grid = cfg.grid or (asymptotics.WALTERS_GRID if cfg.is_walters and cfg.source != "transfer"
                        else asymptotics.TRANSFER_GRID)
    values, tag = _pressure_values(cfg, grid)
    with open(_out(out, "pressure.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "log_pressure", "pressure_source"])
        for b, v in zip(grid, values):
            w.writerow([fmt(b), fmt(v), tag])
    summary = {"config": cfg.name, "depth": cfg.depth,
               "pressure_source": tag, "grid": list(grid.values)}
    if all(v > 0 for v in values):
        fit = asymptotics.fit_rate(asymptotics.SweepTable(grid, tuple(math.log(v) for v in values)))
        summary["A"] = {"value": fit.slope, "source": "fit", "residual_rms": fit.residual_rms,
                        "n_points": fit.n_points}
        if cfg.is_walters:
            try:
                summary["A_closed_form"] = {"value": walters.limit_A(cfg.potential), "source": "walters"}
            except walters.UnsupportedRegime:
                summary["A_closed_form"] = None
    else:
        summary["A"] = None
    slope = asymptotics.fit_rate(asymptotics.SweepTable(grid, tuple(values)))
    summary["pressure_slope"] = {"value": slope.slope, "source": "fit"}
    summary["m"] = {"value": _tropical(cfg).m, "source": "tropical"}
    write_json(_out(out, "pressure_summary.json"), summary)
    return EXIT_OK


def _parse_target(text: str):
    text = text.strip()
    if text.startswith("["):
        return parse_word(text)
    return EPPoint.parse(text)


def _estimate(sources, target, grid):
    """First source that can evaluate every cylinder of ``target``."""
    last = None
    for src in sources:
        g = grid or asymptotics.default_grid(src)
        try:
            if isinstance(target, tuple):
                # a cylinder: a single rate, nothing to converge
                return src, asymptotics.estimate_I(src, target, n_max=len(target), grid=g, n_min=len(target))
            return src, asymptotics.estimate_I(src, target, n_max=10, grid=g)
        except asymptotics.SweepError as exc:
            if not isinstance(exc.__cause__, walters.UnsupportedCylinder):
                raise
            last = exc
    raise last


def _deviation_record(cfg: RunConfig, text: str, sources, table, anchors) -> dict:
    rec = {"target": text, "I_estimate": None, "I_closed_form": None, "I_tropical": None,
           "converged": None, "source": None}
    try:
        target = _parse_target(text)
    except ValueError as exc:
        rec["status"] = "error"
        rec["error"] = str(exc)
        return rec
    if cfg.is_walters:
        try:
            walters.fixed_point_deviation(cfg.potential)
        except walters.UnsupportedRegime as exc:
            rec["status"] = "unsupported"
            rec["error"] = str(exc)
            return rec
    if isinstance(target, EPPoint):
        if cfg.is_walters:
            rec["I_closed_form"] = walters.deviation_w(cfg.potential, target)
        if table is not None:
            rec["I_tropical"] = ergodic_opt.deviation_at_point(table, anchors, target)[0]
    try:
        src, est = _estimate(sources, target, cfg.grid)
    except (asymptotics.SweepError, ArithmeticError) as exc:
        rec["status"] = "error"
        rec["error"] = str(exc)
        return rec
    rec["source"] = src.name
    rec["I_estimate"] = est.value
    rec["rates"] = list(est.rates)
    if isinstance(target, EPPoint):
        rec["converged"] = est.converged
    rec["status"] = "ok"
    return rec


def cmd_deviation(cfg: RunConfig, out: str) -> int:
    if not cfg.targets:
        raise ConfigError("deviation: no targets given (--targets or config targets)")
    transfer_src = asymptotics.TransferSource(cfg.potential, cfg.transfer_depth)
    if cfg.source == "transfer" or not cfg.is_walters:
        sources = [transfer_src]
    elif cfg.source == "walters":
        sources = [asymptotics.WaltersSource(cfg.potential)]
    else:
        sources = [asymptotics.WaltersSource(cfg.potential), transfer_src]
    table = anchors = None
    if cfg.is_walters:
        try:
            walters.fixed_point_deviation(cfg.potential)
            table = walters.r_plus_table(cfg.potential, cfg.depth)
            anchors = walters.deviation_anchors(cfg.potential, cfg.depth)
        except walters.UnsupportedRegime:
            table = None
    records = [_deviation_record(cfg, t, sources, table, anchors) for t in cfg.targets]
    write_json(_out(out, "deviation.json"), {"config": cfg.name, "records": records})
    return EXIT_OK


def cmd_spectral(cfg: RunConfig, out: str) -> int:
    f = project(cfg.potential, cfg.depth + 1) if cfg.is_walters else cfg.potential
    betas = list(cfg.grid) if cfg.grid else [cfg.validate_beta]
    with open(_out(out, "spectral.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "log_pressure", "eigen_residual", "normalization_residual", "source"])
        for b in betas:
            T = transfer.build_transfer(f, b, cfg.depth)
            S = transfer.leading_spectral(T)
            g = transfer.normalized_log_potential(S, T)
            w.writerow([fmt(b), fmt(S.log_lambda), fmt(S.residual),
                        fmt(transfer.normalization_residual(T, g)), "transfer"])
    return EXIT_OK


def cmd_tropical(cfg: RunConfig, out: str) -> int:
    t = _tropical(cfg)
    summary = {"config": cfg.name, "depth": cfg.depth, "source": "tropical", "m": t.m,
               "calibration_residual": t.calibration_residual(), "min_r_plus": t.min_r_plus(),
               "max_incoming_min_r_plus": float(np.max(t.incoming_min_r_plus())),
               "mather_components": ["".join(map(str, c[0])) + ("" if len(c) == 1 else f"+{len(c) - 1}")
                                     for c in t.component_words()]}
    write_json(_out(out, "tropical.json"), summary)
    return EXIT_OK


# --------------------------------------------------------------- validation

@dataclass
class Check:
    name: str
    module: str
    value: float
    threshold: float
    passed: bool
    source: str

    def record(self) -> dict:
        return {"name": self.name, "module": self.module, "value": self.value,
                "threshold": self.threshold, "passed": self.passed, "source": self.source}


def _le(name, module, value, threshold, source) -> Check:
    return Check(name, module, float(value), float(threshold), bool(value <= threshold), source)


STANDARD_POINTS = ("(0)", "(1)", "0(1)", "1(0)", "00(1)")


def _walters_checks(cfg: RunConfig) -> List[Check]:
    f = cfg.potential
    out = []
    reg = walters.regime(f)
    out.append(Check("regime_computable", "walters", 0.0 if reg != walters.WaltersRegime.BOUNDARY else 1.0,
                     0.0, reg != walters.WaltersRegime.BOUNDARY, "walters"))
    if reg == walters.WaltersRegime.BOUNDARY:
        return out
    worst = 0.0
    for b in (1.0, 5.0, 20.0):
        p = walters.pressure_w(f, b)
        worst = max(worst, abs(walters.consistency_residual(f, b, p)) / max(1.0, b))
    out.append(_le("pressure_consistency", "walters", worst, cfg.tol("eigen", 1e-10), "walters"))
    out.append(_le("calibration", "walters",
                   walters.calibration_defect(f, 4 * cfg.depth, cfg.tamper_U),
                   cfg.tol("calibration", 1e-12), "walters"))
    table = walters.r_plus_table(f, cfg.depth, cfg.tamper_U or None)
    out.append(_le("r_plus_nonnegative", "walters", -table.min_r_plus(), cfg.tol("r_plus", 1e-12), "walters"))
    pts = asymptotics.candidate_points(2, 6)
    resid, mono = 0.0, 0.0
    for p in pts:
        i_p, i_s = walters.deviation_w(f, p), walters.deviation_w(f, shift(p))
        if math.isfinite(i_p) and math.isfinite(i_s):
            resid = max(resid, abs(i_p - walters.r_plus_w(f, p) - i_s))
        if math.isfinite(i_s):
            mono = max(mono, i_s - i_p)
    out.append(_le("deviation_shift_identity", "walters", resid, cfg.tol("identity", 1e-9), "walters"))
    out.append(_le("deviation_shift_monotone", "walters", mono, cfg.tol("identity", 1e-9), "walters"))
    anchors = walters.deviation_anchors(f, cfg.depth)
    worst = 0.0
    for s in STANDARD_POINTS:
        p = EPPoint.parse(s)
        worst = max(worst, abs(ergodic_opt.deviation_at_point(table, anchors, p)[0] - walters.deviation_w(f, p)))
    out.append(_le("min_plus_matches_closed_form", "ergodic_opt", worst, cfg.tol("identity", 1e-9), "tropical"))
    # transfer vs closed form at a moderate beta
    k = min(cfg.depth, 12)
    beta = cfg.validate_beta
    S = transfer.spectral(project(f, k + 1), beta, k)
    bound = beta * 2.0 ** (-k + 3) + 1e-6
    words = [(0,) * n for n in range(1, 7)] + [(1,) * n for n in range(1, 7)] + \
            [(0,) * j + (1,) for j in range(1, 6)]
    err = max(abs(transfer.gibbs_log_measure(S, w) - walters.mu_w(f, beta, w)) for w in words)
    out.append(_le("gibbs_cross_oracle", "transfer", err, bound, "transfer"))
    err = abs(S.log_lambda - walters.pressure_w(f, beta))
    out.append(_le("pressure_cross_oracle", "transfer", err, bound, "transfer"))
    return out


def _table_checks(cfg: RunConfig) -> List[Check]:
    f = cfg.potential
    out = []
    k = cfg.depth
    beta = cfg.validate_beta
    T = transfer.build_transfer(f, beta, k)
    S = transfer.leading_spectral(T)
    out.append(_le("eigen_residual", "transfer", S.residual, cfg.tol("eigen", 1e-10), "transfer"))
    g = transfer.normalized_log_potential(S, T)
    out.append(_le("normalization", "transfer", transfer.normalization_residual(T, g),
                   cfg.tol("eigen", 1e-10), "transfer"))
    mu_total = float(np.exp(np.logaddexp.reduce(S.log_mu)))
    out.append(_le("gibbs_probability", "transfer", abs(mu_total - 1.0), cfg.tol("eigen", 1e-10), "transfer"))
    if T.n_states <= 512:
        M = np.zeros((T.n_states, T.n_states))
        np.add.at(M, (T.edges.tgt, T.edges.src), np.exp(T.log_weights))
        lam = float(np.max(np.abs(np.linalg.eigvals(M))))
        out.append(_le("pressure_dense_oracle", "transfer", abs(S.log_lambda - math.log(lam)),
                       cfg.tol("eigen", 1e-10), "transfer"))
    return out


def _tropical_checks(cfg: RunConfig) -> List[Check]:
    t = _tropical(cfg)
    out = [
        _le("tropical_calibration", "ergodic_opt", t.calibration_residual(), cfg.tol("calibration", 1e-12), "tropical"),
        _le("tropical_r_plus_nonnegative", "ergodic_opt", -t.min_r_plus(), cfg.tol("r_plus", 1e-12), "tropical"),
        _le("tropical_incoming_min_r_plus", "ergodic_opt", float(np.max(t.incoming_min_r_plus())),
            cfg.tol("r_plus", 1e-12), "tropical"),
        Check("tropical_has_mather_set", "ergodic_opt", float(len(t.components)), 1.0,
              len(t.components) >= 1, "tropical"),
    ]
    if cfg.is_walters:
        words = sorted("".join(map(str, c[0])) for c in t.component_words() if len(c) == 1)
        want = ["0" * cfg.depth, "1" * cfg.depth]
        out.append(Check("mather_fixed_points", "ergodic_opt", float(words == want and len(t.components) == 2),
                         1.0, words == want and len(t.components) == 2, "tropical"))
    return out


def run_validation(cfg: RunConfig) -> List[Check]:
    checks = _walters_checks(cfg) if cfg.is_walters else _table_checks(cfg)
    return checks + _tropical_checks(cfg)


def cmd_validate(cfg: RunConfig, out: str, deterministic: bool = False) -> int:
    t0 = time.perf_counter()
    checks = run_validation(cfg)
    failed = [c.name for c in checks if not c.passed]
    report = {"config": cfg.name, "depth": cfg.depth, "passed": not failed,
              "failed": failed, "checks": [c.record() for c in checks]}
    if not deterministic:
        report["elapsed_seconds"] = time.perf_counter() - t0
    write_json(_out(out, "validate_report.json"), report)
    for name in failed:
        print(f"FAILED invariant: {name}", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_INVALID


# ---------------------------------------------------------------------- main

COMMANDS = ("pressure", "deviation", "validate", "spectral", "tropical")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zerotemp", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run config")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--deterministic", action="store_true",
                    help="serial mode; no timings in reports (byte-identical reruns)")
    ap.add_argument("--grid", help='beta grid "start:stop:count"')
    ap.add_argument("--depth", type=int, help="de Bruijn depth k")
    ap.add_argument("--targets", help="comma-separated points like 0(1) or cylinders like [0010]")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = read_config(args.config, grid=args.grid, depth=args.depth, targets=args.targets)
        if args.command == "pressure":
            return cmd_pressure(cfg, args.out)
        if args.command == "deviation":
            return cmd_deviation(cfg, args.out)
        if args.command == "spectral":
            return cmd_spectral(cfg, args.out)
        if args.command == "tropical":
            return cmd_tropical(cfg, args.out)
        return cmd_validate(cfg, args.out, args.deterministic)
    except ConfigError as exc:
        print(f"{args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, asymptotics.SweepError, walters.UnsupportedRegime, NumericFailure) as exc:
        print(f"{args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

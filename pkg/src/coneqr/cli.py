"""Command-line surface: fit, ci, test, simulate, and gen over CSV/JSON.

Every command reads a JSON config (schema-checked, unknown keys rejected),
takes a few flag overrides, and writes deterministic result files into the
output directory.  Failures print a machine-readable error JSON and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from .bootstrap import BootstrapConfig, bootstrap_ci, percentile_interval, run_tests
from .constraints import CanonicalTransform, ConstraintSpec, canonicalize, transform_dataset
from .data import Dataset, QuantileSpec
from .harness import ExperimentPlan, run_plan
from .simulate import SimSetting, gen_setting
from .solver import fit_constrained, fit_unconstrained
from .stats import TestResult


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "model": {"response", "predictors"},
    "transforms": None,  # list, validated element-wise
    "constraints": {"C", "c"},
    "test": {"A", "kind"},
    "bootstrap": {"B", "seed", "alpha", "m", "h"},
    "gen": {"setting", "n", "beta0", "beta1", "tau", "seed"},
    "simulate": {"mode", "setting", "n", "tau", "alpha", "R", "B",
                 "beta1_grid", "beta0", "seed", "n_jobs"},
    "tau": None,
}


def _check_keys(obj: dict, allowed, where: str):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown config keys in {where}: {sorted(unknown)}")


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(cfg, _SCHEMA, "config root")
    for key, allowed in _SCHEMA.items():
        if key in cfg and isinstance(allowed, set):
            if not isinstance(cfg[key], dict):
                raise ConfigError(f"config section '{key}' must be an object")
            _check_keys(cfg[key], allowed, f"'{key}'")
    if "transforms" in cfg:
        if not isinstance(cfg["transforms"], list):
            raise ConfigError("'transforms' must be a list")
        for t in cfg["transforms"]:
            _check_keys(t, {"name", "op", "column"}, "'transforms' entry")
            if t.get("op") not in ("log", "square"):
                raise ConfigError(f"unsupported transform op: {t.get('op')!r}")
    return cfg


def _numeric_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    if name not in frame.columns:
        raise ConfigError(f"missing column '{name}' in input file")
    col = pd.to_numeric(frame[name], errors="coerce")
    bad = col.index[~np.isfinite(col.to_numpy(dtype=float, na_value=np.nan))]
    if len(bad):
        raise ConfigError(f"non-numeric cell at row {int(bad[0])}, column '{name}'")
    return col.to_numpy(dtype=float)


def apply_transforms(frame: pd.DataFrame, transforms: list[dict]) -> pd.DataFrame:
    frame = frame.copy()
    for t in transforms:
        src = _numeric_column(frame, t["column"])
        if t["name"] in frame.columns:
            raise ConfigError(f"transform output '{t['name']}' already exists")
        if t["op"] == "log":
            if np.any(src <= 0):
                row = int(np.flatnonzero(src <= 0)[0])
                raise ConfigError(f"log transform needs positive values; row {row}, column '{t['column']}'")
            frame[t["name"]] = np.log(src)
        else:
            frame[t["name"]] = src ** 2
    return frame


def build_dataset(frame: pd.DataFrame, model: dict) -> tuple[Dataset, list[str]]:
    response = model["response"]
    predictors = list(model["predictors"])
    y = _numeric_column(frame, response)
    cols = [np.ones(len(frame))] + [_numeric_column(frame, name) for name in predictors]
    names = ["intercept"] + predictors
    return Dataset(y, np.column_stack(cols)), names


def _constraints_from_config(cfg: dict, p: int) -> ConstraintSpec | None:
    block = cfg.get("constraints")
    if block is None:
        return None
    C = np.asarray(block["C"], dtype=float)
    c = np.asarray(block["c"], dtype=float)
    if C.ndim != 2 or C.shape[1] != p:
        raise ConfigError(f"constraint matrix must have {p} columns (intercept first)")
    return ConstraintSpec(C, c)


def _canonical_problem(dataset: Dataset, spec: ConstraintSpec | None):
    """Dataset in canonical coordinates plus the transform (identity when free)."""
    if spec is None:
        return dataset, None, 0
    tr = canonicalize(spec)
    return transform_dataset(dataset, tr), tr, tr.q


def _beta_original(beta_canon: np.ndarray, tr: CanonicalTransform | None) -> np.ndarray:
    return beta_canon if tr is None else tr.from_canonical(beta_canon)


def _map_tested_columns(A_orig: list[int], tr: CanonicalTransform | None) -> list[int]:
    if tr is None:
        return A_orig
    images = tr.coordinate_images()
    missing = [j for j in A_orig if j not in images]
    if missing:
        raise ConfigError(
            "tested columns are mixed by the constraint transform; "
            f"original column indices {missing} have no canonical coordinate"
        )
    return [images[j][0] for j in A_orig]


def _bootstrap_config(cfg: dict, args) -> BootstrapConfig:
    block = dict(cfg.get("bootstrap", {}))
    if args.B is not None:
        block["B"] = args.B
    if args.m is not None:
        block["m"] = args.m
    if args.h is not None:
        block["h"] = args.h
    if args.seed is not None:
        block["seed"] = args.seed
    if args.alpha is not None:
        block["alpha"] = args.alpha
    if "B" not in block or "seed" not in block:
        raise ConfigError("bootstrap config needs at least B and seed")
    return BootstrapConfig(B=int(block["B"]), seed=int(block["seed"]),
                           alpha=float(block.get("alpha", 0.05)),
                           m=block.get("m"), h=block.get("h"))


def _tau(cfg: dict, args) -> float:
    tau = args.tau if args.tau is not None else cfg.get("tau")
    if tau is None:
        raise ConfigError("quantile level tau missing (config 'tau' or --tau)")
    return float(tau)


def _write_json(path: Path, obj: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _echo(cfg: dict, command: str, tau: float | None = None) -> dict:
    out = {"command": command, "config": cfg}
    if tau is not None:
        out["tau"] = tau
    return out


def _residual_summary(residuals: np.ndarray) -> dict:
    qs = np.quantile(residuals, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"min": qs[0], "q25": qs[1], "median": qs[2], "q75": qs[3], "max": qs[4]}


def cmd_fit(cfg: dict, args, outdir: Path) -> dict:
    tau = _tau(cfg, args)
    frame = apply_transforms(pd.read_csv(args.input), cfg.get("transforms", []))
    dataset, names = build_dataset(frame, cfg["model"])
    cons = _constraints_from_config(cfg, dataset.p)
    canon, tr, q = _canonical_problem(dataset, cons)
    spec = QuantileSpec(tau)
    fit = fit_constrained(canon, spec, q) if q else fit_unconstrained(canon, spec)
    beta = _beta_original(fit.beta, tr)
    report = {
        **_echo(cfg, "fit", tau),
        "coefficients": {name: float(b) for name, b in zip(names, beta)},
        "loss": fit.loss,
        "constrained": bool(q),
        "active_constraints": [int(j) for j in fit.active],
        "residual_summary": _residual_summary(fit.residuals),
        "n": dataset.n,
        "iterations": fit.iterations,
    }
    _write_json(outdir / "results.json", report)
    return report


def cmd_ci(cfg: dict, args, outdir: Path) -> dict:
    tau = _tau(cfg, args)
    frame = apply_transforms(pd.read_csv(args.input), cfg.get("transforms", []))
    dataset, names = build_dataset(frame, cfg["model"])
    cons = _constraints_from_config(cfg, dataset.p)
    canon, tr, q = _canonical_problem(dataset, cons)
    bcfg = _bootstrap_config(cfg, args)
    ci = bootstrap_ci(canon, QuantileSpec(tau), q, bcfg)

    if tr is None:
        beta, draws = ci.beta, ci.draws
    else:
        Tinv = tr.inverse_matrix()
        beta = tr.from_canonical(ci.beta)
        draws = ci.draws @ Tinv.T
    lower, upper = percentile_interval(beta, draws, dataset.n, bcfg.alpha)
    if args.clip_ci and cons is not None:
        images = tr.coordinate_images()
        inv = {k: (j, s) for j, (k, s) in images.items()}
        for row in range(cons.q):
            if row in inv:
                j, sign = inv[row]
                bound = cons.c[row]
                if sign > 0:
                    lower[j] = max(lower[j], bound)
                else:
                    upper[j] = min(upper[j], -bound)

    table = pd.DataFrame({
        "coordinate": names,
        "estimate": beta,
        "lower": lower,
        "upper": upper,
    })
    table.to_csv(outdir / "intervals.csv", index=False)
    if args.dump_replicates:
        pd.DataFrame(draws, columns=names).to_csv(outdir / "replicates.csv", index=False)
    report = {
        **_echo(cfg, "ci", tau),
        "alpha": bcfg.alpha, "B": bcfg.B, "m": ci.m, "h": ci.h, "seed": bcfg.seed,
        "intervals": {
            name: {"estimate": float(b), "lower": float(lo), "upper": float(hi)}
            for name, b, lo, hi in zip(names, beta, lower, upper)
        },
    }
    _write_json(outdir / "results.json", report)
    return report


def _test_report(res: TestResult) -> dict:
    return {
        "statistic": res.statistic,
        "p_value": res.p_value,
        "frac_replicates_below": res.frac_below,
        "m": res.m,
        "h": res.h,
        "B": res.B,
    }


def cmd_test(cfg: dict, args, outdir: Path) -> dict:
    tau = _tau(cfg, args)
    frame = apply_transforms(pd.read_csv(args.input), cfg.get("transforms", []))
    dataset, names = build_dataset(frame, cfg["model"])
    cons = _constraints_from_config(cfg, dataset.p)
    canon, tr, q = _canonical_problem(dataset, cons)
    block = cfg.get("test")
    if not block or "A" not in block:
        raise ConfigError("test config section with tested columns 'A' is required")
    try:
        A_orig = [names.index(name) for name in block["A"]]
    except ValueError as exc:
        raise ConfigError(f"tested column not in model: {exc}") from None
    if 0 in A_orig:
        raise ConfigError("the intercept cannot be a tested column")
    A = _map_tested_columns(A_orig, tr)
    kind = block.get("kind", "both")
    kinds = ("LR", "RB") if kind == "both" else (kind,)
    if any(k not in ("LR", "RB") for k in kinds):
        raise ConfigError('test kind must be "LR", "RB", or "both"')
    bcfg = _bootstrap_config(cfg, args)
    results = run_tests(canon, QuantileSpec(tau), A, q, bcfg, kinds=kinds)
    report = {
        **_echo(cfg, "test", tau),
        "tested_columns": block["A"],
        "constrained": bool(q),
        "tests": {k: _test_report(v) for k, v in results.items()},
    }
    if args.dump_replicates:
        pd.DataFrame({k: v.replicates for k, v in results.items()}).to_csv(
            outdir / "replicates.csv", index=False)
    _write_json(outdir / "results.json", report)
    return report


def cmd_gen(cfg: dict, args, outdir: Path) -> dict:
    block = cfg.get("gen")
    if not block:
        raise ConfigError("gen config section is required")
    seed = args.seed if args.seed is not None else block.get("seed")
    tau = args.tau if args.tau is not None else block.get("tau")
    sim = gen_setting(SimSetting(
        setting=int(block["setting"]), n=int(block["n"]),
        beta0=float(block.get("beta0", 1.0)), beta1=float(block.get("beta1", 0.0)),
        tau=float(tau), seed=int(seed),
    ))
    frame = pd.DataFrame({"i": np.arange(1, sim.setting.n + 1), "x": sim.x,
                          "y": sim.dataset.y})
    frame.to_csv(outdir / "dataset.csv", index=False)
    report = {**_echo(cfg, "gen"), "rows": int(sim.setting.n),
              "beta": [float(b) for b in sim.beta], "file": "dataset.csv"}
    _write_json(outdir / "results.json", report)
    return report


def cmd_simulate(cfg: dict, args, outdir: Path) -> dict:
    block = cfg.get("simulate")
    if not block:
        raise ConfigError("simulate config section is required")
    block = dict(block)
    if args.seed is not None:
        block["seed"] = args.seed
    if args.B is not None:
        block["B"] = args.B
    plan = ExperimentPlan(
        mode=block["mode"], setting=int(block["setting"]),
        n=tuple(block["n"]), tau=tuple(block["tau"]),
        alpha=tuple(block.get("alpha", [0.05])),
        R=int(block.get("R", 500)), B=int(block.get("B", 500)),
        beta1_grid=tuple(block.get("beta1_grid", [0.0, 0.1, 0.2, 0.3])),
        beta0=float(block.get("beta0", 1.0)), seed=int(block.get("seed", 0)),
        n_jobs=int(block.get("n_jobs", 1)),
    )
    summary = run_plan(plan)
    summary.to_frame().to_csv(outdir / "summary.csv", index=False)
    report = {**_echo(cfg, "simulate"), "mode": summary.mode,
              "cells": summary.rows}
    _write_json(outdir / "results.json", report)
    print(f"runtime: {summary.runtime:.1f}s", file=sys.stderr)
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coneqr",
        description="Constrained quantile regression inference for time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "ci", "test", "simulate", "gen"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--input", help="input CSV file")
        p.add_argument("--output-dir", default=".", help="directory for result files")
        p.add_argument("--tau", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--B", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--h", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--clip-ci", action="store_true", dest="clip_ci")
        p.add_argument("--dump-replicates", action="store_true", dest="dump_replicates")
    return parser


_COMMANDS = {"fit": cmd_fit, "ci": cmd_ci, "test": cmd_test,
             "simulate": cmd_simulate, "gen": cmd_gen}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command in ("fit", "ci", "test") and not args.input:
            raise ConfigError(f"--input is required for '{args.command}'")
        outdir = Path(args.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](cfg, args, outdir)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}},
                         sort_keys=True))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

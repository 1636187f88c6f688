"""
Command-line front end
======================

::

    krsl run|theory|surface|bounds CONFIG --out DIR [--runs N] [--seed S] [--threads T]
    krsl presets

``CONFIG`` is a JSON file or ``preset:NAME`` for a bundled preset.  Each
command writes CSV/JSON data files and a ``manifest.json`` listing the
SHA-256 of every data file, the configuration digest, the random generator
identity and the code version.  Data files depend only on the
configuration, so reruns reproduce their hashes exactly.

Exit codes: 0 success, 1 runtime error, 2 configuration error, 3 scenario
outside the regime where the requested theory applies.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .batch_solver import (RegressionDataset, closs_gradient, fixed_point_solve, robustness_bound_rho,
                           robustness_bound_xi, sigma_condition, surface_grid, validate_robustness_bound)
from .config import (canonical_json, load_document, parse_bounds, parse_experiment, parse_surface, parse_sweep,
                     parse_theory, preset_names)
from .exceptions import ConfigError, InapplicableRegimeError, KrslError, StabilityViolationError
from .harness import compare_with_theory, outlier_robustness_sweep, run_experiment
from .noise import GENERATOR_IDENTITY, RngSpec
from .theory import (classical_lms_curve, classical_lms_emse, steady_state_emse_exact, steady_state_emse_taylor,
                     transient_curve)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_REGIME = 0, 1, 2, 3
MANIFEST_SCHEMA = "krsl-manifest/1"


# ---------------------------------------------------------------------------
# output helpers

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    """Write a header plus rows; floats with 17 significant digits, ``\\n`` line ends."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="ascii")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, source: str, doc: dict, files, started: float) -> Path:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config_source": source,
        "config_sha256": hashlib.sha256(canonical_json(doc).encode("ascii")).hexdigest(),
        "generator": GENERATOR_IDENTITY,
        "code_version": __version__,
        "environment": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "runtime_seconds": time.perf_counter() - started,
        "files": {name: sha256_file(out / name) for name in sorted(files)},
    }
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def _section(doc, name):
    if name not in doc:
        raise ConfigError(f"config has no {name!r} section")
    return doc[name]


# ---------------------------------------------------------------------------
# commands

def cmd_run(doc: dict, out: Path, workers: int = 1) -> list[str]:
    """Monte Carlo experiment, optional theory comparison and outlier sweep."""
    job = parse_experiment(_section(doc, "experiment"))
    sweep = parse_sweep(doc["outlier_sweep"], job) if "outlier_sweep" in doc else None
    cfg = job.config
    records = run_experiment(cfg, workers=workers)
    comparisons = {label: compare_with_theory(records[label], cfg, burn_in=job.burn_in)
                   for label in job.compare_theory}

    header, cols = ["iteration"], [np.arange(cfg.iterations)]
    for label, rec in records.items():
        header.append(f"{label}_wep")
        cols.append(rec.wep)
        if rec.emse is not None:
            header.append(f"{label}_emse")
            cols.append(rec.emse)
        if label in comparisons:
            header.append(f"{label}_wep_theory")
            cols.append(comparisons[label].theory_wep)
    write_csv(out / "curves.csv", header, zip(*cols))

    summary = {"iterations": cfg.iterations, "runs": cfg.runs, "seed": cfg.seed,
               "steady_state_window": cfg.steady_state_window, "algorithms": {}}
    for label, rec in records.items():
        entry = {
            "algo": rec.algo,
            "runs_used": rec.runs_used,
            "diverged_runs": list(rec.diverged_runs),
            "steady_wep": {"mean": rec.steady_wep, "std": rec.steady_wep_std},
        }
        if rec.emse is not None:
            lo, hi = rec.steady_emse_interval()
            entry["steady_emse"] = {"mean": rec.steady_emse, "std": rec.steady_emse_std, "ci95": [lo, hi]}
        if label in comparisons:
            c = comparisons[label]
            entry["theory"] = {
                "steady_emse_exact": c.theory_emse,
                "steady_emse_taylor": c.theory_emse_taylor,
                "burn_in": c.burn_in,
                "max_relative_deviation": c.max_deviation,
                "mean_relative_deviation": float(np.mean(c.deviation)),
            }
        summary["algorithms"][label] = entry
    files = ["curves.csv", "summary.json"]

    if sweep is not None:
        table = outlier_robustness_sweep(cfg, sweep.outlier_variances, sweep.probabilities, sweep.label, workers)
        rows = [(var, c, table.wep[i, j], table.wep_std[i, j], table.diverged[i, j])
                for i, var in enumerate(table.outlier_variances) for j, c in enumerate(table.probabilities)]
        write_csv(out / "sweep.csv", ["outlier_variance", "c", "wep_mean", "wep_std", "diverged"], rows)
        summary["outlier_sweep"] = {
            "label": table.label,
            "growth_with_probability": table.growth_with_probability(),
            "increases_with_variance": table.increases_with_variance(),
        }
        files.append("sweep.csv")
    write_json(out / "summary.json", summary)
    return files


def cmd_theory(doc: dict, out: Path, workers: int = 1) -> list[str]:
    """Steady-state and transient predictions, no simulation."""
    cases = parse_theory(_section(doc, "theory"))
    rows, summary, files = [], {}, ["theory.csv", "summary.json"]
    for case in cases:
        if case.algo == "lms":
            taylor = exact = classical_lms_emse(case.eta, case.m, case.input_variance, case.noise.variance)
            curve = (classical_lms_curve(case.eta, case.m, case.input_variance, case.noise.variance,
                                         case.transient_iterations, case.initial_wep)
                     if case.transient_iterations else None)
            sigma = lam = math.nan
        else:
            tc = case.theory_config()
            try:
                taylor = steady_state_emse_taylor(tc)
            except StabilityViolationError:
                if not case.exact:
                    raise
                taylor = math.nan
            exact = steady_state_emse_exact(tc) if case.exact else math.nan
            curve = transient_curve(tc, case.transient_iterations, case.initial_wep) if case.transient_iterations else None
            sigma, lam = case.params.sigma, case.params.lam
        entry = {"algo": case.algo, "eta": case.eta, "m": case.m, "input_variance": case.input_variance,
                 "noise": case.noise.to_dict(), "steady_emse_taylor": taylor, "steady_emse_exact": exact}
        if case.algo == "mkrsl":
            entry["params"] = {"sigma": sigma, "lam": lam}
        if math.isfinite(case.noise.variance):
            entry["lms_reference_emse"] = classical_lms_emse(case.eta, case.m, case.input_variance,
                                                             case.noise.variance)
        summary[case.name] = entry
        rows.append((case.name, case.algo, sigma, lam, case.eta, case.m, taylor, exact))
        if curve is not None:
            name = f"transient_{case.name}.csv"
            write_csv(out / name, ["iteration", "wep"], zip(range(curve.size), curve))
            files.append(name)
    write_csv(out / "theory.csv", ["case", "algo", "sigma", "lam", "eta", "m", "steady_emse_taylor",
                                   "steady_emse_exact"], rows)
    write_json(out / "summary.json", {"cases": summary})
    return files


def _surface_data(job):
    m = len(job.true_weights)
    rng = RngSpec(job.seed, 0)
    X = job.input.sampler(rng, 0)(job.samples * m).reshape(job.samples, m)
    v = job.noise.sampler(rng, 1)(job.samples)
    return RegressionDataset(X, X @ np.asarray(job.true_weights) + v)


def cmd_surface(doc: dict, out: Path, workers: int = 1) -> list[str]:
    """KRSL (and C-Loss) surface grids with analytic gradients."""
    job = parse_surface(_section(doc, "surface"))
    data = _surface_data(job)
    m = data.m
    names = [f"w{i + 1}" for i in range(m)]
    header = names + ["J"] + [f"grad{i + 1}" for i in range(m)]
    files = []
    grids = {"krsl": surface_grid(data, job.params, job.grid, "krsl")}
    if job.closs:
        grids["closs"] = surface_grid(data, job.params, job.grid, "closs")
    for loss, grid in grids.items():
        name = f"surface_{loss}.csv"
        write_csv(out / name, header, grid)
        files.append(name)

    w0 = np.asarray(job.true_weights)
    pts = grids["krsl"][:, :m]
    nearest = int(np.argmin(np.sum((pts - w0) ** 2, axis=1)))
    gnorm = np.linalg.norm(grids["krsl"][:, m + 1:], axis=1)
    fp = fixed_point_solve(data, job.params, init=w0)
    summary = {
        "samples": job.samples,
        "true_weights": list(job.true_weights),
        "params": {"sigma": job.params.sigma, "lam": job.params.lam},
        "grid_point_nearest_true_weights": pts[nearest],
        "gradient_norm_nearest_true_weights": gnorm[nearest],
        "gradient_norm_max": float(np.max(gnorm)),
        "fixed_point": {"weights": fp.weights, "iterations": fp.iterations, "converged": fp.converged},
    }
    if job.closs:
        summary["closs_gradient_norm_at_fixed_point"] = float(np.linalg.norm(
            closs_gradient(fp.weights, data, job.params.sigma)))
        summary["closs_gradient_norm_max"] = float(np.max(np.linalg.norm(grids["closs"][:, m + 1:], axis=1)))
    write_json(out / "surface_summary.json", summary)
    return files + ["surface_summary.json"]


def cmd_bounds(doc: dict, out: Path, workers: int = 1) -> list[str]:
    """Robustness bounds for one scenario plus an optional randomized validation."""
    job = parse_bounds(_section(doc, "bounds"))
    s = job.scenario
    xi, rho = robustness_bound_xi(s), robustness_bound_rho(s)
    report = {
        "N": s.N, "M": s.M, "lam": s.params.lam, "sigma": s.params.sigma, "eps_v": s.eps_v, "c": s.c,
        "sigma_condition": sigma_condition(s),
        "xi": xi,
        "rho": rho,
        "rho_eps_v": rho * s.eps_v,
        "xi_le_rho_eps_v": bool(xi <= rho * s.eps_v * (1 + 1e-9)),
    }
    files = ["bounds.json"]
    if job.instances:
        checks = validate_robustness_bound(job.instances, job.seed, job.max_outlier,
                                           None if job.random_parameters else s)
        rows = [(i, c.scenario.N, c.scenario.M, c.scenario.params.lam, c.scenario.params.sigma, c.scenario.eps_v,
                 c.scenario.c, int(c.adversarial), c.true_weight, c.minimizer, c.xi, c.rho, c.ratio)
                for i, c in enumerate(checks)]
        write_csv(out / "validation.csv", ["instance", "N", "M", "lam", "sigma", "eps_v", "c", "adversarial",
                                           "true_weight", "minimizer", "xi", "rho", "ratio"], rows)
        report["validation"] = {
            "instances": len(checks),
            "seed": job.seed,
            "max_outlier": job.max_outlier,
            "random_parameters": job.random_parameters,
            "violations": sum(c.ratio > 1.0 for c in checks),
            "bound_inconsistencies": sum(not c.bound_consistent for c in checks),
            "max_ratio": max(c.ratio for c in checks),
        }
        files.append("validation.csv")
    write_json(out / "bounds.json", report)
    return files


COMMANDS = {"run": cmd_run, "theory": cmd_theory, "surface": cmd_surface, "bounds": cmd_bounds}


def apply_overrides(doc: dict, runs=None, seed=None) -> dict:
    """Copy of ``doc`` with ``--runs``/``--seed`` applied to every section that has them."""
    doc = copy.deepcopy(doc)
    if runs is not None and "experiment" in doc:
        doc["experiment"]["runs"] = runs
    if seed is not None:
        for name in ("experiment", "surface"):
            if isinstance(doc.get(name), dict):
                doc[name]["seed"] = seed
        if isinstance(doc.get("bounds"), dict) and isinstance(doc["bounds"].get("validation"), dict):
            doc["bounds"]["validation"]["seed"] = seed
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="krsl", description="Kernel risk-sensitive loss experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.strip().splitlines()[0])
        p.add_argument("config", help="JSON config file or preset:NAME")
        p.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
        p.add_argument("--runs", type=int, help="override the number of Monte Carlo runs")
        p.add_argument("--seed", type=int, help="override the random seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes for Monte Carlo runs")
    sub.add_parser("presets", help="list bundled presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    started = time.perf_counter()
    try:
        if args.runs is not None and args.runs < 1:
            raise ConfigError("--runs must be positive")
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        doc = apply_overrides(load_document(args.config), args.runs, args.seed)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](doc, out, args.threads)
        write_manifest(out, args.command, args.config, doc, files, started)
    except ConfigError as exc:
        print(f"krsl {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InapplicableRegimeError, StabilityViolationError) as exc:
        print(f"krsl {args.command}: outside the applicable regime: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (KrslError, ArithmeticError, OSError) as exc:
        print(f"krsl {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"krsl {args.command}: wrote {', '.join(files)} and manifest.json to {out}")
    return EXIT_OK

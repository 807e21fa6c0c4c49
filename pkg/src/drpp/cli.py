"""Command line entry point: ``drpp bounds|simulate|predict|reproduce-paper``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig, reference_preset, parse_config, serialize_config
from .errors import ConfigError, DrppError
from .predictors import PredictorKind, eig_drpp_predict, predict
from .sim import (
    ScoreSummary,
    TrajectoryRecord,
    aggregate_scores,
    confidence_ellipse,
    coverage,
    default_ellipse_steps,
    mean_step_scores,
    membership_violations,
    simulate,
)
from .worstcase import BoundsReport, Verdict, compute_bounds, diagnose_ambiguity

OUTPUT_ENV = "DRPP_OUTPUT_DIR"
REPRODUCTION_SEED = 7
REPRODUCTION_CELLS = (
    ("lti_zero", "lti", "zero"),
    ("ltv_zero", "ltv", "zero"),
    ("adversarial_zero", "adversarial", "zero"),
    ("lti_lqr", "lti", "lqr"),
    ("ltv_lqr", "ltv", "lqr"),
    ("adversarial_lqr", "adversarial", "lqr"),
)


def resolve_output_dir(cfg: ExperimentConfig | None, override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    return Path(cfg.output_dir if cfg is not None else "drpp_output")


def cmd_bounds(cfg: ExperimentConfig, out_dir=None, cap: float | None = None) -> BoundsReport:
    aset = cfg.build_ambiguity()
    sets = [aset] * cfg.horizon
    caps = None if cap is None else [cap] * cfg.horizon
    report = compute_bounds(sets, caps)
    out = resolve_output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_bounds_csv(out / "bounds.csv", report)
    return report


@dataclass
class SimulationResult:
    records: list[TrajectoryRecord]
    summary: ScoreSummary
    bounds: BoundsReport
    verdict: dict
    coverage: dict[str, float]
    violations: int
    out_dir: Path


def _verdicts(cfg: ExperimentConfig, records, bounds: BoundsReport) -> dict:
    per = {}
    for kind in (PredictorKind.NOISE_DRPP, PredictorKind.EIG_DRPP):
        if kind in records[0].step_scores:
            v = diagnose_ambiguity(mean_step_scores(records, kind), bounds.per_step_upper,
                                   bounds.per_step_lower, cfg.verdict_fraction)
            per[kind.value] = v.to_dict()
    overall = Verdict.CONSISTENT
    if any(v["verdict"] == Verdict.TOO_LARGE.value for v in per.values()):
        overall = Verdict.TOO_LARGE
    elif per.get("eig_drpp", {}).get("verdict") == Verdict.TOO_SMALL.value:
        overall = Verdict.TOO_SMALL
    return {"verdict": overall.value, "predictors": per, "bounds": bounds.to_dict()}


def _ellipses(cfg: ExperimentConfig, records, cover: dict) -> dict:
    rec = records[0]
    steps = cfg.ellipse_steps if cfg.ellipse_steps is not None else default_ellipse_steps(cfg.horizon)
    out = []
    for k in steps:
        preds = {}
        for kind in rec.means:
            e = confidence_ellipse(rec.prediction(kind, k), cfg.beta)
            preds[kind.value] = {**e.to_dict(), "covers_next_state": e.contains(rec.states[k + 1])}
        out.append({"k": k, "x_next": rec.states[k + 1].tolist(), "predictors": preds})
    return {"beta": cfg.beta, "trajectory": rec.traj_id, "steps": out, "coverage": cover}


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1,
                   write_trajectories: bool = True) -> SimulationResult:
    exp = cfg.to_experiment()
    bounds = compute_bounds([exp.aset] * cfg.horizon)
    records = simulate(exp, cfg.n_trajectories, cfg.seed, workers)
    summary = aggregate_scores(records)
    cover = {k.value: coverage(records, k, cfg.beta) for k in summary.predictors}
    verdict = _verdicts(cfg, records, bounds)
    violations = len(membership_violations(exp.aset, records))

    out = resolve_output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if write_trajectories:
        io.write_trajectories_csv(out / "trajectories.csv", records)
    io.write_summary_csv(out / "summary.csv", summary)
    io.write_json(out / "ellipses.json", _ellipses(cfg, records, cover))
    io.write_json(out / "verdict.json", {**verdict, "membership_violations": violations})
    return SimulationResult(records, summary, bounds, verdict, cover, violations, out)


def cmd_simulate(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> SimulationResult:
    return run_experiment(cfg, out_dir, workers, write_trajectories=True)


def cmd_predict(cfg: ExperimentConfig, state, control=None) -> dict:
    aset = cfg.build_ambiguity()
    if control is None:
        control = np.zeros(aset.control_dim)
    z = aset.pair(state, control)
    preds = {}
    for name in cfg.predictors:
        kind = PredictorKind(name)
        if kind is PredictorKind.ORACLE:
            continue
        p = predict(kind, aset, z)
        preds[kind.value] = {"mean": p.mean.tolist(), "covariance": p.covariance.tolist()}
    _, sol = eig_drpp_predict(aset, z)
    return {
        "state": list(map(float, state)),
        "control": list(map(float, control)),
        "gamma0": aset.gamma0(z),
        "predictions": preds,
        "eig_drpp_eigenvalues": sol.lambdas_hat.tolist(),
        "eig_drpp_attacked_index": sol.j_star,
    }


@dataclass
class CellResult:
    name: str
    config: ExperimentConfig
    result: SimulationResult

    def final_means(self) -> dict[str, float]:
        s = self.result.summary
        return {k.value: float(s.mean[k][-1]) for k in s.predictors}


def cmd_reproduce_paper(out_dir=None, seed: int = REPRODUCTION_SEED, n_trajectories: int = 1000,
                        horizon: int = 32, workers: int = 1, write_trajectories: bool = False) -> dict[str, CellResult]:
    """Run the six mechanism/controller cells with the published parameters."""
    out = resolve_output_dir(None, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = {}
    for name, mech, ctrl in REPRODUCTION_CELLS:
        cfg = reference_preset(mechanism={"kind": mech}, controller={"kind": ctrl}, seed=seed,
                           n_trajectories=n_trajectories, horizon=horizon, output_dir=str(out / name))
        (out / name).mkdir(parents=True, exist_ok=True)
        (out / name / "config.json").write_text(serialize_config(cfg) + "\n")
        cells[name] = CellResult(name, cfg, run_experiment(cfg, out / name, workers, write_trajectories))

    first = next(iter(cells.values()))
    io.write_bounds_csv(out / "bounds.csv", first.result.bounds)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "k", "predictor", "mean", "p5", "p95"])
        for name, cell in cells.items():
            for row in io.summary_rows(cell.result.summary):
                w.writerow([name, *row])
    report = {
        name: {
            "final_mean_average_score": cell.final_means(),
            "coverage": cell.result.coverage,
            "membership_violations": cell.result.violations,
            "verdict": cell.result.verdict["verdict"],
        }
        for name, cell in cells.items()
    }
    io.write_json(out / "report.json", {"seed": seed, "n_trajectories": n_trajectories,
                                        "horizon": horizon, "cells": report})
    return cells


def _vector(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _load(path: str) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drpp", description="Distributionally robust probabilistic prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="offline value-function bounds (no simulation)")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--cap", type=float, help="override the gamma0 cap used for the lower bound")

    p = sub.add_parser("simulate", help="run the Monte-Carlo experiment of a config")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("reproduce-paper", help="run the six published experiment cells")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=REPRODUCTION_SEED)
    p.add_argument("--trajectories", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=32)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-trajectories", action="store_true")

    p = sub.add_parser("predict", help="emit each predictor's pdf at one state-control pair")
    p.add_argument("config")
    p.add_argument("--state", type=_vector, required=True)
    p.add_argument("--control", type=_vector)
    return parser


def _fail(exc: Exception, code: int) -> int:
    err = {"error": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "path", ""):
        err["path"] = exc.path
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            report = cmd_bounds(_load(args.config), args.out, args.cap)
            print(json.dumps(report.to_dict(), indent=2))
        elif args.command == "simulate":
            res = cmd_simulate(_load(args.config), args.out, args.workers)
            print(json.dumps({"out_dir": str(res.out_dir), "verdict": res.verdict["verdict"],
                              "coverage": res.coverage}, indent=2))
        elif args.command == "reproduce-paper":
            out = args.out if args.out is not None else resolve_output_dir(None) / "reproduction"
            cells = cmd_reproduce_paper(out, args.seed, args.trajectories, args.horizon,
                                        args.workers, args.dump_trajectories)
            print(json.dumps({name: c.final_means() for name, c in cells.items()}, indent=2))
        else:
            print(json.dumps(cmd_predict(_load(args.config), args.state, args.control), indent=2))
    except ConfigError as exc:
        return _fail(exc, 2)
    except DrppError as exc:
        return _fail(exc, 3)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        return _fail(exc, 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""CSV and JSON emitters; floats are written with 17 significant digits."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .predictors import PredictorKind
from .sim import ScoreSummary, TrajectoryRecord
from .worstcase import BoundsReport


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def trajectory_header(d: int, du: int, kinds: Sequence[PredictorKind]) -> list[str]:
    cols = ["traj_id", "k"]
    cols += [f"x_{i}" for i in range(d)]
    cols += [f"u_{i}" for i in range(du)]
    cols += [f"x_next_{i}" for i in range(d)]
    for kind in kinds:
        p = kind.value
        cols += [f"{p}_mean_{i}" for i in range(d)]
        cols += [f"{p}_cov_{i}{j}" for i in range(d) for j in range(d)]
        cols += [f"{p}_step_score", f"{p}_cum_score"]
    return cols


def write_trajectories_csv(path: Path, records: Sequence[TrajectoryRecord]) -> None:
    kinds = tuple(records[0].means)
    d, du = records[0].states.shape[1], records[0].controls.shape[1]
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(trajectory_header(d, du, kinds))
        for rec in records:
            for k in range(rec.horizon):
                row = [str(rec.traj_id), str(k)]
                row += [fmt(v) for v in rec.states[k]]
                row += [fmt(v) for v in rec.controls[k]]
                row += [fmt(v) for v in rec.states[k + 1]]
                for kind in kinds:
                    row += [fmt(v) for v in rec.means[kind][k]]
                    row += [fmt(v) for v in rec.covs[kind][k].reshape(-1)]
                    row += [fmt(rec.step_scores[kind][k]), fmt(rec.cumulative[kind][k + 1])]
                w.writerow(row)


def summary_rows(summary: ScoreSummary):
    for k in range(summary.horizon):
        for kind in summary.predictors:
            yield [str(k), kind.value, fmt(summary.mean[kind][k]),
                   fmt(summary.p5[kind][k]), fmt(summary.p95[kind][k])]


def write_summary_csv(path: Path, summary: ScoreSummary) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["k", "predictor", "mean", "p5", "p95"])
        w.writerows(summary_rows(summary))


def write_bounds_csv(path: Path, report: BoundsReport) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["k", "upper", "lower", "gamma0_cap"])
        for k in range(report.horizon):
            w.writerow([str(k), fmt(report.per_step_upper[k]), fmt(report.per_step_lower[k]),
                        fmt(report.gamma0_caps[k])])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

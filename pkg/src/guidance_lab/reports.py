"""CSV and JSON emission for trajectories, sweeps and probe reports.

CSV dialect: comma separator, '.' decimal point, one header row, LF line
endings, floats at 17 significant digits so every binary double survives
a round trip.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .mixture import SurfaceCertificate
from .samplers import TrajectoryRecord
from .theory import ProbeReport, ScatterSet, SweepRow

__all__ = [
    "format_float",
    "write_csv",
    "trajectory_rows",
    "summary_rows",
    "write_trajectory_csv",
    "write_summary_csv",
    "write_sweep_csv",
    "write_scatter_csv",
    "write_probe_csv",
    "write_report_json",
]


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path: str, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _vector_columns(prefix: str, dim: int) -> list[str]:
    return [f"{prefix}_{i}" for i in range(dim)]


def trajectory_rows(record: TrajectoryRecord):
    dim = record.final_x0.shape[0]
    header = (
        ["seed", "strategy", "omega", "step", "t"]
        + _vector_columns("x_t", dim)
        + _vector_columns("x0_cond", dim)
        + _vector_columns("x0_uncond", dim)
        + _vector_columns("x0_guided", dim)
        + ["gamma", "gamma_omega", "guided_norm", "cfgpp_residual"]
    )
    rows = []
    residual = record.cfgpp_residual
    for i in range(record.steps):
        rows.append(
            [record.seed, record.strategy, record.omega, i, record.times[i]]
            + list(record.x_t[i])
            + list(record.x0_cond[i])
            + list(record.x0_uncond[i])
            + list(record.x0_guided[i])
            + [
                record.gamma[i],
                record.gamma_omega[i],
                record.guided_norm[i],
                residual[i] if residual is not None else float("nan"),
            ]
        )
    return header, rows


def write_trajectory_csv(records: list[TrajectoryRecord], path: str) -> None:
    """One row per (trajectory, step), trajectories ordered by seed."""
    records = sorted(records, key=lambda r: r.seed)
    header = None
    all_rows = []
    for record in records:
        h, rows = trajectory_rows(record)
        header = header or h
        all_rows.extend(rows)
    if header is None:
        raise ValueError("no records to write")
    write_csv(path, header, all_rows)


def summary_rows(
    records: list[TrajectoryRecord],
    certificate: SurfaceCertificate | None = None,
):
    records = sorted(records, key=lambda r: r.seed)
    dim = records[0].final_x0.shape[0]
    header = ["seed", "strategy", "omega"] + _vector_columns("x0", dim) + ["norm"]
    if certificate is not None:
        header.append("w_dot_x0")
    rows = []
    for record in records:
        row = (
            [record.seed, record.strategy, record.omega]
            + list(record.final_x0)
            + [float(np.linalg.norm(record.final_x0))]
        )
        if certificate is not None:
            row.append(float(certificate.normal @ record.final_x0))
        rows.append(row)
    return header, rows


def write_summary_csv(
    records: list[TrajectoryRecord],
    path: str,
    certificate: SurfaceCertificate | None = None,
) -> None:
    """Final-sample summary; projection column only with a certificate."""
    if not records:
        raise ValueError("no records to write")
    header, rows = summary_rows(records, certificate)
    write_csv(path, header, rows)


def write_sweep_csv(rows: list[SweepRow], path: str) -> None:
    write_csv(
        path,
        ["strategy", "omega", "mean_norm", "std_norm", "n_seeds"],
        [[r.strategy, r.omega, r.mean_norm, r.std_norm, r.n_seeds] for r in rows],
    )


def write_scatter_csv(sets: list[ScatterSet], path: str) -> None:
    if not sets:
        raise ValueError("no scatter sets to write")
    dim = sets[0].samples.shape[1]
    header = ["omega", "strategy", "component", "seed"] + _vector_columns("x0", dim)
    rows = []
    for s in sets:
        for comp, seed, sample in zip(s.components, s.seeds, s.samples):
            rows.append([s.omega, s.strategy, int(comp), int(seed)] + list(sample))
    write_csv(path, header, rows)


def write_probe_csv(report: ProbeReport, path: str) -> None:
    """Raw per-item measurements behind one probe verdict."""
    if report.details:
        keys = list(report.details[0].keys())
        write_csv(path, keys, [[d[k] for k in keys] for d in report.details])
    else:
        items = sorted(report.measured.items())
        write_csv(path, ["quantity", "value"], [[k, v] for k, v in items])


def write_report_json(reports: list[ProbeReport], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    payload = {
        "suite": "guidance-lab verification",
        "all_passed": all(r.passed for r in reports),
        "probes": [r.to_dict() for r in reports],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")

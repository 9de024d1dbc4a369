"""Trace CSV serialization.

One row per control cycle; floats are written in scientific notation with
17 significant digits so a reread reproduces every logged value exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .loop import CycleRecord, SimTrace

BASE_COLUMNS = [
    "t", "c_x", "c_y", "c_z", "cd_x", "cd_y", "cd_z", "cdd_x", "cdd_y", "cdd_z",
    "zmp_x", "zmp_y", "zmp_lb_x", "zmp_ub_x", "zmp_lb_y", "zmp_ub_y",
    "dz_x", "dz_y", "fc_x", "fc_y", "fc_z", "contact_id",
]


def trace_columns(n_joints: int) -> list[str]:
    return BASE_COLUMNS + [f"q_{i}" for i in range(1, n_joints + 1)]


def _fmt(x: float) -> str:
    return f"{float(x):.16e}"


def record_row(rec: CycleRecord) -> list[str]:
    values = [rec.time, *rec.com, *rec.com_vel, *rec.com_acc, *rec.zmp,
              rec.zmp_lower[0], rec.zmp_upper[0], rec.zmp_lower[1], rec.zmp_upper[1],
              *rec.delta_z, *rec.force]
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(rec.arm_angles)):
        raise ValueError(f"non-finite value in the record at t = {rec.time}")
    return [_fmt(v) for v in values] + [rec.contact_id] + [_fmt(q) for q in rec.arm_angles]


def write_trace(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trace_columns(trace.n_joints))
        for rec in trace.records:
            writer.writerow(record_row(rec))


def read_trace(path, scenario_name: str = "") -> SimTrace:
    """Rebuild a trace from CSV; jerks, rates and planner internals are not stored."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:len(BASE_COLUMNS)] != BASE_COLUMNS:
            raise ValueError(f"{path}: unexpected header")
        n_joints = len(header) - len(BASE_COLUMNS)
        if header != trace_columns(n_joints):
            raise ValueError(f"{path}: unexpected joint columns")
        trace = SimTrace(scenario_name or path.stem, n_joints)
        cid = BASE_COLUMNS.index("contact_id")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            v = np.array([float(x) for x in row[:cid]])
            q = np.array([float(x) for x in row[cid + 1:]])
            trace.append(CycleRecord(
                time=v[0], com=v[1:4], com_vel=v[4:7], com_acc=v[7:10], jerk=None,
                zmp=v[10:12], zmp_lower=v[[12, 14]], zmp_upper=v[[13, 15]],
                delta_z=v[16:18], force=v[18:21], contact_id=row[cid], arm_angles=q,
            ))
    return trace

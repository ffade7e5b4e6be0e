"""CSV and JSON output, plus staged writes that never leave partial results."""
from __future__ import annotations

import csv
import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from llp.models import Action
from llp.process import Trajectory

TRAJECTORY_COLUMNS = ("n", "x1", "x2", "action", "cost", "first_visit")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """One row per state; the final row has empty action, cost and first_visit."""
    h = traj.horizon

    def rows():
        for n in range(h + 1):
            x1, x2 = int(traj.states[n, 0]), int(traj.states[n, 1])
            if n < h:
                yield n, x1, x2, Action(int(traj.actions[n])).name.lower(), float(traj.costs[n]), bool(traj.first_visit[n])
            else:
                yield n, x1, x2, None, None, None

    return write_rows(path, TRAJECTORY_COLUMNS, rows())


def read_trajectory_csv(path) -> Trajectory:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(TRAJECTORY_COLUMNS)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no rows")
    states = np.array([[int(r["x1"]), int(r["x2"])] for r in rows], dtype=np.int64)
    body = rows[:-1]
    return Trajectory(
        x0=(int(states[0, 0]), int(states[0, 1])),
        states=states,
        actions=np.array([int(Action.parse(r["action"])) for r in body], dtype=np.int8),
        costs=np.array([float(r["cost"]) for r in body], dtype=float),
        first_visit=np.array([r["first_visit"] == "1" for r in body], dtype=bool),
    )


@contextmanager
def staged_output(out_dir):
    """Yield a scratch directory whose files are moved into ``out_dir`` on success.

    The scratch directory lives next to ``out_dir`` so each move is an
    atomic rename.  If the body raises, nothing reaches ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out_dir))
    try:
        yield stage
        for item in sorted(stage.iterdir()):
            os.replace(item, out_dir / item.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)

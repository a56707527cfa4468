"""CSV/JSON artifact writers and config loading.

Measures travel as CSV point clouds with a JSON sidecar describing the
reference; couplings as sparse triplets; trajectories as per-step
diagnostic rows. Manifests are JSON with sorted keys so equal runs produce
byte-identical files (timestamps excepted). All writes are atomic.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .measures import DiscreteMeasure, ReferenceMeasure, potential_from_descriptor
from .transport import Coupling

__all__ = [
    "atomic_write_text",
    "write_measure_csv",
    "read_measure_csv",
    "write_reference",
    "read_reference_sidecar",
    "write_coupling_csv",
    "write_trajectory_csv",
    "write_manifest",
    "load_config",
]


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list[str], rows) -> str:
    out = []
    out.append(",".join(header))
    for row in rows:
        out.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(out) + "\n"


def write_measure_csv(path, mu: DiscreteMeasure) -> None:
    header = [f"coord_{i + 1}" for i in range(mu.dim)] + ["weight"]
    rows = [tuple(map(float, pt)) + (float(w),) for pt, w in zip(mu.support, mu.weights)]
    atomic_write_text(Path(path), _csv_text(header, rows))


def read_measure_csv(path) -> DiscreteMeasure:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        k = len(header) - 1
        pts, ws = [], []
        for row in reader:
            pts.append([float(v) for v in row[:k]])
            ws.append(float(row[k]))
    return DiscreteMeasure.from_atoms(np.asarray(pts), np.asarray(ws))


def write_reference(path_base, gamma: ReferenceMeasure) -> None:
    """CSV of grid weights plus a JSON sidecar with the construction data."""
    base = Path(path_base)
    rows = [(float(x), float(w)) for x, w in zip(gamma.grid, gamma.weights)]
    atomic_write_text(base.with_suffix(".csv"), _csv_text(["coord_1", "weight"], rows))
    sidecar = {
        "potential": gamma.potential.descriptor(),
        "bounds": [gamma.bounds[0], gamma.bounds[1]],
        "n": gamma.n,
        "log_partition": gamma.log_partition,
    }
    atomic_write_text(
        base.with_suffix(".json"), json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )


def read_reference_sidecar(path):
    with open(path) as handle:
        data = json.load(handle)
    from .measures import discretize_reference

    pot = potential_from_descriptor(data["potential"])
    return discretize_reference(pot, int(data["n"]), tuple(data["bounds"]))


def write_coupling_csv(path, coupling: Coupling) -> None:
    rows = [
        (int(i), int(j), float(m))
        for i, j, m in zip(coupling.rows, coupling.cols, coupling.masses)
    ]
    atomic_write_text(Path(path), _csv_text(["i", "j", "mass"], rows))


def write_trajectory_csv(path, traj) -> None:
    rows = [(float(traj.times[0]), float(traj.entropies[0]), 0.0, 0.0)]
    for k in range(len(traj.w2_increments)):
        rows.append(
            (
                float(traj.times[k + 1]),
                float(traj.entropies[k + 1]),
                float(traj.w2_increments[k]),
                float(traj.evi_residuals[k]),
            )
        )
    atomic_write_text(
        Path(path), _csv_text(["t", "entropy", "w2_increment", "evi_max_residual"], rows)
    )


def write_manifest(path, data: dict) -> None:
    atomic_write_text(Path(path), json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_config(path) -> dict:
    with open(path) as handle:
        return json.load(handle)

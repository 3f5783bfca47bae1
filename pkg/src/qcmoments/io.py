"""CSV and manifest writers with fixed, documented column orders."""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .ensemble import Ensemble, MomentField
from .ehrenfest import BatchTrajectory

__all__ = [
    "write_csv",
    "write_trajectory_csv",
    "write_ensemble_csv",
    "write_moment_field_csv",
    "write_fig1_csv",
    "write_manifest",
]

_SECOND_COLS = ["mu00", "mu01", "mu02", "mu03", "mu11", "mu12", "mu13",
                "mu22", "mu23", "mu33"]


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v
                             for v in row])


def write_trajectory_csv(path: Path, traj: BatchTrajectory,
                         member: int = 0) -> None:
    """Columns: t, R, P, nx, ny, nz, f_H."""
    rows = [(float(traj.t[i]), float(traj.r[i, member]),
             float(traj.p[i, member]), float(traj.n[i, member, 0]),
             float(traj.n[i, member, 1]), float(traj.n[i, member, 2]),
             float(traj.energy[i, member])) for i in range(traj.t.size)]
    write_csv(path, ["t", "R", "P", "nx", "ny", "nz", "f_H"], rows)


def write_ensemble_csv(path: Path, ens: Ensemble) -> None:
    """Columns: w, R, P, nx, ny, nz."""
    rows = [(float(ens.weights[i]), float(ens.r[i]), float(ens.p[i]),
             float(ens.n[i, 0]), float(ens.n[i, 1]), float(ens.n[i, 2]))
            for i in range(ens.size)]
    write_csv(path, ["w", "R", "P", "nx", "ny", "nz"], rows)


def write_moment_field_csv(path: Path, field: MomentField) -> None:
    """Columns: R, P, F_C, mu1..mu3 and, for order 2, mu00..mu33.

    First-moment columns are the Pauli coordinates of the unnormalized
    moment; F_C equals twice the identity coordinate.
    """
    R, P = field.grid.meshgrid()
    header = ["R", "P", "F_C", "mu1", "mu2", "mu3"]
    if field.second is not None:
        header += _SECOND_COLS
    rows = []
    for i in range(field.grid.n_r):
        for j in range(field.grid.n_p):
            row = [float(R[i, j]), float(P[i, j]), float(field.f_c[i, j]),
                   float(field.first[i, j, 1]), float(field.first[i, j, 2]),
                   float(field.first[i, j, 3])]
            if field.second is not None:
                row += [float(v) for v in field.second[i, j]]
            rows.append(row)
    write_csv(path, header, rows)


def write_fig1_csv(path: Path, table: np.ndarray) -> None:
    """Columns: R, theta, dmu1, dmu3 (R fastest)."""
    write_csv(path, ["R", "theta", "dmu1", "dmu3"],
              [tuple(float(v) for v in row) for row in table])


def write_manifest(out_dir: Path, command: str, config: dict, seed,
                   config_path: str | None = None) -> Path:
    """Record everything needed to reproduce a run.

    The manifest embeds the resolved config, so it can be passed back to
    the CLI as the config file of an identical run.
    """
    from . import __version__

    digest = None
    if config_path is not None and Path(config_path).exists():
        digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    manifest = {
        "command": command,
        "config": config,
        "config_sha256": digest,
        "seed": seed,
        "versions": {
            "qcmoments": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "created": datetime.now(timezone.utc).isoformat(),
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, default=float)
    return path

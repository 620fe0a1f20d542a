"""Simulation output: legacy VTK snapshots, the energy ledger CSV, reports.

Everything is plain ASCII with fixed float formats so that identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .mesh import TriMesh
from .stepper import EnergyRecord

ENERGY_HEADER = [
    "t",
    "E_el",
    "E_ki",
    "E_s",
    "dissipation_increment",
    "injected_work_increment",
    "residual",
]
ENERGY_FORMAT_VERSION = "# fracwave energies v1"


def write_vtk_snapshot(mesh: TriMesh, u: np.ndarray, z: np.ndarray, v_sq: np.ndarray, path: str) -> None:
    """Legacy ASCII VTK unstructured grid with displacement, damage, |v|^2.

    u is nodal (n, 2); z and v_sq are nodal scalars. Values carry 9
    significant digits, enough to round-trip for plotting purposes.
    """
    u = np.asarray(u, dtype=np.float64).reshape(mesh.n_nodes, 2)
    z = np.asarray(z, dtype=np.float64)
    v_sq = np.asarray(v_sq, dtype=np.float64)
    n, m = mesh.n_nodes, mesh.n_triangles
    lines = [
        "# vtk DataFile Version 2.0",
        "fracwave snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    lines.extend(f"{x:.9g} {y:.9g} 0" for x, y in mesh.node_coords)
    lines.append(f"CELLS {m} {4 * m}")
    lines.extend(f"3 {i} {j} {k}" for i, j, k in mesh.triangles)
    lines.append(f"CELL_TYPES {m}")
    lines.extend("5" for _ in range(m))
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS displacement double")
    lines.extend(f"{ux:.9g} {uy:.9g} 0" for ux, uy in u)
    lines.append("SCALARS damage double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{v:.9g}" for v in z)
    lines.append("SCALARS v_squared double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{v:.9g}" for v in v_sq)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def write_energies_csv(records: list[EnergyRecord], path: str) -> None:
    """One row per step, 17 significant digits (full float64 precision)."""
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write(ENERGY_FORMAT_VERSION + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ENERGY_HEADER)
        for r in records:
            writer.writerow(
                f"{v:.16e}"
                for v in (
                    r.t,
                    r.elastic,
                    r.kinetic,
                    r.surface,
                    r.dissipation_increment,
                    r.injected_work_increment,
                    r.balance_residual,
                )
            )


def read_energies_csv(path: str) -> list[EnergyRecord]:
    """Parse an energy ledger written by write_energies_csv."""
    records = []
    with open(path, "r", encoding="ascii") as f:
        first = f.readline().strip()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing format version line")
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ENERGY_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for row in reader:
            if not row:
                continue
            t, el, ki, su, diss, work, res = (float(v) for v in row)
            records.append(
                EnergyRecord(
                    t=t,
                    elastic=el,
                    kinetic=ki,
                    surface=su,
                    dissipation_increment=diss,
                    injected_work_increment=work,
                    balance_residual=res,
                )
            )
    return records


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def snapshot_path(output_dir: str, phase: str, step: int) -> str:
    return os.path.join(output_dir, f"{phase}_{step:06d}.vtk")

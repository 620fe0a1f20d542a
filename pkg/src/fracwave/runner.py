"""End-to-end run orchestration: phases, snapshots, ledger files, report."""

from __future__ import annotations

import math
import os
import time

import numpy as np

from .config import RunConfig
from .linalg import CgError, PreconditionerError
from .mesh import generate_rect_mesh
from .scenario import StepFailure
from .output import (
    snapshot_path,
    write_energies_csv,
    write_report,
    write_vtk_snapshot,
)
from .scenario import run_compression_pretest, run_pwave_experiment
from .stepper import audit_energy_balance


class SolverFailure(RuntimeError):
    """A linear solve failed during a run; the report marks the step."""


def _audit_summary(records, onset_step=None) -> dict:
    def summarize(rs):
        if len(rs) < 2:
            return None
        audit = audit_energy_balance(rs)
        return {
            "max_step_residual": audit.max_step_residual,
            "max_cumulative_residual": audit.max_cumulative_residual,
            "scale": audit.scale,
        }

    summary = {"overall": summarize(records)}
    if onset_step is not None and 2 <= onset_step <= len(records):
        summary["pre_onset"] = summarize(records[: onset_step - 1])
        summary["post_onset"] = summarize(records[onset_step - 1 :])
    return summary


def _snapshot_writer(config: RunConfig, phase_name: str, files: list[str]):
    outdir = config.output_dir
    every = config.snapshot_every
    tau = config.tau

    def on_step(step, state, _record):
        if step % every != 0:
            return
        path = snapshot_path(outdir, phase_name, step)
        v = state.velocity(tau)
        v_sq = v[:, 0] ** 2 + v[:, 1] ** 2
        write_vtk_snapshot(state.z.mesh, state.u_curr.values, state.z.values, v_sq, path)
        files.append(os.path.basename(path))

    return on_step


def run(config: RunConfig) -> dict:
    """Execute the configured phases and write all output files.

    Returns the run report (also written to report.json). Raises
    SolverFailure after writing a failure report if a linear solve breaks
    down mid-run.
    """
    t_start = time.perf_counter()
    os.makedirs(config.output_dir, exist_ok=True)
    mesh = generate_rect_mesh(config.mesh.nx, config.mesh.ny)
    material = config.material_params()
    solver = config.solver_options()
    files: list[str] = []
    report: dict = {"config": config.echo(), "phase": config.phase}

    def fail(step, phase_name, exc):
        report["status"] = "solver_failure"
        report["failed_phase"] = phase_name
        report["failed_step"] = step
        report["error"] = str(exc)
        report["wall_time_s"] = time.perf_counter() - t_start
        report["files"] = files
        path = os.path.join(config.output_dir, "report.json")
        write_report(report, path)
        raise SolverFailure(f"{phase_name} step {step}: {exc}") from exc

    pretest = None
    if config.phase in ("pretest", "full"):
        cfg = config.scenario_config(end_time=config.scenario.pretest_end_time)
        try:
            pretest = run_compression_pretest(mesh, material, cfg, solver=solver)
        except StepFailure as exc:
            fail(exc.step, "pretest", exc.cause)
        except (CgError, PreconditionerError) as exc:
            fail(None, "pretest", exc)
        name = "energies.csv" if config.phase == "pretest" else "pretest_energies.csv"
        write_energies_csv(pretest.records, os.path.join(config.output_dir, name))
        files.append(name)
        report["pretest"] = {
            "a_star": pretest.a_star,
            "onset_step": pretest.onset_step,
            "onset_time": pretest.onset_time,
            "outcome": "onset" if pretest.a_star is not None else "no onset",
        }
        report["pretest_audit"] = _audit_summary(pretest.records, pretest.onset_step)

    if config.phase in ("pwave", "full"):
        cfg = config.scenario_config()
        on_step = _snapshot_writer(config, "pwave", files)
        try:
            result = run_pwave_experiment(
                mesh,
                material,
                cfg,
                flavor=config.model_flavor,
                solver=solver,
                on_step=on_step,
            )
        except StepFailure as exc:
            fail(exc.step, "pwave", exc.cause)
        except (CgError, PreconditionerError) as exc:
            fail(None, "pwave", exc)
        write_energies_csv(result.phase.records, os.path.join(config.output_dir, "energies.csv"))
        files.append("energies.csv")
        orientation = result.orientation
        report["main"] = {
            "flavor": result.flavor,
            "held_displacement": result.held_displacement,
            "onset_step": result.onset_step,
            "onset_time": result.onset_time,
            "outcome": "onset" if result.onset_step is not None else "no onset",
            "orientation_rad": orientation,
            "orientation_deg": None if orientation is None else math.degrees(orientation),
        }
        report["energy_audit"] = _audit_summary(result.phase.records, result.onset_step)

    report["status"] = "ok"
    report["wall_time_s"] = time.perf_counter() - t_start
    report["files"] = sorted(files) + ["report.json"]
    write_report(report, os.path.join(config.output_dir, "report.json"))
    return report

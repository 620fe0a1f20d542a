"""Command-line interface.

    fracwave run --config cfg.json [--out DIR]
    fracwave mesh --nx 100 --ny 200 --out mesh.txt
    fracwave audit --energies energies.csv

Exit codes: 0 success, 2 configuration error, 3 solver failure.
FRACWAVE_THREADS caps the BLAS worker count (best effort via the usual
environment knobs; set it before heavy imports happen, e.g. through the
console script).
"""

from __future__ import annotations

import argparse
import os
import sys


def _cap_threads() -> None:
    cap = os.environ.get("FRACWAVE_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _cmd_run(args) -> int:
    from .config import ConfigError, parse_config
    from .runner import SolverFailure, run

    try:
        with open(args.config, "r", encoding="utf-8") as f:
            config = parse_config(f.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.out is not None:
        config.output_dir = args.out
    try:
        report = run(config)
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    print(f"run complete: {os.path.join(config.output_dir, 'report.json')}")
    if report.get("pretest"):
        print(f"  pretest: {report['pretest']['outcome']}, a* = {report['pretest']['a_star']}")
    if report.get("main"):
        main_part = report["main"]
        print(
            f"  {main_part['flavor']}: {main_part['outcome']}"
            + (
                f" at t = {main_part['onset_time']:.6g}"
                if main_part["onset_time"] is not None
                else ""
            )
        )
    return 0


def _cmd_mesh(args) -> int:
    from .mesh import generate_rect_mesh, write_mesh

    if args.nx < 1 or args.ny < 1:
        print("config error: nx and ny must be positive", file=sys.stderr)
        return 2
    mesh = generate_rect_mesh(args.nx, args.ny)
    with open(args.out, "w", encoding="ascii", newline="\n") as f:
        write_mesh(mesh, f)
    print(f"wrote {args.out}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
    return 0


def _cmd_audit(args) -> int:
    from .output import read_energies_csv
    from .stepper import audit_energy_balance

    try:
        records = read_energies_csv(args.energies)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if len(records) < 2:
        print("error: need at least two ledger rows to audit", file=sys.stderr)
        return 2
    audit = audit_energy_balance(records)
    print(f"steps:                    {len(records)}")
    print(f"normalization scale:      {audit.scale:.9e}")
    print(f"max |step residual|:      {audit.max_step_residual:.9e}")
    print(f"max |cumulative residual|: {audit.max_cumulative_residual:.9e}")
    return 0


def main(argv=None) -> int:
    _cap_threads()
    parser = argparse.ArgumentParser(prog="fracwave", description="dynamic phase-field fracture simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a simulation from a JSON config")
    p_run.add_argument("--config", required=True, help="path to JSON configuration")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.set_defaults(func=_cmd_run)

    p_mesh = sub.add_parser("mesh", help="emit a mesh file")
    p_mesh.add_argument("--nx", type=int, required=True)
    p_mesh.add_argument("--ny", type=int, required=True)
    p_mesh.add_argument("--out", required=True)
    p_mesh.set_defaults(func=_cmd_mesh)

    p_audit = sub.add_parser("audit", help="recompute residual statistics from a ledger CSV")
    p_audit.add_argument("--energies", required=True)
    p_audit.set_defaults(func=_cmd_audit)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration: JSON ingestion with strict keys and validated defaults.

All quantities are nondimensional. The defaults reproduce the reference
fault-rupture setup: E = 50, nu = 0.29, gamma_star = 0.5, rho = 5e-4,
alpha = 1e-4, tau = 2e-5, epsilon = 0.01 on the domain (-1/2,1/2) x (-1,1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .elasticity import MaterialParams
from .scenario import ScenarioConfig
from .stepper import SolverOptions


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class MeshSection:
    nx: int = 100
    ny: int = 200


@dataclass
class MaterialSection:
    young: float = 50.0
    poisson: float = 0.29
    rho: float = 5e-4
    gamma_star: float = 0.5
    epsilon: float = 0.01
    alpha: float = 1e-4
    plane_strain: bool = True


@dataclass
class SolverSection:
    tol: float = 1e-10
    max_iter: int | None = None


@dataclass
class FlagsSection:
    w_plus_mu_convention: str = "sigma-plus"  # or "single-mu"
    paper_literal_weakform: bool = False
    pwave_direction_sign: float = 1.0


@dataclass
class ScenarioSection:
    theta: float = math.pi / 4
    crack_halflength: float = 0.15
    compression_rate: float = 10.0
    hold_displacement: float = 0.240
    pwave_amplitude: float = 0.01
    pwave_width: float = 0.1
    pwave_center_offset: float = 0.5
    onset_z_threshold: float = 0.9
    onset_area_growth: float = 0.10
    onset_persistence: int = 5
    precompress: bool = True
    pretest_end_time: float = 0.035


@dataclass
class RunConfig:
    model_flavor: str = "standard"
    phase: str = "full"  # "pretest", "pwave", or "full"
    tau: float = 2e-5
    end_time: float = 5.2e-3
    snapshot_every: int = 20
    output_dir: str = "out"
    mesh: MeshSection = field(default_factory=MeshSection)
    material: MaterialSection = field(default_factory=MaterialSection)
    solver: SolverSection = field(default_factory=SolverSection)
    flags: FlagsSection = field(default_factory=FlagsSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)

    def material_params(self) -> MaterialParams:
        m = self.material
        return MaterialParams.from_engineering(
            young=m.young,
            poisson=m.poisson,
            rho=m.rho,
            gamma_star=m.gamma_star,
            epsilon=m.epsilon,
            alpha=m.alpha,
            plane_strain=m.plane_strain,
        )

    def scenario_config(self, end_time: float | None = None) -> ScenarioConfig:
        s = self.scenario
        return ScenarioConfig(
            theta=s.theta,
            crack_halflength=s.crack_halflength,
            compression_rate=s.compression_rate,
            hold_displacement=s.hold_displacement,
            pwave_amplitude=s.pwave_amplitude,
            pwave_width=s.pwave_width,
            pwave_center_offset=s.pwave_center_offset,
            pwave_direction_sign=self.flags.pwave_direction_sign,
            epsilon=self.material.epsilon,
            tau=self.tau,
            end_time=self.end_time if end_time is None else end_time,
            onset_z_threshold=s.onset_z_threshold,
            onset_area_growth=s.onset_area_growth,
            onset_persistence=s.onset_persistence,
            precompress=s.precompress,
        )

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.solver.tol, max_iter=self.solver.max_iter)

    def echo(self) -> dict:
        """Plain-dict form for the run report."""

        def section(obj):
            return {k: getattr(obj, k) for k in obj.__dataclass_fields__}

        return {
            "model_flavor": self.model_flavor,
            "phase": self.phase,
            "tau": self.tau,
            "end_time": self.end_time,
            "snapshot_every": self.snapshot_every,
            "output_dir": self.output_dir,
            "mesh": section(self.mesh),
            "material": section(self.material),
            "solver": section(self.solver),
            "flags": section(self.flags),
            "scenario": section(self.scenario),
        }


def _take(data: dict, key: str, default, check, context: str):
    if key not in data:
        return default
    value = data.pop(key)
    return check(f"{context}{key}", value)


def _positive_number(key: str, v):
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
        raise ConfigError(key, f"must be a positive number, got {v!r}")
    return float(v)


def _number(key: str, v):
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(key, f"must be a number, got {v!r}")
    return float(v)


def _positive_int(key: str, v):
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(key, f"must be a positive integer, got {v!r}")
    return v


def _boolean(key: str, v):
    if not isinstance(v, bool):
        raise ConfigError(key, f"must be a boolean, got {v!r}")
    return v


def _string(allowed=None):
    def check(key: str, v):
        if not isinstance(v, str):
            raise ConfigError(key, f"must be a string, got {v!r}")
        if allowed is not None and v not in allowed:
            raise ConfigError(key, f"must be one of {sorted(allowed)}, got {v!r}")
        return v

    return check


def _reject_unknown(data: dict, context: str):
    if data:
        key = sorted(data)[0]
        raise ConfigError(f"{context}{key}", "unknown key")


def parse_config(text: str) -> RunConfig:
    """Parse a JSON configuration document.

    Missing keys take the documented defaults; unknown keys are rejected;
    out-of-range values raise ConfigError naming the key.
    """
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("<document>", "top level must be a JSON object")

    cfg = RunConfig()
    cfg.model_flavor = _take(
        data, "model_flavor", cfg.model_flavor, _string({"standard", "unilateral"}), ""
    )
    cfg.phase = _take(data, "phase", cfg.phase, _string({"pretest", "pwave", "full"}), "")
    cfg.tau = _take(data, "tau", cfg.tau, _positive_number, "")
    cfg.end_time = _take(data, "end_time", cfg.end_time, _positive_number, "")
    cfg.snapshot_every = _take(data, "snapshot_every", cfg.snapshot_every, _positive_int, "")
    cfg.output_dir = _take(data, "output_dir", cfg.output_dir, _string(), "")
    if cfg.end_time < cfg.tau:
        raise ConfigError("end_time", f"must be at least tau = {cfg.tau}")

    mesh = data.pop("mesh", {})
    if not isinstance(mesh, dict):
        raise ConfigError("mesh", "must be an object")
    cfg.mesh.nx = _take(mesh, "nx", cfg.mesh.nx, _positive_int, "mesh.")
    cfg.mesh.ny = _take(mesh, "ny", cfg.mesh.ny, _positive_int, "mesh.")
    _reject_unknown(mesh, "mesh.")

    mat = data.pop("material", {})
    if not isinstance(mat, dict):
        raise ConfigError("material", "must be an object")
    cfg.material.young = _take(mat, "young", cfg.material.young, _positive_number, "material.")
    cfg.material.poisson = _take(mat, "poisson", cfg.material.poisson, _number, "material.")
    if not (-1.0 < cfg.material.poisson < 0.5):
        raise ConfigError("material.poisson", "must lie in (-1, 1/2)")
    for key in ("rho", "gamma_star", "epsilon", "alpha"):
        setattr(
            cfg.material,
            key,
            _take(mat, key, getattr(cfg.material, key), _positive_number, "material."),
        )
    cfg.material.plane_strain = _take(
        mat, "plane_strain", cfg.material.plane_strain, _boolean, "material."
    )
    _reject_unknown(mat, "material.")

    sol = data.pop("solver", {})
    if not isinstance(sol, dict):
        raise ConfigError("solver", "must be an object")
    cfg.solver.tol = _take(sol, "tol", cfg.solver.tol, _positive_number, "solver.")
    if "max_iter" in sol:
        cfg.solver.max_iter = _positive_int("solver.max_iter", sol.pop("max_iter"))
    _reject_unknown(sol, "solver.")

    flags = data.pop("flags", {})
    if not isinstance(flags, dict):
        raise ConfigError("flags", "must be an object")
    cfg.flags.w_plus_mu_convention = _take(
        flags,
        "w_plus_mu_convention",
        cfg.flags.w_plus_mu_convention,
        _string({"sigma-plus", "single-mu"}),
        "flags.",
    )
    cfg.flags.paper_literal_weakform = _take(
        flags, "paper_literal_weakform", cfg.flags.paper_literal_weakform, _boolean, "flags."
    )
    if "pwave_direction_sign" in flags:
        v = _number("flags.pwave_direction_sign", flags.pop("pwave_direction_sign"))
        if v not in (-1.0, 1.0):
            raise ConfigError("flags.pwave_direction_sign", "must be +1 or -1")
        cfg.flags.pwave_direction_sign = v
    _reject_unknown(flags, "flags.")

    sc = data.pop("scenario", {})
    if not isinstance(sc, dict):
        raise ConfigError("scenario", "must be an object")
    if "theta" in sc:
        theta = _number("scenario.theta", sc.pop("theta"))
        if not abs(theta) < math.pi / 2:
            raise ConfigError("scenario.theta", "must satisfy |theta| < pi/2")
        cfg.scenario.theta = theta
    for key in (
        "crack_halflength",
        "compression_rate",
        "hold_displacement",
        "pwave_amplitude",
        "pwave_width",
        "pretest_end_time",
    ):
        setattr(
            cfg.scenario,
            key,
            _take(sc, key, getattr(cfg.scenario, key), _positive_number, "scenario."),
        )
    cfg.scenario.pwave_center_offset = _take(
        sc, "pwave_center_offset", cfg.scenario.pwave_center_offset, _number, "scenario."
    )
    cfg.scenario.onset_z_threshold = _take(
        sc, "onset_z_threshold", cfg.scenario.onset_z_threshold, _positive_number, "scenario."
    )
    cfg.scenario.onset_area_growth = _take(
        sc, "onset_area_growth", cfg.scenario.onset_area_growth, _positive_number, "scenario."
    )
    cfg.scenario.onset_persistence = _take(
        sc, "onset_persistence", cfg.scenario.onset_persistence, _positive_int, "scenario."
    )
    cfg.scenario.precompress = _take(
        sc, "precompress", cfg.scenario.precompress, _boolean, "scenario."
    )
    _reject_unknown(sc, "scenario.")

    _reject_unknown(data, "")
    return cfg

"""Fault-rupture scenario: inclined initial crack, compression ramp, P-wave.

The experiment has two phases. Phase 1 ramps a vertical compression through
the top/bottom boundaries until the crack starts to propagate; the boundary
displacement magnitude just before that onset is the pretest result. Phase 2
holds the compression fixed, superposes a plane P-wave packet on the
compressed displacement field, restores the fresh initial crack, and lets
both model flavors run so their onset times and crack morphologies can be
compared.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .elasticity import MaterialParams
from .fem import NodalField, element_data, element_mean
from .linalg import CgError, PreconditionerError
from .mesh import TriMesh
from .stepper import (
    EnergyRecord,
    SimState,
    SolverOptions,
    TimeStepper,
)


class StepFailure(RuntimeError):
    """A linear solve broke down at a known step of a phase."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class ScenarioConfig:
    """Closed-form ingredients and experiment knobs.

    theta is the initial crack angle; the crack ridge runs through the
    origin along the direction (cos theta, -sin theta). The P-wave packet
    travels along +x2 for pwave_direction_sign = +1 and along -x2 for -1.
    """

    theta: float = math.pi / 4
    crack_halflength: float = 0.15
    compression_rate: float = 10.0
    hold_displacement: float = 0.240
    pwave_amplitude: float = 0.01
    pwave_width: float = 0.1
    pwave_center_offset: float = 0.5
    pwave_direction_sign: float = 1.0
    epsilon: float = 0.01
    tau: float = 2e-5
    end_time: float = 5.2e-3
    onset_z_threshold: float = 0.9
    onset_area_growth: float = 0.10
    onset_persistence: int = 5
    precompress: bool = True

    def __post_init__(self):
        if not abs(self.theta) < math.pi / 2:
            raise ValueError("crack angle must satisfy |theta| < pi/2")
        for name in (
            "crack_halflength",
            "compression_rate",
            "pwave_amplitude",
            "pwave_width",
            "epsilon",
            "tau",
            "end_time",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pwave_direction_sign not in (-1.0, 1.0, -1, 1):
            raise ValueError("pwave_direction_sign must be +1 or -1")
        if self.onset_persistence < 1:
            raise ValueError("onset_persistence must be at least 1")


_EXP_CLAMP = 500.0


def initial_crack(x, theta: float, epsilon: float, halflength: float = 0.15) -> float:
    """Damage profile of the inclined initial crack at a point.

    A Gaussian ridge of width ~epsilon across the crack, smoothly cut off
    at arclength +-halflength along it. Exponents are clamped so the value
    stays in [0, 1] for any input.
    """
    x1, x2 = float(x[0]), float(x[1])
    eta1 = x1 * math.sin(theta) + x2 * math.cos(theta)
    eta2 = x1 * math.cos(theta) - x2 * math.sin(theta)
    num = math.exp(-min((eta1 / epsilon) ** 2, _EXP_CLAMP))
    den = (
        1.0
        + math.exp(min((eta2 - halflength) / epsilon, _EXP_CLAMP))
        + math.exp(min(-(eta2 + halflength) / epsilon, _EXP_CLAMP))
    )
    return num / den


def initial_crack_field(mesh: TriMesh, cfg: ScenarioConfig) -> NodalField:
    """Nodal interpolation of the initial crack profile."""
    x1 = mesh.node_coords[:, 0]
    x2 = mesh.node_coords[:, 1]
    eta1 = x1 * math.sin(cfg.theta) + x2 * math.cos(cfg.theta)
    eta2 = x1 * math.cos(cfg.theta) - x2 * math.sin(cfg.theta)
    num = np.exp(-np.minimum((eta1 / cfg.epsilon) ** 2, _EXP_CLAMP))
    den = (
        1.0
        + np.exp(np.minimum((eta2 - cfg.crack_halflength) / cfg.epsilon, _EXP_CLAMP))
        + np.exp(np.minimum(-(eta2 + cfg.crack_halflength) / cfg.epsilon, _EXP_CLAMP))
    )
    return NodalField(num / den, mesh)


def compression_bc(x, t: float, rate: float = 10.0) -> tuple[float, float]:
    """Prescribed boundary displacement (0, -rate * x2 * t)."""
    return (0.0, -rate * float(x[1]) * t)


def pwave_field(x, t: float, m: MaterialParams, cfg: ScenarioConfig) -> tuple[float, float]:
    """Plane compressional wave packet displacement at a point and time."""
    s = cfg.pwave_direction_sign
    arg = (float(x[1]) - s * m.pwave_speed * t - cfg.pwave_center_offset) / cfg.pwave_width
    return (0.0, cfg.pwave_amplitude * math.exp(-min(arg * arg, _EXP_CLAMP)))


def pwave_displacement(mesh: TriMesh, t: float, m: MaterialParams, cfg: ScenarioConfig) -> np.ndarray:
    """Nodal (n, 2) P-wave displacement at time t."""
    x2 = mesh.node_coords[:, 1]
    s = cfg.pwave_direction_sign
    arg = (x2 - s * m.pwave_speed * t - cfg.pwave_center_offset) / cfg.pwave_width
    u = np.zeros((mesh.n_nodes, 2))
    u[:, 1] = cfg.pwave_amplitude * np.exp(-np.minimum(arg * arg, _EXP_CLAMP))
    return u


def compression_drive(mesh: TriMesh, rate: float) -> Callable[[float], np.ndarray]:
    """Full-dof boundary data for the compression ramp g = (0, -rate*x2*t)."""
    x2 = mesh.node_coords[:, 1]

    def g_of_t(t: float) -> np.ndarray:
        g = np.zeros((mesh.n_nodes, 2))
        g[:, 1] = -rate * x2 * t
        return g.ravel()

    return g_of_t


def held_compression_drive(mesh: TriMesh, a: float) -> Callable[[float], np.ndarray]:
    """Time-constant boundary data g = (0, -a * x2)."""
    x2 = mesh.node_coords[:, 1]
    g = np.zeros((mesh.n_nodes, 2))
    g[:, 1] = -a * x2
    g_flat = g.ravel()

    def g_of_t(_t: float) -> np.ndarray:
        return g_flat

    return g_of_t


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def damaged_area(mesh: TriMesh, z, threshold: float = 0.9) -> float:
    """Measure of the damaged region: lumped nodal area where z > threshold."""
    zv = z.values if isinstance(z, NodalField) else np.asarray(z)
    ed = element_data(mesh)
    return float(ed.lumped_node_area[zv > threshold].sum())


def detect_onset(
    areas: Sequence[float], growth: float = 0.10, persistence: int = 5
) -> int | None:
    """First sustained growth of the damaged-area series.

    Steps are numbered from 1 (the first entry is the baseline, step 1).
    Returns the first step k whose area exceeds the baseline by more than
    the growth fraction for `persistence` consecutive steps, or None.
    """
    if len(areas) == 0:
        raise ValueError("empty damage history")
    baseline = areas[0]
    limit = baseline * (1.0 + growth)
    run = 0
    for idx, a in enumerate(areas):
        if a > limit:
            run += 1
            if run >= persistence:
                return idx - persistence + 2  # 1-based first step of the run
        else:
            run = 0
    return None


def crack_orientation(
    z_final, z_initial, mesh: TriMesh, threshold: float = 0.9
) -> float | None:
    """Principal-axis angle of the newly damaged region, in (-pi/2, pi/2].

    The region is the set of elements whose mean damage crossed the
    threshold between the two fields; its area-weighted second-moment
    tensor's dominant eigenvector gives the propagation direction. Returns
    None when no new damage exists.
    """
    zf = z_final.values if isinstance(z_final, NodalField) else np.asarray(z_final)
    zi = z_initial.values if isinstance(z_initial, NodalField) else np.asarray(z_initial)
    ed = element_data(mesh)
    new = (element_mean(zf, ed) > threshold) & ~(element_mean(zi, ed) > threshold)
    if not new.any():
        return None
    w = ed.area[new]
    centroids = mesh.node_coords[mesh.triangles[new]].mean(axis=1)
    mean = (w[:, None] * centroids).sum(axis=0) / w.sum()
    d = centroids - mean
    ixx = float((w * d[:, 0] ** 2).sum())
    iyy = float((w * d[:, 1] ** 2).sum())
    ixy = float((w * d[:, 0] * d[:, 1]).sum())
    angle = 0.5 * math.atan2(2.0 * ixy, ixx - iyy)
    if angle <= -math.pi / 2:
        angle += math.pi
    elif angle > math.pi / 2:
        angle -= math.pi
    return angle


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


@dataclass
class PhaseResult:
    records: list[EnergyRecord]
    areas: list[float]
    onset_step: int | None  # 1-based index into records
    onset_time: float | None
    final_state: SimState
    trailing_states: list[SimState] = field(default_factory=list)


def run_phase(
    stepper: TimeStepper,
    state: SimState,
    g_of_t: Callable[[float], np.ndarray],
    n_steps: int,
    evolve_damage: bool = True,
    z_threshold: float = 0.9,
    growth: float = 0.10,
    persistence: int = 5,
    on_step: Callable[[int, SimState, EnergyRecord], None] | None = None,
    stop_on_onset: bool = False,
    keep_states: int = 0,
) -> PhaseResult:
    """Advance n_steps, recording energies and the damaged-area series.

    With stop_on_onset the loop ends as soon as sustained damage growth is
    detected; keep_states > 0 retains that many trailing states so the
    caller can recover the state just before onset.
    """
    records: list[EnergyRecord] = []
    areas: list[float] = []
    trail: deque[SimState] = deque(maxlen=max(keep_states, 1))
    onset: int | None = None
    for i in range(n_steps):
        try:
            state, record = stepper.advance(state, g_of_t, evolve_damage=evolve_damage)
        except (CgError, PreconditionerError) as exc:
            raise StepFailure(len(records) + 1, exc) from exc
        records.append(record)
        areas.append(damaged_area(stepper.mesh, state.z, z_threshold))
        if keep_states:
            trail.append(state)
        if on_step is not None:
            on_step(len(records), state, record)
        if stop_on_onset and len(areas) >= persistence:
            onset = detect_onset(areas, growth=growth, persistence=persistence)
            if onset is not None:
                break
    if onset is None:
        onset = detect_onset(areas, growth=growth, persistence=persistence)
    return PhaseResult(
        records=records,
        areas=areas,
        onset_step=onset,
        onset_time=None if onset is None else records[onset - 1].t,
        final_state=state,
        trailing_states=list(trail) if keep_states else [],
    )


@dataclass
class PretestResult:
    a_star: float | None  # boundary displacement at the step before onset
    onset_step: int | None
    onset_time: float | None
    records: list[EnergyRecord]
    areas: list[float]
    state_before_onset: SimState | None


def run_compression_pretest(
    mesh: TriMesh,
    m: MaterialParams,
    cfg: ScenarioConfig,
    solver: SolverOptions = SolverOptions(),
) -> PretestResult:
    """Ramp compression with live damage until the crack starts propagating.

    Returns the boundary displacement magnitude a = rate * t at the step
    before sustained damage growth, or a_star = None if nothing happens
    before cfg.end_time.
    """
    stepper = TimeStepper(mesh, m, flavor="standard", tau=cfg.tau, solver=solver)
    z0 = initial_crack_field(mesh, cfg)
    zeros = np.zeros((mesh.n_nodes, 2))
    state = stepper.init_state(zeros, zeros, z0)
    n_steps = int(round(cfg.end_time / cfg.tau))
    keep = cfg.onset_persistence + 2
    result = run_phase(
        stepper,
        state,
        compression_drive(mesh, cfg.compression_rate),
        n_steps,
        z_threshold=cfg.onset_z_threshold,
        growth=cfg.onset_area_growth,
        persistence=cfg.onset_persistence,
        stop_on_onset=True,
        keep_states=keep,
    )
    if result.onset_step is None:
        return PretestResult(None, None, None, result.records, result.areas, None)
    onset = result.onset_step
    t_before = result.records[onset - 2].t if onset >= 2 else 0.0
    state_before = None
    for s in result.trailing_states:
        if s.step_index == onset - 1:
            state_before = s
            break
    return PretestResult(
        a_star=cfg.compression_rate * t_before,
        onset_step=onset,
        onset_time=result.records[onset - 1].t,
        records=result.records,
        areas=result.areas,
        state_before_onset=state_before,
    )


def compress_statically(
    mesh: TriMesh,
    m: MaterialParams,
    cfg: ScenarioConfig,
    a: float,
    solver: SolverOptions = SolverOptions(),
) -> SimState:
    """Dynamically ramp to boundary displacement a with damage frozen.

    The crack is present in the stiffness (through the frozen z0) but does
    not evolve, giving a clean compressed displacement field to hand to the
    wave phase.
    """
    stepper = TimeStepper(mesh, m, flavor="standard", tau=cfg.tau, solver=solver)
    z0 = initial_crack_field(mesh, cfg)
    zeros = np.zeros((mesh.n_nodes, 2))
    state = stepper.init_state(zeros, zeros, z0)
    n_steps = int(round(a / (cfg.compression_rate * cfg.tau)))
    result = run_phase(
        stepper,
        state,
        compression_drive(mesh, cfg.compression_rate),
        n_steps,
        evolve_damage=False,
    )
    return result.final_state


def build_pwave_phase_initial_state(
    mesh: TriMesh,
    m: MaterialParams,
    cfg: ScenarioConfig,
    stepper: TimeStepper,
    precompression: np.ndarray | None = None,
) -> SimState:
    """Initial state for the held-compression wave phase.

    Displacement starts as the P-wave packet at times 0 and tau (optionally
    superposed on a precompressed field), damage restarts from the fresh
    initial crack. The phase's boundary data is the constant
    (0, -hold_displacement * x2), applied from the first displacement solve
    onward.
    """
    pw0 = pwave_displacement(mesh, 0.0, m, cfg)
    pw1 = pwave_displacement(mesh, cfg.tau, m, cfg)
    base = np.zeros((mesh.n_nodes, 2)) if precompression is None else precompression
    u0 = base + pw0
    v0 = (pw1 - pw0) / cfg.tau
    z0 = initial_crack_field(mesh, cfg)
    return stepper.init_state(u0, v0, z0)


@dataclass
class ExperimentResult:
    flavor: str
    held_displacement: float
    phase: PhaseResult
    onset_step: int | None
    onset_time: float | None
    orientation: float | None
    z_initial: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]


def run_pwave_experiment(
    mesh: TriMesh,
    m: MaterialParams,
    cfg: ScenarioConfig,
    flavor: str,
    solver: SolverOptions = SolverOptions(),
    precompressed: SimState | None = None,
    on_step: Callable[[int, SimState, EnergyRecord], None] | None = None,
) -> ExperimentResult:
    """Held-compression P-wave phase for one model flavor.

    When cfg.precompress is set and no precompressed state is supplied, the
    compressed displacement field is produced by a damage-frozen ramp to
    cfg.hold_displacement first.
    """
    pre_u = None
    if precompressed is not None:
        pre_u = precompressed.u_curr.values
    elif cfg.precompress:
        pre_u = compress_statically(mesh, m, cfg, cfg.hold_displacement, solver).u_curr.values

    stepper = TimeStepper(mesh, m, flavor=flavor, tau=cfg.tau, solver=solver)
    state = build_pwave_phase_initial_state(mesh, m, cfg, stepper, precompression=pre_u)
    z_initial = state.z.values.copy()
    n_steps = int(round(cfg.end_time / cfg.tau))
    phase = run_phase(
        stepper,
        state,
        held_compression_drive(mesh, cfg.hold_displacement),
        n_steps,
        z_threshold=cfg.onset_z_threshold,
        growth=cfg.onset_area_growth,
        persistence=cfg.onset_persistence,
        on_step=on_step,
    )
    orientation = crack_orientation(
        phase.final_state.z, NodalField(z_initial, mesh), mesh, cfg.onset_z_threshold
    )
    return ExperimentResult(
        flavor=flavor,
        held_displacement=cfg.hold_displacement,
        phase=phase,
        onset_step=phase.onset_step,
        onset_time=phase.onset_time,
        orientation=orientation,
        z_initial=z_initial,
    )

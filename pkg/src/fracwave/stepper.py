"""Linear implicit time stepping for the coupled wave/damage system.

Each step solves two SPD linear systems. The displacement solve lags the
damage field (and, for the unilateral flavor, the per-element expansion
indicator) by one step, which is what keeps the step linear. The damage
solve is followed by the nodal projection z^k = max(z~, z^{k-1}), enforcing
irreversibility exactly.

Step indexing: the state produced by `init_state` carries u at steps 0 and 1
built from the initial data. The first `advance` performs the damage-only
step k = 1; every later `advance` performs a full step (displacement solve,
indicator update, damage solve) and increments the step index.

The per-step energy ledger records the damaged elastic, kinetic, and
surface energies, the damage dissipation increment, and the boundary work
increment evaluated from discrete reaction forces, so that the balance
residual can be audited against the model's dissipation structure.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .elasticity import MaterialParams
from .fem import (
    CellField,
    NodalField,
    DirichletEliminator,
    assemble_damage_system,
    assemble_mass,
    dirichlet_dofs,
    element_data,
    element_mean,
    element_strains,
    laplacian_blocks,
    mass_blocks,
    reaction_traction_work,
    scalar_mass_blocks,
    stiffness_blocks_iso,
    stiffness_blocks_split,
)
from .linalg import CsrMatrix, cg_solve
from .mesh import TriMesh

FLAVOR_STANDARD = "standard"
FLAVOR_UNILATERAL = "unilateral"

_Z_UPPER_SLACK = 1e-9


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int | None = None  # None: 20 * n


@dataclass(frozen=True)
class EnergyRecord:
    """Energies after a step plus that step's ledger increments."""

    t: float
    elastic: float
    kinetic: float
    surface: float
    dissipation_increment: float
    injected_work_increment: float
    balance_residual: float

    @property
    def total(self) -> float:
        return self.elastic + self.kinetic + self.surface


@dataclass(frozen=True)
class SimState:
    """Solution snapshot after completing step `step_index`."""

    u_curr: NodalField
    u_prev: NodalField
    z: NodalField
    step_index: int
    t: float
    flavor: str
    xi: CellField | None
    first_damage_done: bool

    def velocity(self, tau: float) -> np.ndarray:
        return (self.u_curr.values - self.u_prev.values) / tau


@dataclass(frozen=True)
class EnergyAudit:
    """Discrete check of d/dt E = -alpha * ||dz/dt||^2 + boundary work."""

    residuals: np.ndarray  # per-step: dE + dissipation - injected work
    cumulative: np.ndarray  # running sums of the residuals
    scale: float  # max(total energy, |cumulative work|) over the run
    max_step_residual: float  # max |residual| / scale
    max_cumulative_residual: float  # max |cumulative| / scale


class TimeStepper:
    """Driver for one mesh/material/flavor combination.

    Assembled operators that do not change between steps (mass matrix,
    sparsity patterns, Dirichlet elimination maps, element blocks) are
    precomputed here; per-step assembly only rescales element blocks.
    """

    def __init__(
        self,
        mesh: TriMesh,
        material: MaterialParams,
        flavor: str = FLAVOR_STANDARD,
        tau: float = 2e-5,
        solver: SolverOptions = SolverOptions(),
        w_plus_mu_convention: str = "sigma-plus",
        paper_literal_weakform: bool = False,
    ):
        if flavor not in (FLAVOR_STANDARD, FLAVOR_UNILATERAL):
            raise ValueError(f"unknown model flavor {flavor!r}")
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.mesh = mesh
        self.m = material
        self.flavor = flavor
        self.tau = tau
        self.solver = solver
        self.w_plus_mu_convention = w_plus_mu_convention
        self.paper_literal_weakform = paper_literal_weakform

        self.ed = element_data(mesh)
        self._k_iso = stiffness_blocks_iso(self.ed, material)
        self._k_div, self._k_eps = stiffness_blocks_split(self.ed)
        self._mass_values = self.ed.vec_pattern.assemble(
            mass_blocks(self.ed, material.rho)
        ).values
        self.mass = CsrMatrix(
            2 * mesh.n_nodes,
            self.ed.vec_pattern.row_offsets,
            self.ed.vec_pattern.col_indices,
            self._mass_values,
        )
        self._scalar_mass = self.ed.scal_pattern.assemble(scalar_mass_blocks(self.ed))
        self._laplacian = self.ed.scal_pattern.assemble(laplacian_blocks(self.ed))
        self.dirichlet_dofs = dirichlet_dofs(mesh)
        self._eliminator = DirichletEliminator(self.ed.vec_pattern, self.dirichlet_dofs)

    # -- state construction -------------------------------------------------

    def init_state(self, u0, v0, z0) -> SimState:
        """Start a run from displacement u0, velocity v0, damage z0.

        Sets u at step 0 to u0 and u at step 1 to u0 + tau * v0.
        """
        u0 = self._as_vector_field(u0)
        v0 = self._as_vector_field(v0)
        z0 = self._as_scalar_field(z0)
        if (z0.values < 0).any() or (z0.values > 1).any():
            raise ValueError("initial damage must lie in [0, 1]")
        u1 = NodalField(u0.values + self.tau * v0.values, self.mesh)
        xi = self._indicator(u0.flat()) if self.flavor == FLAVOR_UNILATERAL else None
        return SimState(
            u_curr=u1,
            u_prev=u0,
            z=z0,
            step_index=1,
            t=self.tau,
            flavor=self.flavor,
            xi=xi,
            first_damage_done=False,
        )

    def _as_vector_field(self, u) -> NodalField:
        if isinstance(u, NodalField):
            if u.mesh is not self.mesh:
                raise ValueError("field belongs to a different mesh")
            if not u.is_vector:
                raise ValueError("expected a vector field")
            return u
        arr = np.asarray(u, dtype=np.float64)
        return NodalField(arr.reshape(self.mesh.n_nodes, 2), self.mesh)

    def _as_scalar_field(self, z) -> NodalField:
        if isinstance(z, NodalField):
            if z.mesh is not self.mesh:
                raise ValueError("field belongs to a different mesh")
            return z
        return NodalField(np.asarray(z, dtype=np.float64), self.mesh)

    # -- pieces of a step ----------------------------------------------------

    def _indicator(self, u_flat: np.ndarray) -> CellField:
        eng = element_strains(self.ed, u_flat)
        div = eng[:, 0] + eng[:, 1]
        return CellField((div >= 0.0).astype(np.float64), self.mesh)

    def _stiffness(self, z_nodal: np.ndarray, xi: CellField | None) -> CsrMatrix:
        g = (1.0 - element_mean(z_nodal, self.ed)) ** 2
        if self.flavor == FLAVOR_STANDARD:
            blocks = g[:, None, None] * self._k_iso
        else:
            xiv = xi.values
            eta = g * (self.m.lam_star * xiv - self.m.mu) + self.m.lam_star * (1.0 - xiv)
            eps_coeff = (
                np.ones_like(g) if self.paper_literal_weakform else 2.0 * self.m.mu * g
            )
            blocks = eta[:, None, None] * self._k_div + eps_coeff[:, None, None] * self._k_eps
        return self.ed.vec_pattern.assemble(blocks)

    def _driving_energy(self, u_flat: np.ndarray, xi_lag: CellField | None) -> np.ndarray:
        """Per-element damage driving energy from the strain of u_flat.

        Standard: the full density W. Unilateral: the expansion/shear
        density evaluated with the lagged indicator xi_lag.
        """
        eng = element_strains(self.ed, u_flat)
        exx, eyy, gxy = eng[:, 0], eng[:, 1], eng[:, 2]
        div = exx + eyy
        if self.flavor == FLAVOR_STANDARD:
            return self.m.lam * div**2 + 2.0 * self.m.mu * (exx**2 + eyy**2 + 0.5 * gxy**2)
        dev_sq = 0.5 * (exx - eyy) ** 2 + 0.5 * gxy**2
        mu_coeff = self.m.mu if self.w_plus_mu_convention == "single-mu" else 2.0 * self.m.mu
        return self.m.lam_star * xi_lag.values * div**2 + mu_coeff * dev_sq

    def step_displacement(self, state: SimState, g_values: np.ndarray) -> NodalField:
        """Solve for the next displacement with prescribed boundary data.

        g_values holds the prescribed components per Dirichlet dof, in the
        order of `dirichlet_dofs(mesh)`.
        """
        u_new, _ = self._solve_displacement(state, g_values)
        return NodalField(u_new.reshape(-1, 2), self.mesh)

    def _solve_displacement(
        self, state: SimState, g_values: np.ndarray
    ) -> tuple[np.ndarray, CsrMatrix]:
        K = self._stiffness(state.z.values, state.xi)
        sys_matrix = K.with_values(K.values + self._mass_values / self.tau**2)
        u_tilde = 2.0 * state.u_curr.flat() - state.u_prev.flat()
        rhs = self.mass.matvec(u_tilde) / self.tau**2
        system = self._eliminator.eliminate(sys_matrix, rhs, np.asarray(g_values))
        x = cg_solve(
            system.matrix,
            system.rhs,
            tol=self.solver.tol,
            max_iter=self.solver.max_iter,
            x0=u_tilde[system.free_dofs],
        )
        return system.reconstruct(x), K

    def step_damage(self, state: SimState, u_k) -> NodalField:
        """Damage update driven by the strain of u_k (irreversible)."""
        u_flat = u_k.flat() if isinstance(u_k, NodalField) else np.asarray(u_k).ravel()
        w = self._driving_energy(u_flat, state.xi)
        z_new = self._solve_damage(w, state.z.values)
        return NodalField(z_new, self.mesh)

    def _solve_damage(self, w_drive: np.ndarray, z_prev: np.ndarray) -> np.ndarray:
        A, rhs = assemble_damage_system(
            self.mesh, w_drive, z_prev, self.m, self.tau
        )
        z_tilde = cg_solve(
            A, rhs, tol=self.solver.tol, max_iter=self.solver.max_iter, x0=z_prev
        )
        z_new = np.maximum(z_tilde, z_prev)
        if (z_new < -_Z_UPPER_SLACK).any() or (z_new > 1.0 + _Z_UPPER_SLACK).any():
            raise RuntimeError(
                f"damage left [0, 1] beyond tolerance: min {z_new.min()!r}, max {z_new.max()!r}"
            )
        return z_new

    # -- full step -----------------------------------------------------------

    def advance(
        self,
        state: SimState,
        g_of_t: Callable[[float], np.ndarray],
        evolve_damage: bool = True,
    ) -> tuple[SimState, EnergyRecord]:
        """Execute one step and return the new state with its ledger record.

        g_of_t(t) must return the full-length prescribed dof vector at time
        t (only Dirichlet dofs are read). The first call on a fresh state
        performs the damage-only step at k = 1; subsequent calls perform the
        full displacement/indicator/damage update at k+1.
        """
        el0, ki0, su0 = self._energy_components(state)
        work_inc = 0.0

        if not state.first_damage_done:
            if evolve_damage:
                w = self._driving_energy(state.u_curr.flat(), state.xi)
                z_new = self._solve_damage(w, state.z.values)
            else:
                z_new = state.z.values
            xi_new = (
                self._indicator(state.u_curr.flat())
                if self.flavor == FLAVOR_UNILATERAL
                else None
            )
            new_state = replace(
                state,
                z=NodalField(z_new, self.mesh),
                xi=xi_new,
                first_damage_done=True,
            )
        else:
            t_new = state.t + self.tau
            g_now = np.asarray(g_of_t(t_new), dtype=np.float64).ravel()
            g_before = np.asarray(g_of_t(state.t), dtype=np.float64).ravel()
            ddofs = self.dirichlet_dofs
            u_new, K = self._solve_displacement(state, g_now[ddofs])

            g_dot = (g_now - g_before) / self.tau
            work_inc = self.tau * reaction_traction_work(
                self.mesh,
                K,
                self.mass,
                u_new,
                state.u_curr.flat(),
                state.u_prev.flat(),
                g_dot,
                self.tau,
            )

            xi_new = (
                self._indicator(u_new) if self.flavor == FLAVOR_UNILATERAL else None
            )
            if evolve_damage:
                w = self._driving_energy(u_new, state.xi)  # lagged indicator
                z_new = self._solve_damage(w, state.z.values)
            else:
                z_new = state.z.values
            new_state = SimState(
                u_curr=NodalField(u_new.reshape(-1, 2), self.mesh),
                u_prev=state.u_curr,
                z=NodalField(z_new, self.mesh),
                step_index=state.step_index + 1,
                t=t_new,
                flavor=self.flavor,
                xi=xi_new,
                first_damage_done=True,
            )

        el1, ki1, su1 = self._energy_components(new_state)
        dz = new_state.z.values - state.z.values
        diss_inc = self.m.alpha / self.tau * float(dz @ self._scalar_mass.matvec(dz))
        residual = (el1 + ki1 + su1) - (el0 + ki0 + su0) + diss_inc - work_inc
        record = EnergyRecord(
            t=new_state.t,
            elastic=el1,
            kinetic=ki1,
            surface=su1,
            dissipation_increment=diss_inc,
            injected_work_increment=work_inc,
            balance_residual=residual,
        )
        return new_state, record

    # -- energies ------------------------------------------------------------

    def _energy_components(self, state: SimState) -> tuple[float, float, float]:
        u_flat = state.u_curr.flat()
        z = state.z.values
        eng = element_strains(self.ed, u_flat)
        exx, eyy, gxy = eng[:, 0], eng[:, 1], eng[:, 2]
        div = exx + eyy
        g = (1.0 - element_mean(z, self.ed)) ** 2

        if self.flavor == FLAVOR_STANDARD:
            w = self.m.lam * div**2 + 2.0 * self.m.mu * (exx**2 + eyy**2 + 0.5 * gxy**2)
            elastic = 0.5 * float((g * w) @ self.ed.area)
        else:
            dev_sq = 0.5 * (exx - eyy) ** 2 + 0.5 * gxy**2
            xi_true = (div >= 0.0).astype(np.float64)
            mu_coeff = (
                self.m.mu if self.w_plus_mu_convention == "single-mu" else 2.0 * self.m.mu
            )
            w_plus = self.m.lam_star * xi_true * div**2 + mu_coeff * dev_sq
            div_neg = np.maximum(-div, 0.0)
            elastic = 0.5 * float(
                (g * w_plus + self.m.lam_star * div_neg**2) @ self.ed.area
            )

        v = (u_flat - state.u_prev.flat()) / self.tau
        kinetic = 0.5 * float(v @ self.mass.matvec(v))
        surface = 0.5 * self.m.gamma_star * (
            self.m.epsilon * float(z @ self._laplacian.matvec(z))
            + float(z @ self._scalar_mass.matvec(z)) / self.m.epsilon
        )
        return elastic, kinetic, surface

    def compute_energies(self, state: SimState) -> EnergyRecord:
        """Energies of a state; ledger increments are zero (no step taken)."""
        el, ki, su = self._energy_components(state)
        return EnergyRecord(
            t=state.t,
            elastic=el,
            kinetic=ki,
            surface=su,
            dissipation_increment=0.0,
            injected_work_increment=0.0,
            balance_residual=0.0,
        )


def audit_energy_balance(records: Sequence[EnergyRecord]) -> EnergyAudit:
    """Recompute balance residuals across a record series.

    residual_k = [E(t_k) - E(t_{k-1})] + dissipation_k - injected work_k.
    Residuals are normalized by the larger of the peak total energy and the
    peak cumulative injected work. The per-step maximum and the maximum of
    the running sum (the integrated balance defect up to each time) are both
    reported; for a stable scheme the latter shrinks linearly with tau.
    """
    if len(records) < 2:
        raise ValueError("need at least two records to audit")
    totals = np.array([r.total for r in records])
    diss = np.array([r.dissipation_increment for r in records])
    work = np.array([r.injected_work_increment for r in records])
    residuals = np.empty(len(records))
    residuals[0] = records[0].balance_residual
    residuals[1:] = np.diff(totals) + diss[1:] - work[1:]
    cumulative = np.cumsum(residuals)
    scale = max(totals.max(), np.abs(np.cumsum(work)).max(), 1e-300)
    return EnergyAudit(
        residuals=residuals,
        cumulative=cumulative,
        scale=scale,
        max_step_residual=float(np.abs(residuals).max() / scale),
        max_cumulative_residual=float(np.abs(cumulative).max() / scale),
    )

"""P1 finite element assembly on triangle meshes.

Displacements are vector P1 fields stored interleaved ([u0x, u0y, u1x, ...]);
damage is scalar P1. Gradients of P1 interpolants are constant per element,
so strain-derived quantities (W, the expansion indicator, the damage factor)
live naturally on elements as piecewise constants.

Quadrature choices:
  * stiffness and mass integrands are polynomial and integrated exactly,
    with the damage factor frozen per element at (1 - mean nodal z)^2;
  * the reaction/mass terms of the damage system use the vertex rule
    (row-sum lumping), which keeps the system an M-matrix on non-obtuse
    meshes and therefore keeps the damage update inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .elasticity import MaterialParams, SymTensor2, eta_coefficient
from .linalg import CsrMatrix, SparsityPattern
from .mesh import TriMesh


@dataclass
class NodalField:
    """Scalar (n,) or 2-vector (n, 2) values attached to mesh nodes."""

    values: np.ndarray
    mesh: TriMesh

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.mesh.n_nodes
        if self.values.shape not in ((n,), (n, 2)):
            raise ValueError(
                f"field shape {self.values.shape} does not match mesh with {n} nodes"
            )

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 2

    def flat(self) -> np.ndarray:
        """Interleaved dof vector for vector fields, identity for scalars."""
        return self.values.ravel()


@dataclass
class CellField:
    """One value per triangle."""

    values: np.ndarray
    mesh: TriMesh

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.mesh.n_triangles,):
            raise ValueError(
                f"cell field length {self.values.shape} does not match "
                f"{self.mesh.n_triangles} triangles"
            )


def _scalar_values(z, mesh: TriMesh) -> np.ndarray:
    vals = z.values if isinstance(z, NodalField) else np.asarray(z, dtype=np.float64)
    if vals.shape != (mesh.n_nodes,):
        raise ValueError("expected one scalar per node")
    return vals


def _cell_values(f, mesh: TriMesh) -> np.ndarray:
    vals = f.values if isinstance(f, CellField) else np.asarray(f)
    if vals.shape != (mesh.n_triangles,):
        raise ValueError("expected one value per triangle")
    return vals


# ---------------------------------------------------------------------------
# Per-element geometry, cached per mesh instance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElementData:
    """Precomputed P1 geometry and sparsity patterns for one mesh."""

    mesh: TriMesh
    area: np.ndarray  # (m,)
    grads: np.ndarray  # (m, 3, 2) gradient of each nodal basis function
    B: np.ndarray  # (m, 3, 6) strain-displacement (exx, eyy, gxy) rows
    div_coeff: np.ndarray  # (m, 6) row of B giving div u
    dof_map: np.ndarray  # (m, 6) interleaved global dofs
    vec_pattern: SparsityPattern
    scal_pattern: SparsityPattern
    lumped_node_area: np.ndarray  # (n,) vertex-rule nodal areas

    @classmethod
    def from_mesh(cls, mesh: TriMesh) -> "ElementData":
        tri = mesh.triangles
        p = mesh.node_coords[tri]  # (m, 3, 2)
        # b_i = y_j - y_k, c_i = x_k - x_j with (i, j, k) cyclic
        y = p[:, :, 1]
        x = p[:, :, 0]
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        two_a = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
        area = 0.5 * two_a
        if (area <= 0).any():
            raise ValueError("degenerate or inverted triangle in mesh")
        grads = np.stack([b, c], axis=2) / two_a[:, None, None]

        m = tri.shape[0]
        B = np.zeros((m, 3, 6))
        B[:, 0, 0::2] = grads[:, :, 0]
        B[:, 1, 1::2] = grads[:, :, 1]
        B[:, 2, 0::2] = grads[:, :, 1]
        B[:, 2, 1::2] = grads[:, :, 0]
        div_coeff = np.zeros((m, 6))
        div_coeff[:, 0::2] = grads[:, :, 0]
        div_coeff[:, 1::2] = grads[:, :, 1]

        dof_map = np.empty((m, 6), dtype=np.int64)
        dof_map[:, 0::2] = 2 * tri
        dof_map[:, 1::2] = 2 * tri + 1

        n = mesh.n_nodes
        vec_rows = np.broadcast_to(dof_map[:, :, None], (m, 6, 6)).ravel()
        vec_cols = np.broadcast_to(dof_map[:, None, :], (m, 6, 6)).ravel()
        scal_rows = np.broadcast_to(tri[:, :, None], (m, 3, 3)).ravel()
        scal_cols = np.broadcast_to(tri[:, None, :], (m, 3, 3)).ravel()

        lumped = np.bincount(
            tri.ravel(), weights=np.repeat(area / 3.0, 3), minlength=n
        )

        return cls(
            mesh=mesh,
            area=area,
            grads=grads,
            B=B,
            div_coeff=div_coeff,
            dof_map=dof_map,
            vec_pattern=SparsityPattern.build(2 * n, vec_rows, vec_cols),
            scal_pattern=SparsityPattern.build(n, scal_rows, scal_cols),
            lumped_node_area=lumped,
        )


@lru_cache(maxsize=8)
def element_data(mesh: TriMesh) -> ElementData:
    """Geometry cache keyed on mesh identity (meshes are immutable)."""
    return ElementData.from_mesh(mesh)


# ---------------------------------------------------------------------------
# Element blocks
# ---------------------------------------------------------------------------

_MASS_TEMPLATE = np.array(
    [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]
) / 12.0

# e[u]:e[v] in engineering notation (gxy carries the factor 2)
_EPS_METRIC = np.diag([1.0, 1.0, 0.5])


def _symmetrize(blocks: np.ndarray) -> np.ndarray:
    return 0.5 * (blocks + np.swapaxes(blocks, -1, -2))


def stiffness_blocks_iso(ed: ElementData, m: MaterialParams) -> np.ndarray:
    """Undamaged isotropic element stiffness A * B^T D B, (m, 6, 6)."""
    lam, mu = m.lam, m.mu
    D = np.array(
        [[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]]
    )
    K = np.einsum("eki,kl,elj->eij", ed.B, D, ed.B, optimize=True)
    return _symmetrize(K * ed.area[:, None, None])


def stiffness_blocks_split(ed: ElementData) -> tuple[np.ndarray, np.ndarray]:
    """Material-independent blocks (K_div, K_eps) with

    u^T K_div u = area * (div u)^2,  u^T K_eps u = area * e[u]:e[u].
    """
    K_div = np.einsum("ei,ej->eij", ed.div_coeff, ed.div_coeff)
    K_eps = np.einsum("eki,kl,elj->eij", ed.B, _EPS_METRIC, ed.B, optimize=True)
    a = ed.area[:, None, None]
    return K_div * a, _symmetrize(K_eps * a)


def mass_blocks(ed: ElementData, rho: float) -> np.ndarray:
    """Consistent vector mass blocks (m, 6, 6), 2x2-identity per node pair."""
    scal = rho * ed.area[:, None, None] * _MASS_TEMPLATE
    blocks = np.zeros((ed.area.shape[0], 6, 6))
    blocks[:, 0::2, 0::2] = scal
    blocks[:, 1::2, 1::2] = scal
    return blocks


def scalar_mass_blocks(ed: ElementData) -> np.ndarray:
    """Consistent scalar mass blocks (m, 3, 3) with unit density."""
    return ed.area[:, None, None] * _MASS_TEMPLATE


def laplacian_blocks(ed: ElementData) -> np.ndarray:
    """Scalar gradient-stiffness blocks A * G^T G, (m, 3, 3)."""
    K = np.einsum("eik,ejk->eij", ed.grads, ed.grads)
    return K * ed.area[:, None, None]


def element_mean(z: np.ndarray, ed: ElementData) -> np.ndarray:
    """Per-element average of a nodal scalar field."""
    return z[ed.mesh.triangles].mean(axis=1)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def assemble_mass(mesh: TriMesh, rho: float) -> CsrMatrix:
    """Consistent P1 vector mass matrix with density rho."""
    ed = element_data(mesh)
    return ed.vec_pattern.assemble(mass_blocks(ed, rho))


def assemble_damaged_stiffness(mesh: TriMesh, z, m: MaterialParams) -> CsrMatrix:
    """Stiffness of the damaged isotropic stress: per-element factor
    (1 - mean(z))^2 on the undamaged blocks."""
    ed = element_data(mesh)
    zv = _scalar_values(z, mesh)
    factor = (1.0 - element_mean(zv, ed)) ** 2
    return ed.vec_pattern.assemble(factor[:, None, None] * stiffness_blocks_iso(ed, m))


def assemble_unilateral_stiffness(
    mesh: TriMesh,
    z,
    xi,
    m: MaterialParams,
    literal_weakform: bool = False,
) -> CsrMatrix:
    """Stiffness of the expansion/shear-damaged stress with lagged indicator.

    Assembles eta(z, xi) (div u)(div v) + 2 mu (1-z)^2 e[u]:e[v] per element.
    With literal_weakform=True the second coefficient is 1 instead of
    2 mu (1-z)^2 (a comparison variant that does not reproduce the split
    stress; see the unilateral stress reconstruction identity).
    """
    ed = element_data(mesh)
    zv = element_mean(_scalar_values(z, mesh), ed)
    xiv = _cell_values(xi, mesh)
    g = (1.0 - zv) ** 2
    eta = g * (m.lam_star * xiv - m.mu) + m.lam_star * (1.0 - xiv)
    K_div, K_eps = stiffness_blocks_split(ed)
    eps_coeff = np.ones_like(g) if literal_weakform else 2.0 * m.mu * g
    blocks = eta[:, None, None] * K_div + eps_coeff[:, None, None] * K_eps
    return ed.vec_pattern.assemble(blocks)


def assemble_damage_system(
    mesh: TriMesh,
    w_drive,
    z_prev,
    m: MaterialParams,
    tau: float,
    gamma: np.ndarray | float | None = None,
) -> tuple[CsrMatrix, np.ndarray]:
    """Linear implicit system for the (unconstrained) damage update.

    Returns (A, rhs) with A z_tilde = rhs discretizing

        (alpha/tau + gamma/eps + W) z~  - eps div(gamma grad z~)
            = alpha/tau z_prev + W,

    natural (Neumann) boundary everywhere. Reaction/mass terms use the
    vertex rule; the gradient term is exact. Off-diagonals are <= 0 on
    non-obtuse meshes, so the solution obeys a discrete maximum principle.

    gamma may be a per-element array overriding the scalar fracture energy.
    """
    ed = element_data(mesh)
    w = np.asarray(_cell_values(w_drive, mesh), dtype=np.float64)
    if (w < 0).any():
        raise ValueError("damage driving energy must be nonnegative")
    zp = _scalar_values(z_prev, mesh)
    if tau <= 0:
        raise ValueError("tau must be positive")
    gam = np.full(ed.area.shape, m.gamma_star) if gamma is None else np.broadcast_to(
        np.asarray(gamma, dtype=np.float64), ed.area.shape
    )

    A = ed.scal_pattern.assemble(
        (m.epsilon * gam)[:, None, None] * laplacian_blocks(ed)
    )
    coeff = m.alpha / tau + gam / m.epsilon + w
    n = mesh.n_nodes
    tri = mesh.triangles
    lump_diag = np.bincount(
        tri.ravel(), weights=np.repeat(ed.area / 3.0 * coeff, 3), minlength=n
    )
    values = A.values.copy()
    values[ed.scal_pattern.diag_positions] += lump_diag
    A = A.with_values(values)

    rhs = (m.alpha / tau) * zp * ed.lumped_node_area + np.bincount(
        tri.ravel(), weights=np.repeat(ed.area / 3.0 * w, 3), minlength=n
    )
    return A, rhs


# ---------------------------------------------------------------------------
# Dirichlet elimination
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstrainedSystem:
    """Symmetric elimination of prescribed dofs from an SPD system."""

    matrix: CsrMatrix  # restricted to free dofs
    rhs: np.ndarray  # on free dofs, boundary columns moved over
    free_dofs: np.ndarray
    constrained_dofs: np.ndarray
    constrained_values: np.ndarray
    n_total: int

    def reconstruct(self, x_free: np.ndarray) -> np.ndarray:
        """Scatter a free-dof solution back to the full vector; prescribed
        values are satisfied exactly."""
        full = np.empty(self.n_total)
        full[self.free_dofs] = x_free
        full[self.constrained_dofs] = self.constrained_values
        return full


class DirichletEliminator:
    """Reusable elimination maps for a fixed sparsity pattern.

    Building the free-free and free-constrained gather indices once makes
    the per-step elimination a pure value gather, preserving determinism.
    """

    def __init__(self, pattern: SparsityPattern | CsrMatrix, constrained_dofs: np.ndarray):
        n = pattern.n
        row_offsets = pattern.row_offsets
        col_indices = pattern.col_indices
        constrained = np.asarray(constrained_dofs, dtype=np.int64)
        is_con = np.zeros(n, dtype=bool)
        is_con[constrained] = True
        free = np.flatnonzero(~is_con)
        rank = np.full(n, -1, dtype=np.int64)
        rank[free] = np.arange(free.size)
        crank = np.full(n, -1, dtype=np.int64)
        crank[constrained] = np.arange(constrained.size)

        entry_row = np.repeat(np.arange(n), np.diff(row_offsets))
        row_free = ~is_con[entry_row]
        col_free = ~is_con[col_indices]

        self.sel_ff = np.flatnonzero(row_free & col_free)
        ff_rows = rank[entry_row[self.sel_ff]]
        self.ff_cols = rank[col_indices[self.sel_ff]]
        offsets = np.zeros(free.size + 1, dtype=np.int64)
        np.add.at(offsets[1:], ff_rows, 1)
        self.ff_offsets = np.cumsum(offsets)

        self.sel_fc = np.flatnonzero(row_free & ~col_free)
        self.fc_rows = rank[entry_row[self.sel_fc]]
        self.fc_cols = crank[col_indices[self.sel_fc]]

        self.n = n
        self.free = free
        self.constrained = constrained

    def eliminate(self, K: CsrMatrix, rhs: np.ndarray, values: np.ndarray) -> ConstrainedSystem:
        if K.n != self.n:
            raise ValueError("matrix size does not match eliminator")
        g = np.asarray(values, dtype=np.float64)
        if g.shape != self.constrained.shape:
            raise ValueError("one prescribed value per constrained dof required")
        A_ff = CsrMatrix(
            self.free.size, self.ff_offsets, self.ff_cols, K.values[self.sel_ff]
        )
        rhs_f = rhs[self.free].astype(np.float64, copy=True)
        if self.sel_fc.size:
            rhs_f -= np.bincount(
                self.fc_rows,
                weights=K.values[self.sel_fc] * g[self.fc_cols],
                minlength=self.free.size,
            )
        return ConstrainedSystem(
            matrix=A_ff,
            rhs=rhs_f,
            free_dofs=self.free,
            constrained_dofs=self.constrained,
            constrained_values=g,
            n_total=self.n,
        )


def apply_dirichlet(
    K: CsrMatrix, rhs: np.ndarray, constrained_dofs, values
) -> ConstrainedSystem:
    """One-shot symmetric elimination of prescribed dofs."""
    constrained = np.asarray(constrained_dofs, dtype=np.int64)
    elim = DirichletEliminator(K, constrained)
    return elim.eliminate(K, np.asarray(rhs, dtype=np.float64), values)


def dirichlet_dofs(mesh: TriMesh) -> np.ndarray:
    """Interleaved displacement dofs of all Dirichlet-tagged nodes."""
    nodes = mesh.dirichlet_nodes()
    dofs = np.empty(2 * nodes.size, dtype=np.int64)
    dofs[0::2] = 2 * nodes
    dofs[1::2] = 2 * nodes + 1
    return dofs


# ---------------------------------------------------------------------------
# Derived fields and boundary work
# ---------------------------------------------------------------------------


def element_strains(ed: ElementData, u_flat: np.ndarray) -> np.ndarray:
    """Engineering strain (exx, eyy, gxy) per element, exact for P1."""
    u_e = u_flat[ed.dof_map]  # (m, 6)
    return np.einsum("eij,ej->ei", ed.B, u_e)


def element_strain_fields(mesh: TriMesh, u) -> tuple[CellField, list[SymTensor2]]:
    """Per-element divergence and strain tensors of a vector nodal field."""
    ed = element_data(mesh)
    u_flat = u.flat() if isinstance(u, NodalField) else np.asarray(u, dtype=np.float64).ravel()
    if u_flat.shape != (2 * mesh.n_nodes,):
        raise ValueError("expected a 2-vector per node")
    eng = element_strains(ed, u_flat)
    div = CellField(eng[:, 0] + eng[:, 1], mesh)
    tensors = [SymTensor2(e[0], e[1], 0.5 * e[2]) for e in eng]
    return div, tensors


def reaction_traction_work(
    mesh: TriMesh,
    K_full: CsrMatrix,
    M: CsrMatrix,
    u_k: np.ndarray,
    u_km1: np.ndarray,
    u_km2: np.ndarray,
    g_dot: np.ndarray,
    tau: float,
) -> float:
    """Boundary work rate from discrete reactions.

    r = K u^k + (M / tau^2)(u^k - 2 u^{k-1} + u^{k-2}) restricted to the
    Dirichlet dofs is the variationally consistent reaction force; the
    returned rate is r . g_dot. g_dot is a full-length dof vector whose
    values matter only on Dirichlet dofs.
    """
    ddofs = dirichlet_dofs(mesh)
    if ddofs.size == 0:
        return 0.0
    r = K_full.matvec(u_k) + M.matvec(u_k - 2.0 * u_km1 + u_km2) / tau**2
    return float(r[ddofs] @ np.asarray(g_dot, dtype=np.float64).ravel()[ddofs])

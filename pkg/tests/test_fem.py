"""Assembly operators: mass, stiffness flavors, damage system, constraints."""

import numpy as np
import pytest

from fracwave.elasticity import MaterialParams
from fracwave.fem import (
    CellField,
    NodalField,
    apply_dirichlet,
    assemble_damage_system,
    assemble_damaged_stiffness,
    assemble_mass,
    assemble_unilateral_stiffness,
    dirichlet_dofs,
    element_data,
    element_strain_fields,
    reaction_traction_work,
)
from fracwave.linalg import CooBuilder, cg_solve, coo_to_csr
from fracwave.mesh import TriMesh, generate_rect_mesh


@pytest.fixture(scope="module")
def mat():
    return MaterialParams.from_engineering(50.0, 0.29, 5e-4, 0.5, 0.01, 1e-4)


@pytest.fixture(scope="module")
def mesh():
    return generate_rect_mesh(4, 6)


def single_triangle_mesh():
    return TriMesh(
        node_coords=np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.5]]),
        triangles=np.array([[0, 1, 2]]),
        boundary_edges=np.empty((0, 2), dtype=np.int64),
        boundary_tags=(),
    )


def affine_displacement(mesh, e, const=(0.0, 0.0)):
    """Nodal values of u = E x + c for a symmetric strain E."""
    x = mesh.node_coords
    u = np.empty_like(x)
    u[:, 0] = e.xx * x[:, 0] + e.xy * x[:, 1] + const[0]
    u[:, 1] = e.xy * x[:, 0] + e.yy * x[:, 1] + const[1]
    return u


class SymStrain:
    def __init__(self, xx, yy, xy):
        self.xx, self.yy, self.xy = xx, yy, xy


class TestMass:
    def test_single_triangle_block(self):
        mesh = single_triangle_mesh()
        rho = 3.0
        area = 1.5
        M = assemble_mass(mesh, rho).to_dense()
        block = rho * area / 12.0 * np.array([[2.0, 1, 1], [1, 2, 1], [1, 1, 2]])
        np.testing.assert_allclose(M[0::2, 0::2], block, rtol=1e-14)
        np.testing.assert_allclose(M[1::2, 1::2], block, rtol=1e-14)
        np.testing.assert_allclose(M[0::2, 1::2], 0.0, atol=0.0)

    def test_total_mass(self, mesh, mat):
        M = assemble_mass(mesh, mat.rho)
        assert M.values.sum() == pytest.approx(2.0 * 2.0 * mat.rho, rel=1e-12)

    def test_zero_density(self, mesh):
        assert (assemble_mass(mesh, 0.0).values == 0.0).all()

    def test_exact_symmetry(self, mesh, mat):
        M = assemble_mass(mesh, mat.rho).to_dense()
        np.testing.assert_array_equal(M, M.T)


class TestDamagedStiffness:
    def test_fully_damaged_is_zero(self, mesh, mat):
        z = np.ones(mesh.n_nodes)
        K = assemble_damaged_stiffness(mesh, z, mat)
        np.testing.assert_allclose(K.values, 0.0, atol=1e-14)

    @pytest.mark.parametrize("zval", [0.0, 0.4])
    def test_patch_energy(self, mesh, mat, zval):
        e0 = SymStrain(0.3, -0.2, 0.15)
        u = affine_displacement(mesh, e0).ravel()
        z = np.full(mesh.n_nodes, zval)
        K = assemble_damaged_stiffness(mesh, z, mat)
        w = mat.lam * (e0.xx + e0.yy) ** 2 + 2 * mat.mu * (
            e0.xx**2 + e0.yy**2 + 2 * e0.xy**2
        )
        expected = (1 - zval) ** 2 * w * 2.0  # |domain| = 2
        assert u @ K.matvec(u) == pytest.approx(expected, rel=1e-10)

    def test_translation_in_kernel(self, mesh, mat):
        z = np.zeros(mesh.n_nodes)
        K = assemble_damaged_stiffness(mesh, z, mat)
        u = np.tile([0.7, -0.3], mesh.n_nodes)
        assert np.abs(K.matvec(u)).max() <= 1e-12 * np.abs(K.values).max()

    def test_exact_symmetry(self, mesh, mat):
        rng = np.random.default_rng(3)
        z = rng.uniform(0, 1, mesh.n_nodes)
        K = assemble_damaged_stiffness(mesh, z, mat).to_dense()
        np.testing.assert_array_equal(K, K.T)


class TestUnilateralStiffness:
    def test_undamaged_matches_isotropic(self, mesh, mat):
        z = np.zeros(mesh.n_nodes)
        for xi_val in (0.0, 1.0):
            xi = CellField(np.full(mesh.n_triangles, xi_val), mesh)
            Ku = assemble_unilateral_stiffness(mesh, z, xi, mat).to_dense()
            Kd = assemble_damaged_stiffness(mesh, z, mat).to_dense()
            np.testing.assert_allclose(Ku, Kd, atol=1e-12 * np.abs(Kd).max())

    def test_patch_energy_expansion(self, mesh, mat):
        # uniform damage, expansion indicator on: energy through the
        # eta-reconstruction identity equals (1-z)^2 W_plus density
        zval = 0.35
        e0 = SymStrain(0.4, 0.1, 0.2)  # div > 0
        u = affine_displacement(mesh, e0).ravel()
        z = np.full(mesh.n_nodes, zval)
        xi = CellField(np.ones(mesh.n_triangles), mesh)
        K = assemble_unilateral_stiffness(mesh, z, xi, mat)
        div = e0.xx + e0.yy
        dev_sq = 0.5 * (e0.xx - e0.yy) ** 2 + 2 * e0.xy**2
        w_plus = mat.lam_star * div**2 + 2 * mat.mu * dev_sq
        expected = (1 - zval) ** 2 * w_plus * 2.0
        assert u @ K.matvec(u) == pytest.approx(expected, rel=1e-10)

    def test_patch_energy_compression(self, mesh, mat):
        # xi = 0: the volumetric part must stay undamaged
        zval = 0.5
        e0 = SymStrain(-0.3, -0.1, 0.05)  # div < 0
        u = affine_displacement(mesh, e0).ravel()
        z = np.full(mesh.n_nodes, zval)
        xi = CellField(np.zeros(mesh.n_triangles), mesh)
        K = assemble_unilateral_stiffness(mesh, z, xi, mat)
        g = (1 - zval) ** 2
        div = e0.xx + e0.yy
        norm_sq = e0.xx**2 + e0.yy**2 + 2 * e0.xy**2
        eta = g * (-mat.mu) + mat.lam_star
        expected = (eta * div**2 + 2 * mat.mu * g * norm_sq) * 2.0
        assert u @ K.matvec(u) == pytest.approx(expected, rel=1e-10)

    def test_translation_in_kernel(self, mesh, mat):
        rng = np.random.default_rng(8)
        z = rng.uniform(0, 0.9, mesh.n_nodes)
        xi = CellField(rng.integers(0, 2, mesh.n_triangles).astype(float), mesh)
        K = assemble_unilateral_stiffness(mesh, z, xi, mat)
        u = np.tile([1.0, 2.0], mesh.n_nodes)
        assert np.abs(K.matvec(u)).max() <= 1e-12 * np.abs(K.values).max()

    def test_literal_weakform_variant_differs(self, mesh, mat):
        z = np.full(mesh.n_nodes, 0.3)
        xi = CellField(np.ones(mesh.n_triangles), mesh)
        K = assemble_unilateral_stiffness(mesh, z, xi, mat)
        K_lit = assemble_unilateral_stiffness(mesh, z, xi, mat, literal_weakform=True)
        assert np.abs(K.values - K_lit.values).max() > 1e-8


class TestDamageSystem:
    def test_constant_decay(self, mesh, mat):
        tau = 2e-5
        c = 0.6
        w = np.zeros(mesh.n_triangles)
        A, rhs = assemble_damage_system(mesh, w, np.full(mesh.n_nodes, c), mat, tau)
        z = cg_solve(A, rhs, tol=1e-13)
        expected = (mat.alpha / tau) * c / (mat.alpha / tau + mat.gamma_star / mat.epsilon)
        np.testing.assert_allclose(z, expected, rtol=1e-10)

    def test_zero_stays_zero(self, mesh, mat):
        A, rhs = assemble_damage_system(
            mesh, np.zeros(mesh.n_triangles), np.zeros(mesh.n_nodes), mat, 1e-4
        )
        z = cg_solve(A, rhs, tol=1e-13)
        np.testing.assert_allclose(z, 0.0, atol=1e-15)

    def test_constant_drive(self, mesh, mat):
        tau = 2e-5
        w0 = 123.0
        A, rhs = assemble_damage_system(
            mesh, np.full(mesh.n_triangles, w0), np.zeros(mesh.n_nodes), mat, tau
        )
        z = cg_solve(A, rhs, tol=1e-13)
        expected = w0 / (mat.alpha / tau + mat.gamma_star / mat.epsilon + w0)
        np.testing.assert_allclose(z, expected, rtol=1e-10)
        assert (z < 1.0).all()

    def test_huge_drive_saturates(self, mesh, mat):
        tau = 2e-5
        A, rhs = assemble_damage_system(
            mesh, np.full(mesh.n_triangles, 1e6), np.zeros(mesh.n_nodes), mat, tau
        )
        z = cg_solve(A, rhs, tol=1e-13)
        assert np.abs(1.0 - z.max()) < 1e-4
        assert (z <= 1.0).all()

    def test_negative_drive_rejected(self, mesh, mat):
        w = np.zeros(mesh.n_triangles)
        w[3] = -1e-9
        with pytest.raises(ValueError, match="nonnegative"):
            assemble_damage_system(mesh, w, np.zeros(mesh.n_nodes), mat, 1e-4)

    def test_m_matrix_offdiagonals(self, mesh, mat):
        rng = np.random.default_rng(1)
        w = rng.uniform(0, 500.0, mesh.n_triangles)
        A, _ = assemble_damage_system(mesh, w, np.zeros(mesh.n_nodes), mat, 2e-5)
        dense = A.to_dense()
        off = dense - np.diag(np.diag(dense))
        assert off.max() <= 1e-14
        assert (np.diag(dense) > 0).all()

    def test_exact_symmetry(self, mesh, mat):
        A, _ = assemble_damage_system(
            mesh, np.full(mesh.n_triangles, 7.0), np.zeros(mesh.n_nodes), mat, 1e-4
        )
        dense = A.to_dense()
        np.testing.assert_array_equal(dense, dense.T)


class TestApplyDirichlet:
    def test_three_node_chain(self):
        builder = CooBuilder(3)
        for i, j, v in [(0, 0, 2.0), (1, 1, 2.0), (2, 2, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 2, -1.0), (2, 1, -1.0)]:
            builder.add(i, j, v)
        K = coo_to_csr(builder)
        rhs = np.array([0.0, 4.0, 0.0])
        system = apply_dirichlet(K, rhs, np.array([0, 2]), np.array([1.0, 3.0]))
        x = cg_solve(system.matrix, system.rhs, tol=1e-14)
        full = system.reconstruct(x)
        # hand elimination: 2 u1 = 4 + 1 + 3
        np.testing.assert_allclose(full, [1.0, 4.0, 3.0], rtol=1e-12)

    def test_zero_values_keep_rhs(self, mesh, mat):
        K = assemble_damaged_stiffness(mesh, np.zeros(mesh.n_nodes), mat)
        rhs = np.arange(2.0 * mesh.n_nodes)
        ddofs = dirichlet_dofs(mesh)
        system = apply_dirichlet(K, rhs, ddofs, np.zeros(ddofs.size))
        np.testing.assert_array_equal(system.rhs, rhs[system.free_dofs])

    def test_all_constrained(self):
        builder = CooBuilder(2)
        builder.add(0, 0, 1.0)
        builder.add(1, 1, 1.0)
        K = coo_to_csr(builder)
        system = apply_dirichlet(K, np.zeros(2), np.array([0, 1]), np.array([5.0, -2.0]))
        assert system.matrix.n == 0
        full = system.reconstruct(np.empty(0))
        np.testing.assert_array_equal(full, [5.0, -2.0])

    def test_constraints_exact(self, mesh, mat):
        K = assemble_damaged_stiffness(mesh, np.zeros(mesh.n_nodes), mat)
        M = assemble_mass(mesh, mat.rho)
        sys_K = K.with_values(K.values + M.values)  # SPD
        ddofs = dirichlet_dofs(mesh)
        g = np.linspace(-1, 1, ddofs.size)
        system = apply_dirichlet(sys_K, np.zeros(2 * mesh.n_nodes), ddofs, g)
        x = cg_solve(system.matrix, system.rhs, tol=1e-12)
        full = system.reconstruct(x)
        np.testing.assert_array_equal(full[ddofs], g)


class TestStrainFields:
    def test_linear_x1(self, mesh):
        u = np.zeros((mesh.n_nodes, 2))
        u[:, 0] = mesh.node_coords[:, 0]
        div, tensors = element_strain_fields(mesh, u)
        np.testing.assert_allclose(div.values, 1.0, rtol=1e-12)
        assert all(abs(t.xy) < 1e-13 for t in tensors)

    def test_rigid_rotation(self, mesh):
        omega = 0.3
        u = np.zeros((mesh.n_nodes, 2))
        u[:, 0] = -omega * mesh.node_coords[:, 1]
        u[:, 1] = omega * mesh.node_coords[:, 0]
        _, tensors = element_strain_fields(mesh, u)
        assert all(t.norm() < 1e-13 for t in tensors)

    def test_simple_shear(self, mesh):
        u = np.zeros((mesh.n_nodes, 2))
        u[:, 0] = mesh.node_coords[:, 1]
        div, tensors = element_strain_fields(mesh, u)
        np.testing.assert_allclose(div.values, 0.0, atol=1e-13)
        assert all(abs(t.xy - 0.5) < 1e-13 for t in tensors)


class TestReactionWork:
    def test_static_boundary(self, mesh, mat):
        K = assemble_damaged_stiffness(mesh, np.zeros(mesh.n_nodes), mat)
        M = assemble_mass(mesh, mat.rho)
        u = np.random.default_rng(0).normal(size=2 * mesh.n_nodes)
        rate = reaction_traction_work(mesh, K, M, u, u, u, np.zeros(2 * mesh.n_nodes), 1e-5)
        assert rate == 0.0

    def test_zero_history(self, mesh, mat):
        K = assemble_damaged_stiffness(mesh, np.zeros(mesh.n_nodes), mat)
        M = assemble_mass(mesh, mat.rho)
        zeros = np.zeros(2 * mesh.n_nodes)
        gdot = np.ones(2 * mesh.n_nodes)
        assert reaction_traction_work(mesh, K, M, zeros, zeros, zeros, gdot, 1e-5) == 0.0

    def test_uniaxial_stretch_oracle(self, mesh, mat):
        # equilibrium patch u = (0, b x2): top/bottom tractions are
        # sigma_22 = (lam + 2 mu) b; with g_dot = (0, c x2) the rate is
        # sigma_22 * c * (top length + bottom length) = 2 c sigma_22
        b, c = 0.01, 3.0
        u = np.zeros((mesh.n_nodes, 2))
        u[:, 1] = b * mesh.node_coords[:, 1]
        u = u.ravel()
        gdot = np.zeros((mesh.n_nodes, 2))
        gdot[:, 1] = c * mesh.node_coords[:, 1]
        K = assemble_damaged_stiffness(mesh, np.zeros(mesh.n_nodes), mat)
        M = assemble_mass(mesh, mat.rho)
        rate = reaction_traction_work(mesh, K, M, u, u, u, gdot.ravel(), 1e-5)
        sigma22 = (mat.lam + 2 * mat.mu) * b
        assert rate == pytest.approx(2.0 * c * sigma22, rel=0.02)

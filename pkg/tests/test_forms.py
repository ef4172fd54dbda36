import numpy as np
import pytest
from scipy import io as scipy_io

from mce.forms import (
    ConfigurationError,
    ProblemCoefficients,
    assemble_brinkman,
    assemble_elasticity,
    assemble_nitsche_brinkman_tangential,
    assemble_nitsche_elasticity,
    assemble_nitsche_slip,
    boundary_normal_norm,
    quadrature_rule,
)
from mce.mesh import generate_unit_square_mesh, subdivide
from mce.solve import solve
from mce.space import build_space, fortin_interpolate


def sym_defect(A):
    d = abs(A - A.T)
    return d.max() / max(abs(A).max(), 1e-300)


@pytest.fixture(scope="module")
def sub3():
    return subdivide(generate_unit_square_mesh(3))


@pytest.fixture(scope="module")
def free3(sub3):
    return build_space(sub3, "free")


class TestElasticity:
    def test_translation_zero_energy(self, free3):
        coeffs = ProblemCoefficients(mu=1.0, lam=2.0)
        system = assemble_elasticity(free3, coeffs)
        v = fortin_interpolate((1.0, 2.0), free3)
        energy = v @ (system.matrix @ v)
        scale = abs(system.matrix).max() * (v @ v)
        assert abs(energy) < 1e-12 * scale

    def test_rotation_zero_energy(self, free3):
        coeffs = ProblemCoefficients(mu=1.0, lam=2.0)
        system = assemble_elasticity(free3, coeffs)
        v = fortin_interpolate(
            lambda p: np.column_stack([-p[:, 1], p[:, 0]]), free3
        )
        energy = v @ (system.matrix @ v)
        scale = abs(system.matrix).max() * (v @ v)
        assert abs(energy) < 1e-12 * scale

    def test_symmetry(self, free3):
        coeffs = ProblemCoefficients(mu=3.0, lam=17.0)
        system = assemble_elasticity(free3, coeffs)
        assert sym_defect(system.matrix) < 1e-12

    def test_invalid_coefficients(self, free3):
        with pytest.raises(ConfigurationError):
            assemble_elasticity(free3, ProblemCoefficients(mu=1.0, lam=None))
        with pytest.raises(ConfigurationError):
            assemble_elasticity(free3, ProblemCoefficients(mu=0.0, lam=1.0))


class TestBrinkman:
    def test_zero_data_zero_solution(self):
        sub = subdivide(generate_unit_square_mesh(1))
        space = build_space(sub, "dirichlet")
        coeffs = ProblemCoefficients(mu=1.0, sigma=0.0)
        system = assemble_brinkman(space, coeffs)
        report = solve(system)
        u, p, _ = system.expand(report.solution)
        assert np.abs(u).max() < 1e-12
        assert np.abs(p).max() < 1e-12

    def test_symmetry(self, free3):
        coeffs = ProblemCoefficients(mu=2.0, sigma=0.5)
        system = assemble_brinkman(free3, coeffs)
        assert sym_defect(system.matrix) < 1e-12

    def test_coupling_row_is_divergence(self, sub3, free3):
        coeffs = ProblemCoefficients(mu=1.0, sigma=0.0)
        system = assemble_brinkman(free3, coeffs)
        v = fortin_interpolate(lambda p: p, free3)  # div = 2
        usl = system.blocks["velocity"]
        psl = system.blocks["pressure"]
        brow = system.matrix[psl, usl] @ v
        areas = free3.tables.areas
        np.testing.assert_allclose(-brow, 2.0 * areas, rtol=1e-12)

    def test_pressure_column_sums_to_zero_on_constrained_space(self, sub3):
        space = build_space(sub3, "dirichlet")
        coeffs = ProblemCoefficients(mu=1.0, sigma=0.0)
        system = assemble_brinkman(space, coeffs)
        rng = np.random.default_rng(4)
        usl = system.blocks["velocity"]
        psl = system.blocks["pressure"]
        B = system.matrix[psl, usl]
        for _ in range(5):
            xv = rng.standard_normal(B.shape[1])
            total = np.sum(B @ xv)  # c * total flux with zero trace
            assert abs(total) < 1e-12 * max(1.0, np.abs(B @ xv).max())

    def test_velocity_block_psd(self, free3):
        coeffs = ProblemCoefficients(mu=1.5, sigma=0.7)
        system = assemble_brinkman(free3, coeffs)
        usl = system.blocks["velocity"]
        A = system.matrix[usl, usl]
        scale = abs(A).max()
        rng = np.random.default_rng(8)
        for _ in range(50):
            v = rng.standard_normal(A.shape[0])
            assert v @ (A @ v) >= -1e-10 * scale * (v @ v)

    def test_mu_zero_with_dirichlet_rejected(self, sub3):
        space = build_space(sub3, "dirichlet")
        coeffs = ProblemCoefficients(mu=0.0, sigma=1.0)
        with pytest.raises(ConfigurationError, match="normal-only"):
            assemble_brinkman(space, coeffs)

    def test_mu_sigma_both_zero_rejected(self, free3):
        with pytest.raises(ConfigurationError):
            assemble_brinkman(free3, ProblemCoefficients(mu=0.0, sigma=0.0))

    def test_galerkin_orthogonality(self, sub3):
        space = build_space(sub3, "dirichlet")
        coeffs = ProblemCoefficients(
            mu=1.0, sigma=0.0,
            f=lambda p: np.column_stack([np.sin(p[:, 1]), p[:, 0] ** 2]),
        )
        system = assemble_brinkman(space, coeffs)
        report = solve(system)
        r = system.rhs - system.matrix @ report.solution
        rng = np.random.default_rng(12)
        scale = abs(system.matrix).max() * np.linalg.norm(report.solution)
        for _ in range(20):
            y = rng.standard_normal(len(r))
            assert abs(y @ r) < 1e-9 * scale * np.linalg.norm(y)

    def test_local_conservation(self, sub3):
        from mce.space import macro_divergence, project_p0

        g = lambda p: p[:, 0] - 0.5  # zero mean on the unit square
        space = build_space(sub3, "dirichlet")
        coeffs = ProblemCoefficients(mu=1.0, sigma=0.0, g=g)
        system = assemble_brinkman(space, coeffs)
        u, _, m = system.expand(solve(system).solution)
        div = macro_divergence(space, u)
        pg = project_p0(g, sub3)
        scale = max(1.0, np.abs(pg).max(), np.abs(div).max())
        assert np.abs(div - pg).max() < 1e-9 * scale
        assert abs(m) < 1e-9


class TestNitscheElasticity:
    def test_symmetry(self, free3):
        coeffs = ProblemCoefficients(mu=1.0, lam=100.0, gamma=10.0)
        system = assemble_nitsche_elasticity(
            free3, coeffs, dirichlet_tags={"left", "bottom", "right", "top"}
        )
        assert sym_defect(system.matrix) < 1e-12

    def test_gamma_scaling_linear(self, free3):
        tags = {"left", "bottom", "right", "top"}
        mats = []
        for gamma in (10.0, 20.0, 30.0):
            coeffs = ProblemCoefficients(mu=1.0, lam=5.0, gamma=gamma)
            mats.append(
                assemble_nitsche_elasticity(free3, coeffs, tags).matrix
            )
        d1 = (mats[1] - mats[0]).toarray()
        d2 = (mats[2] - mats[1]).toarray()
        np.testing.assert_allclose(d1, d2, rtol=1e-10, atol=1e-12)
        assert abs(d1).max() > 0

    def test_empty_dirichlet_warns(self, free3):
        coeffs = ProblemCoefficients(mu=1.0, lam=5.0)
        with pytest.warns(UserWarning):
            assemble_nitsche_elasticity(free3, coeffs, set())


class TestNitscheBrinkmanTangential:
    def test_mu_zero_equals_plain(self):
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "normal")
        coeffs = ProblemCoefficients(mu=0.0, sigma=1.0)
        plain = assemble_brinkman(space, coeffs)
        nit = assemble_nitsche_brinkman_tangential(space, coeffs)
        assert (plain.matrix != nit.matrix).nnz == 0
        np.testing.assert_allclose(plain.rhs, nit.rhs)

    def test_symmetric(self):
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "normal")
        coeffs = ProblemCoefficients(mu=0.3, sigma=1.0, gamma=12.0)
        system = assemble_nitsche_brinkman_tangential(space, coeffs)
        assert sym_defect(system.matrix) < 1e-12

    def test_penalty_confined_to_boundary_triangles(self):
        sub = subdivide(generate_unit_square_mesh(3))
        space = build_space(sub, "normal")
        coeffs = ProblemCoefficients(mu=1.0, sigma=0.0, gamma=10.0)
        plain = assemble_brinkman(space, coeffs)
        nit = assemble_nitsche_brinkman_tangential(space, coeffs)
        diff = (nit.matrix - plain.matrix).tocoo()
        mesh = sub.mesh
        # free velocity dofs that belong only to interior entities
        interior_mask = np.zeros(nit.size, dtype=bool)
        C = space.constraint.tocsc()
        boundary_vertices = set(mesh.edges[mesh.boundary_edges].ravel())
        full_interior = np.ones(space.n_velocity, dtype=bool)
        for v in boundary_vertices:
            full_interior[2 * v : 2 * v + 2] = False
        full_interior[2 * mesh.num_vertices + mesh.boundary_edges] = False
        for j in range(C.shape[1]):
            rowset = C.indices[C.indptr[j] : C.indptr[j + 1]]
            interior_mask[j] = bool(np.all(full_interior[rowset]))
        for r, c, v in zip(diff.row, diff.col, diff.data):
            if abs(v) > 1e-14:
                assert not (interior_mask[r] and interior_mask[c])


class TestNitscheSlip:
    def make(self, gamma=10.0, n=3):
        sub = subdivide(generate_unit_square_mesh(n))
        space = build_space(sub, "free")
        coeffs = ProblemCoefficients(
            mu=1.0, sigma=0.0, gamma=gamma,
            f=lambda p: np.column_stack([p[:, 1] ** 2, np.zeros(len(p))]),
        )
        return space, assemble_nitsche_slip(space, coeffs)

    def test_not_symmetric_and_confined(self):
        space, system = self.make()
        A = system.matrix
        asym = (A - A.T).tocoo()
        assert abs(asym.data).max() > 1e-8  # genuinely non-symmetric
        usl, psl = system.blocks["velocity"], system.blocks["pressure"]
        for r, c, v in zip(asym.row, asym.col, asym.data):
            if abs(v) < 1e-12:
                continue
            in_up = usl.start <= r < usl.stop and psl.start <= c < psl.stop
            in_pu = psl.start <= r < psl.stop and usl.start <= c < usl.stop
            assert in_up or in_pu

    def test_penalty_drives_normal_trace_down(self):
        norms = []
        for gamma in (10.0, 100.0, 1000.0):
            space, system = self.make(gamma=gamma)
            u, _, _ = system.expand(solve(system).solution)
            norms.append(boundary_normal_norm(space, u))
        assert norms[0] > norms[1] > norms[2]

    def test_pressure_coupling_is_boundary_flux(self):
        # the normal-normal stress is mu dn(u).n - p, so the extra pressure
        # column (relative to the plain saddle form) pairs a test field v
        # with int_boundary (v.n) p; for v = (x, y) and p = 1 that boundary
        # flux is 2 |Omega| = 2
        sub = subdivide(generate_unit_square_mesh(3))
        space = build_space(sub, "free")
        coeffs = ProblemCoefficients(mu=1.0, sigma=0.0, gamma=10.0)
        plain = assemble_brinkman(space, coeffs, pressure_multiplier=True)
        slip = assemble_nitsche_slip(space, coeffs, pressure_multiplier=True)
        usl, psl = slip.blocks["velocity"], slip.blocks["pressure"]
        extra = (slip.matrix - plain.matrix)[usl, psl]
        v = fortin_interpolate(lambda p: p, space)
        ones = np.ones(extra.shape[1])
        assert v @ (extra @ ones) == pytest.approx(2.0, rel=1e-12)


class TestQuadratureContract:
    def test_reexport(self):
        pts, wts = quadrature_rule(2)
        assert wts.sum() == pytest.approx(0.5)


class TestExport:
    def test_matrix_market_roundtrip(self, tmp_path, free3):
        coeffs = ProblemCoefficients(mu=1.0, sigma=0.0)
        system = assemble_brinkman(free3, coeffs)
        path = tmp_path / "system.mtx"
        system.export_matrix_market(str(path))
        loaded = scipy_io.mmread(str(path)).tocsr()
        assert (loaded != system.matrix).nnz == 0

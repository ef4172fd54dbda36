import numpy as np
import pytest

from mce.mesh import build_mesh, generate_unit_square_mesh, subdivide
from mce.quadrature import triangle_barycentric
from mce.space import (
    Dirichlet,
    Free,
    GeometryError,
    NormalZero,
    V_FIXED,
    V_FREE,
    V_NORMAL,
    bubble_centroid_closed_form,
    build_space,
    compute_bubble,
    eval_velocity,
    eval_velocity_gradient,
    fortin_interpolate,
    macro_divergence,
    project_p0,
)


def reference_subdiv():
    mesh = build_mesh(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]],
        {(0, 1): "bottom", (1, 2): "hyp", (2, 0): "left"},
    )
    return subdivide(mesh)


def edge_between(mesh, a, b):
    return next(
        e for e in range(mesh.num_edges) if set(mesh.edges[e]) == {a, b}
    )


def random_quality_triangle(rng):
    while True:
        verts = rng.uniform(-2.0, 2.0, (3, 2))
        twoA = np.cross(
            np.r_[verts[1] - verts[0], 0.0], np.r_[verts[2] - verts[0], 0.0]
        )[2]
        if twoA < 0:
            verts = verts[[0, 2, 1]]
            twoA = -twoA
        longest = max(
            np.linalg.norm(verts[(i + 2) % 3] - verts[(i + 1) % 3])
            for i in range(3)
        )
        if 0.5 * twoA > 0.08 * longest**2:
            return verts


def p1_divergences(corners, values):
    """Oracle: divergence of the P1 field with given corner values."""
    p0, p1, p2 = corners
    twoA = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
    g = np.array(
        [
            [p1[1] - p2[1], p2[0] - p1[0]],
            [p2[1] - p0[1], p0[0] - p2[0]],
            [p0[1] - p1[1], p1[0] - p0[0]],
        ]
    ) / twoA
    return sum(values[c] @ g[c] for c in range(3))


class TestBubble:
    def test_reference_triangle_oracle(self):
        # independent oracle: build and solve the 2x2 equal-divergence
        # system from raw geometry
        sub = reference_subdiv()
        e = edge_between(sub.mesh, 0, 1)
        bubble = compute_bubble(sub, e)
        np.testing.assert_allclose(bubble.nu, [0.0, -1.0], atol=1e-15)

        area = 0.5
        n_hyp_in = -np.array([1.0, 1.0]) / np.sqrt(2.0)
        h_hyp = (1.0 / 3.0) / np.sqrt(2.0)
        n_left_in = np.array([1.0, 0.0])
        h_left = 1.0 / 3.0
        d = 1.0 * (bubble.nu @ np.array([0.0, -1.0])) / (2 * area)
        M = np.array([n_hyp_in / h_hyp, n_left_in / h_left])
        um_oracle = np.linalg.solve(M, [d, d])

        np.testing.assert_allclose(um_oracle, [1 / 3, -2 / 3], rtol=1e-13)
        np.testing.assert_allclose(bubble.centroid_values[0], um_oracle, rtol=1e-13)
        assert bubble.div_values[0] == pytest.approx(1.0, rel=1e-13)

    def test_sign_flip_negates(self):
        sub = reference_subdiv()
        e = edge_between(sub.mesh, 0, 1)
        flipped = type(sub)(
            mesh=sub.mesh,
            centroids=sub.centroids,
            edge_splits=sub.edge_splits,
            edge_nu=-sub.edge_nu,
        )
        b0 = compute_bubble(sub, e)
        b1 = compute_bubble(flipped, e)
        np.testing.assert_allclose(
            b1.centroid_values[0], -b0.centroid_values[0], rtol=1e-13
        )
        assert b1.div_values[0] == pytest.approx(-1.0, rel=1e-13)

    def test_divergence_theorem_flux(self):
        # area * div equals the boundary flux int_E hat * (nu . n) = |E|/2 * nu.n
        sub = reference_subdiv()
        mesh = sub.mesh
        for a, b, n in [((0, 1), None, [0, -1]), ((2, 0), None, [-1, 0])]:
            e = edge_between(mesh, *a)
            bubble = compute_bubble(sub, e)
            length = np.linalg.norm(
                mesh.vertices[mesh.edges[e, 1]] - mesh.vertices[mesh.edges[e, 0]]
            )
            flux = 0.5 * length * (bubble.nu @ np.asarray(n, dtype=float))
            assert 0.5 * bubble.div_values[0] == pytest.approx(flux, rel=1e-12)

    def test_equal_divergence_on_random_triangles(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for trial in range(100):
            verts = random_quality_triangle(rng)
            mesh = build_mesh(verts, [[0, 1, 2]])
            sub = subdivide(mesh, boundary_split="midpoint")
            tables_nodes = sub.local_nodes(0)
            for e in range(3):
                bubble = compute_bubble(sub, e)
                vals = np.zeros((7, 2))
                loc = list(mesh.tri_edges[0]).index(e)
                vals[3 + loc] = bubble.nu
                vals[6] = bubble.centroid_values[0]
                divs = [
                    p1_divergences(tables_nodes[ids], vals[ids])
                    for ids in sub.SUBTRIANGLES
                ]
                d = bubble.div_values[0]
                worst = max(worst, np.abs(np.asarray(divs) - d).max() / abs(d))
        assert worst < 1e-10

    def test_closed_form_matches_system(self):
        rng = np.random.default_rng(11)
        for trial in range(50):
            verts = random_quality_triangle(rng)
            mesh = build_mesh(verts, [[0, 1, 2]])
            sub = subdivide(mesh, boundary_split="midpoint")
            for e in range(3):
                bubble = compute_bubble(sub, e)
                cf = bubble_centroid_closed_form(sub, e, 0)
                np.testing.assert_allclose(
                    cf, bubble.centroid_values[0], rtol=1e-11, atol=1e-13
                )

    def test_trace_vanishes_off_own_edge(self):
        # along each macro edge the bubble trace is zero except on its own
        # edge, where it is the scalar hat at the split node times nu
        sub = subdivide(generate_unit_square_mesh(2))
        mesh = sub.mesh
        space = build_space(sub, "free")
        nv = mesh.num_vertices
        rng = np.random.default_rng(13)
        for e in range(mesh.num_edges):
            coeffs = np.zeros(space.n_velocity)
            coeffs[2 * nv + e] = 1.0
            t = mesh.edge_tris[e, 0]
            for other in mesh.tri_edges[t]:
                a, b = mesh.vertices[mesh.edges[other]]
                xm = sub.edge_splits[other]
                sa = np.linalg.norm(xm - a)
                length = np.linalg.norm(b - a)
                for _ in range(5):
                    s = rng.uniform(0.02, 0.98)
                    pt = a + s * (b - a)
                    val = eval_velocity(space, coeffs, t, pt)
                    if other == e:
                        # piecewise-linear hat: 1 at xm, 0 at the endpoints
                        d = s * length
                        hat = d / sa if d <= sa else (length - d) / (length - sa)
                        np.testing.assert_allclose(
                            val, hat * sub.edge_nu[e], atol=1e-12
                        )
                    else:
                        np.testing.assert_allclose(val, 0.0, atol=1e-12)

    def test_batched_tables_match_compute_bubble(self):
        # ElementTables solves the centroid values in a vectorized sweep;
        # it must agree with the per-edge construction everywhere
        from mce.space import ElementTables

        mesh = generate_unit_square_mesh(3)
        sub = subdivide(mesh)
        tables = ElementTables(sub)
        for t in range(mesh.num_triangles):
            for loc, e in enumerate(mesh.tri_edges[t]):
                bubble = compute_bubble(sub, e)
                np.testing.assert_allclose(
                    tables.bubble_um[t, loc], bubble.centroid_values[t],
                    rtol=1e-13, atol=1e-15,
                )
                assert tables.bubble_div[t, loc] == pytest.approx(
                    bubble.div_values[t], rel=1e-13
                )

    def test_bubble_csv_dump(self, tmp_path):
        from mce.space import dump_bubble_csv

        sub = subdivide(generate_unit_square_mesh(1))
        path = tmp_path / "bubbles.csv"
        dump_bubble_csv(sub, str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "edge,triangle,node,role,vx,vy"
        # 4 boundary edges with one table + 1 interior edge with two tables,
        # 7 nodes each
        assert len(lines) == 1 + 7 * (4 + 2)
        roles = {line.split(",")[3] for line in lines[1:]}
        assert roles == {"macro-vertex", "edge-node", "centroid"}

    def test_interior_edge_tables_on_both_sides(self):
        mesh = build_mesh(
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            [[0, 1, 2], [0, 2, 3]],
        )
        sub = subdivide(mesh)
        e = edge_between(mesh, 0, 2)
        bubble = compute_bubble(sub, e)
        assert set(bubble.tris) == {0, 1}
        # opposite outward normals: divergence constants have opposite signs
        assert bubble.div_values[0] * bubble.div_values[1] < 0
        t0 = bubble.nodal_table(sub, 0)
        np.testing.assert_allclose(t0[:3], 0.0, atol=1e-15)


class TestEvaluation:
    def test_partition_of_unity(self):
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "free")
        coeffs = np.zeros(space.n_velocity)
        nv = sub.mesh.num_vertices
        coeffs[0 : 2 * nv : 2] = 1.0
        coeffs[1 : 2 * nv : 2] = 2.0
        rng = np.random.default_rng(3)
        for t in range(sub.mesh.num_triangles):
            lam = rng.dirichlet([1, 1, 1])
            pt = lam @ sub.mesh.vertices[sub.mesh.triangles[t]]
            np.testing.assert_allclose(
                eval_velocity(space, coeffs, t, pt), [1.0, 2.0], atol=1e-13
            )
            np.testing.assert_allclose(
                eval_velocity_gradient(space, coeffs, t, pt), 0.0, atol=1e-13
            )

    def test_bubble_nodal_value(self):
        sub = subdivide(generate_unit_square_mesh(1))
        space = build_space(sub, "free")
        mesh = sub.mesh
        nv = mesh.num_vertices
        for e in range(mesh.num_edges):
            coeffs = np.zeros(space.n_velocity)
            coeffs[2 * nv + e] = 1.0
            t = mesh.edge_tris[e, 0]
            np.testing.assert_allclose(
                eval_velocity(space, coeffs, t, sub.edge_splits[e]),
                sub.edge_nu[e],
                atol=1e-13,
            )

    def test_linear_field_reproduced(self):
        u = lambda p: np.column_stack([p[:, 0], -p[:, 1]])
        sub = subdivide(generate_unit_square_mesh(3))
        space = build_space(sub, "free")
        coeffs = fortin_interpolate(u, space)
        rng = np.random.default_rng(5)
        for _ in range(10):
            t = rng.integers(0, sub.mesh.num_triangles)
            lam = rng.dirichlet([1, 1, 1])
            pt = lam @ sub.mesh.vertices[sub.mesh.triangles[t]]
            np.testing.assert_allclose(
                eval_velocity(space, coeffs, t, pt), u(pt[None])[0], atol=1e-12
            )

    def test_point_outside_rejected(self):
        sub = subdivide(generate_unit_square_mesh(1))
        space = build_space(sub, "free")
        with pytest.raises(GeometryError):
            eval_velocity(space, np.zeros(space.n_velocity), 0, [2.0, 2.0])


class TestMacroDivergence:
    def test_linear_expansion_field(self):
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "free")
        coeffs = fortin_interpolate(lambda p: p, space)
        div = macro_divergence(space, coeffs)
        np.testing.assert_allclose(div, 2.0, rtol=1e-12)

    def test_divergence_free_interpolant(self):
        u = lambda p: np.column_stack(
            [20 * p[:, 0] * p[:, 1] ** 3, 5 * p[:, 0] ** 4 - 5 * p[:, 1] ** 4]
        )
        sub = subdivide(generate_unit_square_mesh(4))
        space = build_space(sub, "free")
        coeffs = fortin_interpolate(u, space)
        assert np.abs(macro_divergence(space, coeffs)).max() < 1e-10

    def test_random_coefficients_constancy(self):
        sub = subdivide(generate_unit_square_mesh(3))
        space = build_space(sub, "free")
        rng = np.random.default_rng(19)
        for _ in range(100):
            coeffs = rng.standard_normal(space.n_velocity)
            _, dev = macro_divergence(space, coeffs, t=0, return_deviation=True)
            assert dev < 1e-9 * np.linalg.norm(coeffs)


class TestProjection:
    def test_constant(self):
        sub = subdivide(generate_unit_square_mesh(2))
        vals = project_p0(lambda p: np.full(len(p), 3.5), sub)
        np.testing.assert_allclose(vals, 3.5, rtol=1e-13)

    def test_linear_on_reference_cell(self):
        mesh = build_mesh(
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            [[0, 1, 2], [0, 2, 3]],
        )
        sub = subdivide(mesh)
        vals = project_p0(lambda p: p[:, 0], sub)
        # triangle (0,0),(1,0),(1,1): mean of x is the centroid's x = 2/3
        assert vals[0] == pytest.approx(2 / 3, rel=1e-13)
        assert vals[1] == pytest.approx(1 / 3, rel=1e-13)

    def test_orthogonality_to_constants(self):
        sub = subdivide(generate_unit_square_mesh(3))
        f = lambda p: np.sin(3 * p[:, 0]) + p[:, 1] ** 2
        vals = project_p0(f, sub)
        from mce.space import ElementTables

        tables = ElementTables(sub)
        bary, wts = triangle_barycentric(6)
        pts = np.einsum("qc,tsci->tsqi", bary, tables.sub_corners)
        fv = f(pts.reshape(-1, 2)).reshape(pts.shape[:3])
        int_f = 2.0 * np.einsum("q,tsq,ts->", wts, fv, tables.sub_areas)
        int_pf = np.sum(vals * tables.areas)
        assert int_f == pytest.approx(int_pf, rel=1e-12)

    def test_projection_is_stable(self):
        # discrete L2 stability: ||pi0 f|| <= ||f||
        sub = subdivide(generate_unit_square_mesh(3))
        from mce.space import ElementTables

        tables = ElementTables(sub)
        f = lambda p: np.sin(4 * p[:, 0]) * np.exp(p[:, 1])
        vals = project_p0(f, sub)
        norm_proj = np.sqrt(np.sum(vals**2 * tables.areas))
        bary, wts = triangle_barycentric(6)
        pts = np.einsum("qc,tsci->tsqi", bary, tables.sub_corners)
        fv = f(pts.reshape(-1, 2)).reshape(pts.shape[:3])
        norm_f = np.sqrt(
            2.0 * np.einsum("q,tsq,ts->", wts, fv**2, tables.sub_areas)
        )
        assert norm_proj <= norm_f + 1e-14

    def test_projection_idempotent(self):
        sub = subdivide(generate_unit_square_mesh(2))
        f = lambda p: np.cos(p[:, 0] * p[:, 1])
        once = project_p0(f, sub)
        mesh = sub.mesh

        def piecewise(p):
            # reconstruct the P0 field by locating the macro cell
            n = 2
            i = np.clip((p[:, 0] * n).astype(int), 0, n - 1)
            j = np.clip((p[:, 1] * n).astype(int), 0, n - 1)
            frac_x = p[:, 0] * n - i
            frac_y = p[:, 1] * n - j
            lower = frac_y <= frac_x  # below the ll-ur diagonal
            return once[2 * (j * n + i) + np.where(lower, 0, 1)]

        twice = project_p0(piecewise, sub)
        np.testing.assert_allclose(twice, once, rtol=1e-12)


class TestFortin:
    def test_constant_field_zero_bubbles(self):
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "free")
        coeffs = fortin_interpolate((2.0, -1.0), space)
        nv = sub.mesh.num_vertices
        np.testing.assert_allclose(coeffs[2 * nv :], 0.0, atol=1e-13)

    def test_commuting_property_random_polynomials(self):
        # per-triangle integral of div(pi_h u) equals integral of div u,
        # with the oracle side computed by bulk quadrature
        rng = np.random.default_rng(23)
        sub = subdivide(generate_unit_square_mesh(4))
        space = build_space(sub, "free")
        from mce.space import ElementTables

        tables = space.tables
        bary, wts = triangle_barycentric(6)
        pts = np.einsum("qc,tsci->tsqi", bary, tables.sub_corners)
        flat = pts.reshape(-1, 2)
        for _ in range(20):
            cx = rng.uniform(-1, 1, (5, 5))
            cy = rng.uniform(-1, 1, (5, 5))
            for c in (cx, cy):  # keep total degree <= 4
                for i in range(5):
                    for j in range(5):
                        if i + j > 4:
                            c[i, j] = 0.0

            def u(p):
                return np.column_stack(
                    [
                        np.polynomial.polynomial.polyval2d(p[:, 0], p[:, 1], cx),
                        np.polynomial.polynomial.polyval2d(p[:, 0], p[:, 1], cy),
                    ]
                )

            dcx = np.polynomial.polynomial.polyder(cx, axis=0)
            dcy = np.polynomial.polynomial.polyder(cy, axis=1)

            def div_u(p):
                return np.polynomial.polynomial.polyval2d(
                    p[:, 0], p[:, 1], dcx
                ) + np.polynomial.polynomial.polyval2d(p[:, 0], p[:, 1], dcy)

            coeffs = fortin_interpolate(u, space)
            lhs = macro_divergence(space, coeffs) * tables.areas
            dv = div_u(flat).reshape(pts.shape[:3])
            rhs = 2.0 * np.einsum("q,tsq,ts->t", wts, dv, tables.sub_areas)
            scale = np.maximum(np.abs(rhs).max(), 1e-3)
            assert np.abs(lhs - rhs).max() < 1e-10 * scale

    def test_interpolation_error_rate(self):
        u = lambda p: np.column_stack(
            [20 * p[:, 0] * p[:, 1] ** 3, 5 * p[:, 0] ** 4 - 5 * p[:, 1] ** 4]
        )
        errs = []
        for n in (4, 8):
            sub = subdivide(generate_unit_square_mesh(n))
            space = build_space(sub, "free")
            coeffs = fortin_interpolate(u, space)
            tables = space.tables
            bary, wts = triangle_barycentric(6)
            pts = np.einsum("qc,tsci->tsqi", bary, tables.sub_corners)
            uex = u(pts.reshape(-1, 2)).reshape(pts.shape[:3] + (2,))
            corner_vals = np.einsum(
                "tk,tksci->tsci", tables.local_coeffs(coeffs),
                tables.basis_corner_values,
            )
            uh = np.einsum("qc,tsci->tsqi", bary, corner_vals)
            err2 = 2.0 * np.einsum(
                "q,tsq,ts->", wts, ((uex - uh) ** 2).sum(axis=-1), tables.sub_areas
            )
            errs.append(np.sqrt(err2))
        assert errs[0] / errs[1] == pytest.approx(4.0, abs=1.0)


class TestFieldSolution:
    def test_evaluators(self):
        from mce.space import FieldSolution

        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "free")
        A = np.array([[1.0, 2.0], [0.5, -0.25]])
        coeffs = fortin_interpolate(lambda p: p @ A.T, space)
        sol = FieldSolution(
            space, coeffs, pressure=np.arange(space.n_pressure, dtype=float)
        )
        pt = np.array([0.3, 0.2])
        t = 0  # triangle containing (0.3, 0.2) in the n=2 grid
        np.testing.assert_allclose(sol.velocity_at(t, pt), A @ pt, atol=1e-13)
        np.testing.assert_allclose(sol.gradient_at(t, pt), A, atol=1e-13)
        assert sol.pressure_at(3) == 3.0
        np.testing.assert_allclose(sol.divergence(), np.trace(A), rtol=1e-12)
        verts = sol.vertex_velocities()
        np.testing.assert_allclose(
            verts, sub.mesh.vertices @ A.T, atol=1e-13
        )


class TestBuildSpace:
    def test_unit_square_n1_dirichlet(self):
        sub = subdivide(generate_unit_square_mesh(1))
        space = build_space(sub, "dirichlet")
        assert space.n_free_velocity == 1  # interior diagonal bubble only
        assert space.n_pressure == 2

    def test_unit_square_n2_unconstrained(self):
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "free")
        assert space.n_velocity == 2 * 9 + 16 == 34
        assert space.n_free_velocity == 34
        assert space.n_pressure == 8

    def test_normal_mode_fixes_corners(self):
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "normal")
        mesh = sub.mesh
        for v in range(mesh.num_vertices):
            x, y = mesh.vertices[v]
            on_x = x in (0.0, 1.0)
            on_y = y in (0.0, 1.0)
            if on_x and on_y:
                assert space.vertex_mode[v] == V_FIXED
            elif on_x or on_y:
                assert space.vertex_mode[v] == V_NORMAL
            else:
                assert space.vertex_mode[v] == V_FREE
        assert np.all(space.bubble_fixed[mesh.boundary_edges])

    def test_mixed_tags(self):
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(
            sub,
            {
                "left": NormalZero(),
                "right": Dirichlet((0.0, 0.0)),
                "top": Free(),
                "bottom": Free(),
            },
        )
        mesh = sub.mesh
        corner_ll = int(np.argmin(mesh.vertices.sum(axis=1)))
        assert space.vertex_mode[corner_ll] == V_NORMAL
        free_bubbles = ~space.bubble_fixed
        for e in mesh.boundary_edges:
            tag = mesh.boundary_tags[e]
            assert free_bubbles[e] == (tag in ("top", "bottom"))

    def test_inhomogeneous_dirichlet_flux_match(self):
        u = lambda p: np.column_stack(
            [20 * p[:, 0] * p[:, 1] ** 3, 5 * p[:, 0] ** 4 - 5 * p[:, 1] ** 4]
        )
        sub = subdivide(generate_unit_square_mesh(3))
        space = build_space(sub, "dirichlet", boundary_data=u)
        interp = fortin_interpolate(u, space)
        # the lift agrees with the Fortin interpolant on all fixed dofs
        fixed = np.asarray(space.constraint.sum(axis=1)).ravel() == 0
        np.testing.assert_allclose(
            space.lift[fixed], interp[fixed], rtol=1e-12, atol=1e-12
        )

    def test_affine_reproduction_in_space(self):
        # every affine field lies in the space: interpolation is exact
        sub = subdivide(generate_unit_square_mesh(2))
        space = build_space(sub, "free")
        A = np.array([[1.2, -0.3], [0.7, 2.0]])
        b = np.array([0.4, -1.1])
        u = lambda p: p @ A.T + b
        coeffs = fortin_interpolate(u, space)
        rng = np.random.default_rng(2)
        for _ in range(10):
            t = rng.integers(0, sub.mesh.num_triangles)
            lam = rng.dirichlet([1, 1, 1])
            pt = lam @ sub.mesh.vertices[sub.mesh.triangles[t]]
            np.testing.assert_allclose(
                eval_velocity(space, coeffs, t, pt), u(pt[None])[0], atol=1e-12
            )
            np.testing.assert_allclose(
                eval_velocity_gradient(space, coeffs, t, pt), A, atol=1e-12
            )

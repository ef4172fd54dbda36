"""Enriched velocity space, pressure space, projections and interpolants.

Velocities are piecewise linear on the 6 subtriangles of every macro
triangle: a globally linear part with two unknowns per macro vertex, plus
one scalar "bubble" unknown per edge. The bubble of edge E takes the value
a*nu at the edge split node (nu the unit split direction) and a centroid
value chosen so its divergence is one constant on all 6 subtriangles of
each incident macro triangle; hence every member of the space has
elementwise constant divergence and the pressure space of per-triangle
constants is matched exactly.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .mesh import MeshError, _cross2
from .quadrature import edge_rule, triangle_barycentric

_NORMAL_ANGLE_TOL = 1e-8


class GeometryError(Exception):
    """Geometric degeneracy that the mesh layer should have prevented."""


def _perp_out(d):
    """Outward normal direction for a CCW-traversed edge vector."""
    return np.stack([d[..., 1], -d[..., 0]], axis=-1)


def _hat_gradients(corners):
    """Gradients of the three nodal hats; corners (..., 3, 2)."""
    p0, p1, p2 = corners[..., 0, :], corners[..., 1, :], corners[..., 2, :]
    twoA = (p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1]) - (
        p1[..., 1] - p0[..., 1]
    ) * (p2[..., 0] - p0[..., 0])
    g = np.empty(corners.shape)
    g[..., 0, 0] = p1[..., 1] - p2[..., 1]
    g[..., 0, 1] = p2[..., 0] - p1[..., 0]
    g[..., 1, 0] = p2[..., 1] - p0[..., 1]
    g[..., 1, 1] = p0[..., 0] - p2[..., 0]
    g[..., 2, 0] = p0[..., 1] - p1[..., 1]
    g[..., 2, 1] = p1[..., 0] - p0[..., 0]
    return g / twoA[..., None, None], 0.5 * twoA


@dataclass(frozen=True)
class EdgeBubble:
    """Bubble function of one edge: nodal tables per incident triangle.

    `centroid_values[t]` is the centroid vector u_m of incident triangle t,
    `div_values[t]` the constant divergence there (unit amplitude).
    """

    edge: int
    nu: np.ndarray
    tris: tuple
    centroid_values: dict
    div_values: dict

    def nodal_table(self, subdiv, t):
        """Values at the 7 local nodes [v0 v1 v2 m0 m1 m2 c] on triangle t."""
        mesh = subdiv.mesh
        table = np.zeros((7, 2))
        loc = list(mesh.tri_edges[t]).index(self.edge)
        table[3 + loc] = self.nu
        table[6] = self.centroid_values[t]
        return table


def _bubble_centroid_value(verts, nu, iedge):
    """Solve the two equal-divergence conditions for the centroid value.

    verts: (3, 2) CCW corners; iedge: local edge opposite vertex iedge.
    Returns (u_m, div_constant).
    """
    N = _perp_out(np.stack([verts[(i + 2) % 3] - verts[(i + 1) % 3]
                            for i in range(3)]))
    twoA = float(_cross2(verts[1] - verts[0], verts[2] - verts[0]))
    beta = float(nu @ N[iedge])
    others = [j for j in range(3) if j != iedge]
    M = N[others]
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det) < 1e-14 * max(abs(M).max() ** 2, 1e-300):
        raise GeometryError("degenerate triangle in bubble construction")
    rhs = np.array([-beta / 3.0, -beta / 3.0])
    um = np.array(
        [
            (M[1, 1] * rhs[0] - M[0, 1] * rhs[1]) / det,
            (-M[1, 0] * rhs[0] + M[0, 0] * rhs[1]) / det,
        ]
    )
    return um, beta / twoA


def compute_bubble(subdiv, edge):
    """Construct the EdgeBubble of `edge` on all incident triangles."""
    mesh = subdiv.mesh
    nu = subdiv.edge_nu[edge]
    tris = [t for t in mesh.edge_tris[edge] if t >= 0]
    centroid_values, div_values = {}, {}
    for t in tris:
        verts = mesh.vertices[mesh.triangles[t]]
        loc = list(mesh.tri_edges[t]).index(edge)
        um, d = _bubble_centroid_value(verts, nu, loc)
        centroid_values[t] = um
        div_values[t] = d
    return EdgeBubble(
        edge=edge,
        nu=nu,
        tris=tuple(tris),
        centroid_values=centroid_values,
        div_values=div_values,
    )


def bubble_centroid_closed_form(subdiv, edge, t):
    """Closed-form centroid value: d * (centroid - opposite vertex).

    Cross-check for the linear-system route in `compute_bubble`; the two
    agree to roundoff for any valid split.
    """
    mesh = subdiv.mesh
    verts = mesh.vertices[mesh.triangles[t]]
    loc = list(mesh.tri_edges[t]).index(edge)
    nu = subdiv.edge_nu[edge]
    N = _perp_out(verts[(loc + 2) % 3] - verts[(loc + 1) % 3])
    twoA = float(_cross2(verts[1] - verts[0], verts[2] - verts[0]))
    d = float(nu @ N) / twoA
    return d * (subdiv.centroids[t] - verts[loc])


def dump_bubble_csv(subdiv, path):
    """Debug dump of all bubble nodal tables as CSV."""
    roles = subdiv.NODE_ROLES
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edge", "triangle", "node", "role", "vx", "vy"])
        for e in range(subdiv.mesh.num_edges):
            bubble = compute_bubble(subdiv, e)
            for t in bubble.tris:
                table = bubble.nodal_table(subdiv, t)
                for n in range(7):
                    writer.writerow(
                        [e, t, n, roles[n], repr(table[n, 0]), repr(table[n, 1])]
                    )


class ElementTables:
    """Batched per-triangle basis data shared by assembly and evaluation.

    Local velocity dofs per macro triangle (9): the two components at each
    of the three vertices, then the three edge bubbles (edge i opposite
    local vertex i).
    """

    def __init__(self, subdiv):
        self.subdiv = subdiv
        mesh = subdiv.mesh
        nt = mesh.num_triangles
        tris = mesh.triangles
        verts = mesh.vertices[tris]  # (nt,3,2)
        nodes = subdiv.all_local_nodes()  # (nt,7,2)
        sub = subdiv.SUBTRIANGLES  # (6,3)

        corners = nodes[:, sub]  # (nt,6,3,2)
        self.sub_corner_nodes = sub
        self.sub_corners = corners
        grads, areas = _hat_gradients(corners)
        if np.any(areas <= 0):
            raise GeometryError("subtriangle with non-positive area")
        self.sub_grads = grads  # (nt,6,3,2)
        self.sub_areas = areas  # (nt,6)
        self.areas = areas.sum(axis=1)  # (nt,)
        self.nodes = nodes

        # barycentric coordinates (wrt the macro triangle) of the 7 nodes
        bary = np.zeros((nt, 7, 3))
        bary[:, :3] = np.eye(3)
        bary[:, 6] = 1.0 / 3.0
        for i in range(3):
            a = verts[:, (i + 1) % 3]
            b = verts[:, (i + 2) % 3]
            m = nodes[:, 3 + i]
            t = np.einsum("nk,nk->n", m - a, b - a) / np.einsum(
                "nk,nk->n", b - a, b - a
            )
            bary[:, 3 + i, (i + 1) % 3] = 1.0 - t
            bary[:, 3 + i, (i + 2) % 3] = t
        self.node_bary = bary

        # bubble data per local edge
        nu = subdiv.edge_nu[mesh.tri_edges]  # (nt,3,2)
        N = np.empty((nt, 3, 2))
        for i in range(3):
            N[:, i] = _perp_out(verts[:, (i + 2) % 3] - verts[:, (i + 1) % 3])
        beta = np.einsum("nik,nik->ni", nu, N)  # (nt,3)
        self.bubble_div = beta / (2.0 * self.areas)[:, None]  # (nt,3)
        # solve [N_j; N_k] u_m = -(beta/3)[1,1] for each local edge i
        um = np.empty((nt, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            a_, b_ = N[:, j, 0], N[:, j, 1]
            c_, d_ = N[:, k, 0], N[:, k, 1]
            det = a_ * d_ - b_ * c_
            r = -beta[:, i] / 3.0
            um[:, i, 0] = (d_ * r - b_ * r) / det
            um[:, i, 1] = (-c_ * r + a_ * r) / det
        self.bubble_um = um
        self.edge_nu_local = nu

        # nodal values of the 9 local basis fields at the 7 nodes: (nt,9,7,2)
        vals = np.zeros((nt, 9, 7, 2))
        for a in range(3):
            for c in range(2):
                vals[:, 2 * a + c, :, c] = bary[:, :, a]
        for i in range(3):
            vals[:, 6 + i, 3 + i, :] = nu[:, i]
            vals[:, 6 + i, 6, :] = um[:, i]
        self.basis_node_values = vals

        # constant basis gradients per subtriangle: (nt,9,6,2,2)
        corner_vals = vals[:, :, sub]  # (nt,9,6,3,2)
        self.basis_grads = np.einsum("tksci,tscj->tksij", corner_vals, grads)
        self.basis_corner_values = corner_vals

        div_sub = np.trace(self.basis_grads, axis1=3, axis2=4)  # (nt,9,6)
        self.basis_div_sub = div_sub
        self.basis_div = div_sub.mean(axis=2)  # (nt,9)

        # local-to-global velocity dof map
        nv = mesh.num_vertices
        loc2glob = np.empty((nt, 9), dtype=np.int64)
        loc2glob[:, 0:6:2] = 2 * tris
        loc2glob[:, 1:6:2] = 2 * tris + 1
        loc2glob[:, 6:9] = 2 * nv + mesh.tri_edges
        self.loc2glob = loc2glob

    def local_coeffs(self, coeffs):
        """Gather global velocity coefficients to local (nt, 9)."""
        return np.asarray(coeffs)[self.loc2glob]

    def field_node_values(self, coeffs):
        """Nodal values (nt, 7, 2) of the velocity field."""
        return np.einsum("tk,tkni->tni", self.local_coeffs(coeffs),
                         self.basis_node_values)

    def field_gradients(self, coeffs):
        """Constant gradients (nt, 6, 2, 2) of the field per subtriangle."""
        return np.einsum("tk,tksij->tsij", self.local_coeffs(coeffs),
                         self.basis_grads)

    def field_divergence(self, coeffs):
        """Per-macro-triangle constant divergence (nt,)."""
        return np.einsum("tk,tk->t", self.local_coeffs(coeffs), self.basis_div)


# boundary condition kinds
@dataclass(frozen=True)
class Dirichlet:
    """Strong Dirichlet velocity data; value is a constant pair or a
    callable mapping points (n, 2) to values (n, 2)."""

    value: object = (0.0, 0.0)

    def evaluate(self, points):
        points = np.atleast_2d(points)
        if callable(self.value):
            return np.asarray(self.value(points), dtype=float).reshape(-1, 2)
        return np.broadcast_to(
            np.asarray(self.value, dtype=float), (len(points), 2)
        ).copy()


@dataclass(frozen=True)
class NormalZero:
    """Strong zero normal component; tangential left free (or to Nitsche)."""


@dataclass(frozen=True)
class Free:
    """Natural boundary (traction / Nitsche handled elsewhere)."""


_MODE_ALIASES = {
    "dirichlet": Dirichlet((0.0, 0.0)),
    "normal": NormalZero(),
    "free": Free(),
}

V_FREE, V_NORMAL, V_FIXED = 0, 1, 2


@dataclass
class FESpace:
    """Dof bookkeeping for the enriched velocity space and P0 pressures.

    The velocity block is ordered [2 dofs per vertex ..., 1 per edge].
    Strong constraints are held as an affine map U = C x + lift with C the
    sparse prolongation of the free dofs.
    """

    subdiv: object
    tables: ElementTables
    bc: dict
    n_velocity: int
    n_pressure: int
    constraint: sparse.csr_matrix
    lift: np.ndarray
    vertex_mode: np.ndarray
    bubble_fixed: np.ndarray
    edge_outward_normal: np.ndarray
    free_dof_of_vertex: np.ndarray = field(repr=False, default=None)

    @property
    def mesh(self):
        return self.subdiv.mesh

    @property
    def n_free_velocity(self):
        return self.constraint.shape[1]

    def expand_velocity(self, x):
        """Full velocity coefficients from reduced unknowns."""
        return self.constraint @ x + self.lift


def boundary_flux_amplitudes(space_or_subdiv, value, edges):
    """Bubble amplitudes reproducing the edge fluxes of `value` on `edges`.

    a_E = int_E (value - vertex interpolant) . n ds / ((|E|/2)(nu . n)),
    which makes the interpolated flux through each edge exact.
    """
    subdiv = getattr(space_or_subdiv, "subdiv", space_or_subdiv)
    mesh = subdiv.mesh
    edges = np.asarray(edges, dtype=np.int64)
    if edges.size == 0:
        return np.zeros(0)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    qx, qw = edge_rule(5)
    pts = a[:, None, :] + qx[None, :, None] * (b - a)[:, None, :]
    vals = _eval_vec(value, pts.reshape(-1, 2)).reshape(len(edges), len(qx), 2)
    d = b - a
    lengths = np.linalg.norm(d, axis=1)
    normals = _perp_out(d) / lengths[:, None]
    flux = np.einsum("q,eqi,ei->e", qw, vals, normals) * lengths
    va = _eval_vec(value, a)
    vb = _eval_vec(value, b)
    lin_flux = 0.5 * lengths * np.einsum("ei,ei->e", va + vb, normals)
    nu_n = np.einsum("ei,ei->e", subdiv.edge_nu[edges], normals)
    if np.any(np.abs(nu_n) < 1e-12):
        raise GeometryError("split direction parallel to an edge")
    return (flux - lin_flux) / (0.5 * lengths * nu_n)


def _eval_vec(value, points):
    points = np.atleast_2d(points)
    if callable(value):
        return np.asarray(value(points), dtype=float).reshape(len(points), 2)
    return np.broadcast_to(
        np.asarray(value, dtype=float), (len(points), 2)
    ).copy()


def build_space(subdiv, constraint="dirichlet", boundary_data=None):
    """Build the FESpace with strong constraints applied per boundary tag.

    Parameters
    ----------
    constraint : "dirichlet" | "normal" | "free" applied to every tag, or a
        dict mapping tag -> Dirichlet/NormalZero/Free.
    boundary_data : optional callable or pair used as the Dirichlet value
        when `constraint` is the string "dirichlet".
    """
    mesh = subdiv.mesh
    tables = ElementTables(subdiv)
    tags = sorted({t for t in mesh.boundary_tags if t})
    if isinstance(constraint, str):
        if constraint not in _MODE_ALIASES:
            raise ValueError(f"unknown constraint mode {constraint!r}")
        bc_spec = _MODE_ALIASES[constraint]
        if constraint == "dirichlet" and boundary_data is not None:
            bc_spec = Dirichlet(boundary_data)
        bc = {tag: bc_spec for tag in tags}
    else:
        bc = dict(constraint)
        unknown = set(bc) - set(tags)
        if unknown:
            raise MeshError(f"boundary tags not present in mesh: {unknown}")
        for tag in tags:
            bc.setdefault(tag, Free())

    nv, ne = mesh.num_vertices, mesh.num_edges
    n_velocity = 2 * nv + ne

    vertex_mode = np.full(nv, V_FREE, dtype=np.int8)
    vertex_value = np.zeros((nv, 2))
    vertex_normals = [[] for _ in range(nv)]
    bubble_fixed = np.zeros(ne, dtype=bool)
    bubble_value = np.zeros(ne)
    edge_normal = np.zeros((ne, 2))

    bverts = mesh.vertices
    for e in mesh.boundary_edges:
        va, vb = mesh.edges[e]
        d = bverts[vb] - bverts[va]
        edge_normal[e] = _perp_out(d) / np.linalg.norm(d)

    # Dirichlet edges first (Dirichlet wins at corners), in sorted tag order
    # for determinism.
    for tag in tags:
        spec = bc[tag]
        tag_edges = [
            e for e in mesh.boundary_edges if mesh.boundary_tags[e] == tag
        ]
        if isinstance(spec, Dirichlet):
            for e in tag_edges:
                for v in mesh.edges[e]:
                    vertex_mode[v] = V_FIXED
                    vertex_value[v] = spec.evaluate(bverts[v])[0]
            bubble_fixed[tag_edges] = True
            bubble_value[tag_edges] = boundary_flux_amplitudes(
                subdiv, spec.value, tag_edges
            )
        elif isinstance(spec, NormalZero):
            for e in tag_edges:
                for v in mesh.edges[e]:
                    vertex_normals[v].append(edge_normal[e])
            bubble_fixed[tag_edges] = True
        elif not isinstance(spec, Free):
            raise TypeError(f"unsupported boundary condition {spec!r}")

    vertex_tangent = np.zeros((nv, 2))
    for v in range(nv):
        if vertex_mode[v] == V_FIXED or not vertex_normals[v]:
            continue
        normals = vertex_normals[v]
        n0 = normals[0]
        distinct = any(
            1.0 - abs(float(n0 @ n)) > _NORMAL_ANGLE_TOL for n in normals[1:]
        )
        if distinct:
            vertex_mode[v] = V_FIXED  # corner: two independent normals
        else:
            vertex_mode[v] = V_NORMAL
            vertex_tangent[v] = np.array([-n0[1], n0[0]])

    rows, cols, data = [], [], []
    lift = np.zeros(n_velocity)
    free_dof_of_vertex = np.full(nv, -1, dtype=np.int64)
    nfree = 0
    for v in range(nv):
        if vertex_mode[v] == V_FREE:
            for c in range(2):
                rows.append(2 * v + c)
                cols.append(nfree)
                data.append(1.0)
                nfree += 1
        elif vertex_mode[v] == V_NORMAL:
            free_dof_of_vertex[v] = nfree
            t = vertex_tangent[v]
            rows += [2 * v, 2 * v + 1]
            cols += [nfree, nfree]
            data += [t[0], t[1]]
            nfree += 1
        else:
            lift[2 * v : 2 * v + 2] = vertex_value[v]
    for e in range(ne):
        dof = 2 * nv + e
        if bubble_fixed[e]:
            lift[dof] = bubble_value[e]
        else:
            rows.append(dof)
            cols.append(nfree)
            data.append(1.0)
            nfree += 1
    C = sparse.csr_matrix(
        (data, (rows, cols)), shape=(n_velocity, nfree)
    )
    return FESpace(
        subdiv=subdiv,
        tables=tables,
        bc=bc,
        n_velocity=n_velocity,
        n_pressure=mesh.num_triangles,
        constraint=C,
        lift=lift,
        vertex_mode=vertex_mode,
        bubble_fixed=bubble_fixed,
        edge_outward_normal=edge_normal,
        free_dof_of_vertex=free_dof_of_vertex,
    )


def fortin_interpolate(u, space):
    """Interpolate a smooth vector field: nodal vertex values plus bubble
    amplitudes that match every edge's normal flux exactly.

    Returns the full velocity coefficient vector.
    """
    subdiv = space.subdiv
    mesh = subdiv.mesh
    coeffs = np.zeros(space.n_velocity)
    coeffs[: 2 * mesh.num_vertices] = _eval_vec(u, mesh.vertices).ravel()
    coeffs[2 * mesh.num_vertices :] = boundary_flux_amplitudes(
        subdiv, u, np.arange(mesh.num_edges)
    )
    return coeffs


def project_p0(f, subdiv, degree=6):
    """Elementwise mean values of a scalar function (L2 projection on the
    per-triangle constants), integrated subtriangle-wise."""
    tables = subdiv if isinstance(subdiv, ElementTables) else ElementTables(subdiv)
    bary, wts = triangle_barycentric(degree)
    pts = np.einsum("qc,tsci->tsqi", bary, tables.sub_corners)
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(
        pts.shape[:3]
    )
    integrals = 2.0 * np.einsum("q,tsq,ts->t", wts, vals, tables.sub_areas)
    return integrals / tables.areas


def _locate_subtriangle(tables, t, point, tol=1e-12):
    corners = tables.sub_corners[t]  # (6,3,2)
    point = np.asarray(point, dtype=float)
    best, best_min = None, -np.inf
    for s in range(6):
        p0, p1, p2 = corners[s]
        twoA = float(_cross2(p1 - p0, p2 - p0))
        l1 = float(_cross2(point - p0, p2 - p0)) / twoA
        l2 = float(_cross2(p1 - p0, point - p0)) / twoA
        lam = np.array([1.0 - l1 - l2, l1, l2])
        m = lam.min()
        if m > best_min:
            best, best_min = (s, lam), m
    if best_min < -tol:
        raise GeometryError(
            f"point {point} outside macro triangle {t} (barycentric "
            f"defect {best_min:.3g})"
        )
    return best


def eval_velocity(space, coeffs, t, point):
    """Velocity value at a point inside macro triangle t."""
    tables = space.tables
    s, lam = _locate_subtriangle(tables, t, point)
    local = np.asarray(coeffs)[tables.loc2glob[t]]
    corner_vals = np.einsum("k,kci->ci", local, tables.basis_corner_values[t, :, s])
    return lam @ corner_vals


def eval_velocity_gradient(space, coeffs, t, point):
    """Velocity gradient (2, 2) at a point; entry [i, j] is d u_i / d x_j."""
    tables = space.tables
    s, _ = _locate_subtriangle(tables, t, point)
    local = np.asarray(coeffs)[tables.loc2glob[t]]
    return np.einsum("k,kij->ij", local, tables.basis_grads[t, :, s])


def macro_divergence(space, coeffs, t=None, return_deviation=False):
    """Constant divergence per macro triangle.

    Verifies constancy across the 6 subtriangles (1e-9, scaled) and can
    return the observed maximum deviation.
    """
    tables = space.tables
    local = tables.local_coeffs(coeffs)
    div_sub = np.einsum("tk,tks->ts", local, tables.basis_div_sub)
    value = div_sub.mean(axis=1)
    deviation = np.abs(div_sub - value[:, None]).max(axis=1)
    scale = max(
        1.0,
        float(np.abs(local).max(initial=0.0))
        * float(np.abs(tables.basis_div_sub).max(initial=0.0)),
    )
    if np.any(deviation > 1e-9 * scale):
        worst = int(np.argmax(deviation))
        raise GeometryError(
            f"divergence not constant on triangle {worst}: "
            f"deviation {deviation[worst]:.3g}"
        )
    if t is not None:
        value, deviation = float(value[t]), float(deviation[t])
    return (value, deviation) if return_deviation else value


@dataclass
class FieldSolution:
    """Velocity coefficients plus per-triangle pressure with evaluators."""

    space: FESpace
    velocity: np.ndarray
    pressure: np.ndarray = None
    multiplier: float = None

    def velocity_at(self, t, point):
        return eval_velocity(self.space, self.velocity, t, point)

    def gradient_at(self, t, point):
        return eval_velocity_gradient(self.space, self.velocity, t, point)

    def pressure_at(self, t):
        return self.pressure[t]

    def divergence(self):
        return self.space.tables.field_divergence(self.velocity)

    def vertex_velocities(self):
        """Velocity at the macro vertices (bubbles vanish there)."""
        nv = self.space.mesh.num_vertices
        return self.velocity[: 2 * nv].reshape(nv, 2)

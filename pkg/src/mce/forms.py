"""Assembly of the elasticity and Brinkman forms into sparse systems.

All variational forms are integrated exactly where the integrands are
piecewise polynomial: gradient/divergence products are closed-form per
subtriangle, mass terms use a degree-2 rule, load terms a degree-4 rule,
and the pressure-velocity coupling uses the elementwise-constant divergence
times the macro area. Strong constraints are eliminated through the
space's affine map (never penalized); the symmetric-indefinite Brinkman
matrix is produced by negating the pressure test block, so the assembled
matrix is [[A, -B^T], [-B, 0]] with right-hand side [f, -g].
"""

import warnings

import numpy as np
from scipy import io as scipy_io
from scipy import sparse

from .quadrature import edge_rule, triangle_barycentric, triangle_rule
from .space import Dirichlet, NormalZero

# re-exported here because assembly owns the quadrature contract
quadrature_rule = triangle_rule


class ConfigurationError(Exception):
    """Inconsistent problem configuration (coefficients vs constraints)."""


def _per_triangle(value, nt, name, minimum=None):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(nt, float(arr))
    if arr.shape != (nt,):
        raise ConfigurationError(
            f"{name} must be a scalar or one value per macro triangle"
        )
    if minimum is not None and arr.min() < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}")
    return arr


class ProblemCoefficients:
    """Coefficients of one problem instance.

    mu and sigma may be scalars or per-macro-triangle arrays; lam is the
    first Lame coefficient (elasticity only); gamma the Nitsche penalty;
    f and g the body force / mass source callables; boundary maps tags to
    Dirichlet/NormalZero/Free specs.
    """

    def __init__(self, mu, lam=None, sigma=0.0, gamma=10.0, f=None, g=None,
                 boundary=None):
        self.mu = mu
        self.lam = lam
        self.sigma = sigma
        self.gamma = float(gamma)
        self.f = f
        self.g = g
        self.boundary = dict(boundary) if boundary else {}
        if self.gamma <= 0:
            raise ConfigurationError("gamma must be positive")

    def fields(self, nt):
        mu = _per_triangle(self.mu, nt, "mu", minimum=0.0)
        sigma = _per_triangle(self.sigma, nt, "sigma", minimum=0.0)
        return mu, sigma

    def validate_elasticity(self, nt):
        mu, _ = self.fields(nt)
        if mu.min() <= 0:
            raise ConfigurationError("elasticity requires mu > 0")
        if self.lam is None or self.lam <= 0:
            raise ConfigurationError("elasticity requires lambda > 0")
        return mu, float(self.lam)

    def validate_brinkman(self, nt):
        mu, sigma = self.fields(nt)
        if (mu + sigma).min() <= 0:
            raise ConfigurationError("Brinkman requires mu + sigma > 0")
        return mu, sigma


class SaddleSystem:
    """Reduced sparse system with dof-block bookkeeping.

    `matrix`/`rhs` live in the reduced numbering (constraints eliminated);
    `blocks` maps velocity/pressure/multiplier to slices of it. `expand`
    recovers the full velocity coefficients and the pressure vector.
    """

    def __init__(self, space, matrix, rhs, n_pressure, has_multiplier):
        self.space = space
        self.matrix = matrix.tocsr()
        self.rhs = rhs
        nfu = space.n_free_velocity
        self.blocks = {
            "velocity": slice(0, nfu),
            "pressure": slice(nfu, nfu + n_pressure),
            "multiplier": slice(nfu + n_pressure,
                                nfu + n_pressure + int(has_multiplier)),
        }
        self.n_pressure = n_pressure
        self.has_multiplier = has_multiplier

    @property
    def size(self):
        return self.matrix.shape[0]

    def expand(self, x):
        """Split a reduced solution into full velocity coefficients, the
        pressure vector and the multiplier value (or None)."""
        space = self.space
        u = space.expand_velocity(x[self.blocks["velocity"]])
        p = x[self.blocks["pressure"]] if self.n_pressure else None
        m = float(x[self.blocks["multiplier"]][0]) if self.has_multiplier else None
        return u, p, m

    def export_matrix_market(self, path):
        """Write the reduced matrix in MatrixMarket coordinate format."""
        scipy_io.mmwrite(path, self.matrix.tocoo())


class _Builder:
    """COO accumulator in fixed insertion order (deterministic sums)."""

    def __init__(self, size):
        self.size = size
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = np.zeros(size)

    def add(self, rows, cols, vals):
        self.rows.append(np.asarray(rows, dtype=np.int64).ravel())
        self.cols.append(np.asarray(cols, dtype=np.int64).ravel())
        self.vals.append(np.asarray(vals, dtype=float).ravel())

    def matrix(self):
        if not self.rows:
            return sparse.csr_matrix((self.size, self.size))
        coo = sparse.coo_matrix(
            (
                np.concatenate(self.vals),
                (np.concatenate(self.rows), np.concatenate(self.cols)),
            ),
            shape=(self.size, self.size),
        )
        return coo.tocsr()


def _element_block(builder, tables, local_mats):
    l2g = tables.loc2glob  # (nt,9)
    rows = np.repeat(l2g[:, :, None], 9, axis=2)
    cols = np.repeat(l2g[:, None, :], 9, axis=1)
    builder.add(rows, cols, local_mats)


def _eval_field(fn, points):
    pts = points.reshape(-1, 2)
    return np.asarray(fn(pts), dtype=float)


def _body_force_rhs(builder, tables, f, degree=4):
    if f is None:
        return
    bary, wts = triangle_barycentric(degree)
    pts = np.einsum("qc,tsci->tsqi", bary, tables.sub_corners)
    fv = _eval_field(f, pts).reshape(pts.shape)
    basis_q = np.einsum("qc,tksci->tksqi", bary, tables.basis_corner_values)
    loc = 2.0 * np.einsum(
        "q,tsqi,tksqi,ts->tk", wts, fv, basis_q, tables.sub_areas
    )
    np.add.at(builder.rhs, tables.loc2glob, loc)


def _viscous_matrix(tables, mu):
    G = tables.basis_grads
    return np.einsum(
        "t,tksij,tlsij,ts->tkl", mu, G, G, tables.sub_areas, optimize=True
    )


def _elastic_matrix(tables, mu, lam):
    G = tables.basis_grads
    E = 0.5 * (G + np.swapaxes(G, 3, 4))
    K = 2.0 * np.einsum(
        "t,tksij,tlsij,ts->tkl", mu, E, E, tables.sub_areas, optimize=True
    )
    D = tables.basis_div
    K += lam * np.einsum("t,tk,tl->tkl", tables.areas, D, D)
    return K


def _mass_matrix(tables, sigma):
    if np.all(sigma == 0.0):
        return 0.0
    bary, wts = triangle_barycentric(2)
    basis_q = np.einsum("qc,tksci->tksqi", bary, tables.basis_corner_values)
    return 2.0 * np.einsum(
        "t,q,tksqi,tlsqi,ts->tkl", sigma, wts, basis_q, basis_q,
        tables.sub_areas, optimize=True,
    )


def _coupling_and_source(builder, tables, n_vel, g, fold_sign=-1.0):
    """-B blocks (folded sign) and the -int g q right-hand side."""
    nt = tables.loc2glob.shape[0]
    D = tables.basis_div * tables.areas[:, None]  # (nt,9): b(1_T, psi_k)
    prows = n_vel + np.repeat(np.arange(nt), 9)
    ucols = tables.loc2glob.ravel()
    builder.add(prows, ucols, fold_sign * D.ravel())
    builder.add(ucols, prows, fold_sign * D.ravel())
    if g is not None:
        bary, wts = triangle_barycentric(6)
        pts = np.einsum("qc,tsci->tsqi", bary, tables.sub_corners)
        gv = _eval_field(g, pts).reshape(pts.shape[:3])
        ints = 2.0 * np.einsum("q,tsq,ts->t", wts, gv, tables.sub_areas)
        builder.rhs[n_vel : n_vel + nt] += fold_sign * ints


def _multiplier_row(builder, tables, n_vel, nt):
    mrow = n_vel + nt
    prows = n_vel + np.arange(nt)
    builder.add(prows, np.full(nt, mrow), tables.areas)
    builder.add(np.full(nt, mrow), prows, tables.areas)


def _reduce(space, builder, n_pressure, has_multiplier):
    K = builder.matrix()
    b = builder.rhs
    C = space.constraint
    n_extra = n_pressure + int(has_multiplier)
    S = sparse.block_diag(
        [C, sparse.identity(n_extra, format="csr")], format="csr"
    ) if n_extra else C.tocsr()
    z0 = np.zeros(K.shape[0])
    z0[: space.n_velocity] = space.lift
    if space.lift.any():
        b = b - K @ z0
    K_red = (S.T @ K @ S).tocsr()
    b_red = S.T @ b
    return SaddleSystem(space, K_red, b_red, n_pressure, has_multiplier)


def _space_has_dirichlet(space):
    return any(isinstance(bc, Dirichlet) for bc in space.bc.values())


def assemble_elasticity(space, coeffs, tractions=None):
    """Linear elasticity velocity block: int 2 mu sym-grad : sym-grad +
    lambda div div, with body load and optional boundary tractions
    (dict tag -> callable or constant traction density)."""
    tables = space.tables
    nt = space.mesh.num_triangles
    mu, lam = coeffs.validate_elasticity(nt)
    builder = _Builder(space.n_velocity)
    _element_block(builder, tables, _elastic_matrix(tables, mu, lam))
    _body_force_rhs(builder, tables, coeffs.f)
    if tractions:
        _traction_rhs(builder, space, tractions)
    return _reduce(space, builder, 0, False)


def _traction_rhs(builder, space, tractions):
    qx, qw = edge_rule(3)
    for face in _boundary_faces(space):
        spec = tractions.get(face.tag)
        if spec is None:
            continue
        for seg in face.segments:
            pts = seg.points(qx)
            tv = (
                _eval_field(spec, pts)
                if callable(spec)
                else np.broadcast_to(np.asarray(spec, float), (len(qx), 2))
            )
            traces = seg.traces(qx)  # (9, nq, 2)
            vals = seg.length * np.einsum("q,qi,kqi->k", qw, tv, traces)
            np.add.at(builder.rhs, space.tables.loc2glob[face.tri], vals)


def assemble_brinkman(space, coeffs, pressure_multiplier=True):
    """Brinkman saddle system (Stokes for sigma=0, Darcy for mu=0).

    Appends one mean-zero pressure multiplier row unless disabled (natural
    boundaries fix the pressure level themselves).
    """
    tables = space.tables
    nt = space.mesh.num_triangles
    mu, sigma = coeffs.validate_brinkman(nt)
    if mu.min() == 0.0 and _space_has_dirichlet(space):
        raise ConfigurationError(
            "mu = 0 with full Dirichlet constraints is ill-posed; use the "
            "normal-only mode with tangential Nitsche conditions"
        )
    size = space.n_velocity + nt + int(pressure_multiplier)
    builder = _Builder(size)
    K = _viscous_matrix(tables, mu) + _mass_matrix(tables, sigma)
    _element_block(builder, tables, K)
    _body_force_rhs(builder, tables, coeffs.f)
    _coupling_and_source(builder, tables, space.n_velocity, coeffs.g)
    if pressure_multiplier:
        _multiplier_row(builder, tables, space.n_velocity, nt)
    return _reduce(space, builder, nt, pressure_multiplier)


class _Segment:
    """Half of a boundary face trace, backed by one subtriangle."""

    def __init__(self, tables, tri, n0, n1, child):
        self.tables = tables
        self.tri = tri
        self.n0, self.n1 = n0, n1
        self.child = child
        p0 = tables.nodes[tri, n0]
        p1 = tables.nodes[tri, n1]
        self.p0, self.p1 = p0, p1
        self.length = float(np.linalg.norm(p1 - p0))

    def points(self, qx):
        return self.p0 + np.outer(qx, self.p1 - self.p0)

    def traces(self, qx):
        V = self.tables.basis_node_values[self.tri]  # (9,7,2)
        return (
            V[:, self.n0][:, None, :] * (1.0 - qx)[None, :, None]
            + V[:, self.n1][:, None, :] * qx[None, :, None]
        )

    def grads(self):
        return self.tables.basis_grads[self.tri, :, self.child]  # (9,2,2)


class _Face:
    def __init__(self, space, edge):
        mesh = space.mesh
        tables = space.tables
        self.edge = edge
        self.tag = mesh.boundary_tags[edge]
        t = int(mesh.edge_tris[edge, 0])
        self.tri = t
        loc = int(np.flatnonzero(mesh.tri_edges[t] == edge)[0])
        self.loc = loc
        va, vb = (loc + 1) % 3, (loc + 2) % 3
        a = tables.nodes[t, va]
        b = tables.nodes[t, vb]
        d = b - a
        self.length = float(np.linalg.norm(d))
        self.normal = np.array([d[1], -d[0]]) / self.length
        self.tangent = d / self.length
        self.segments = [
            _Segment(tables, t, va, 3 + loc, 2 * loc),
            _Segment(tables, t, 3 + loc, vb, 2 * loc + 1),
        ]

    def mean_normal_trace(self, space):
        """Exact face means of (basis . n), shape (9,)."""
        V = space.tables.basis_node_values[self.tri]
        total = np.zeros(9)
        for seg in self.segments:
            avg = 0.5 * (V[:, seg.n0] + V[:, seg.n1]) @ self.normal
            total += seg.length * avg
        return total / self.length


def _boundary_faces(space, tags=None):
    mesh = space.mesh
    for e in mesh.boundary_edges:
        if tags is not None and mesh.boundary_tags[e] not in tags:
            continue
        yield _Face(space, e)


def assemble_nitsche_elasticity(space, coeffs, dirichlet_tags, g_n=None,
                                g_t=None):
    """Elasticity with weak boundary conditions: u.n prescribed on the whole
    boundary, the tangential part prescribed on `dirichlet_tags` and
    traction-free elsewhere.

    Adds -c(u,v) - c(v,u) + s(u,v) with the lambda part of the normal
    penalty acting on face means (the piecewise-constant trace projection),
    and the data terms for g_n (scalar normal datum) and g_t (tangential
    datum on the Dirichlet part).
    """
    tables = space.tables
    nt = space.mesh.num_triangles
    mu, lam = coeffs.validate_elasticity(nt)
    gamma = coeffs.gamma
    dirichlet_tags = set(dirichlet_tags)
    if not dirichlet_tags:
        warnings.warn(
            "Nitsche elasticity without a tangential Dirichlet part may "
            "leave a rigid-motion nullspace"
        )

    builder = _Builder(space.n_velocity)
    _element_block(builder, tables, _elastic_matrix(tables, mu, lam))
    _body_force_rhs(builder, tables, coeffs.f)

    qx, qw = edge_rule(3)
    for face in _boundary_faces(space):
        t = face.tri
        n, tau = face.normal, face.tangent
        h = face.length
        mu_t = mu[t]
        l2g = tables.loc2glob[t]
        on_d = face.tag in dirichlet_tags

        mean_n = face.mean_normal_trace(space)
        # lambda-penalty on face means: (gamma/h) lam |E| mean mean
        pen_mean = (gamma / h) * lam * face.length
        builder.add(
            np.repeat(l2g, 9), np.tile(l2g, 9),
            pen_mean * np.outer(mean_n, mean_n),
        )

        mean_gn = 0.0
        for seg in face.segments:
            traces = seg.traces(qx)  # (9,nq,2)
            G = seg.grads()  # (9,2,2)
            E = 0.5 * (G + np.swapaxes(G, 1, 2))
            div = np.trace(G, axis1=1, axis2=2)
            sig_nn = 2.0 * mu_t * np.einsum("i,kij,j->k", n, E, n) + lam * div
            sig_nt = 2.0 * mu_t * np.einsum("i,kij,j->k", tau, E, n)
            tr_n = np.einsum("kqi,i->kq", traces, n)
            tr_t = np.einsum("kqi,i->kq", traces, tau)
            int_trn = seg.length * np.einsum("q,kq->k", qw, tr_n)
            int_trt = seg.length * np.einsum("q,kq->k", qw, tr_t)
            int_trn_trn = seg.length * np.einsum("q,kq,lq->kl", qw, tr_n, tr_n)
            int_trt_trt = seg.length * np.einsum("q,kq,lq->kl", qw, tr_t, tr_t)

            rows = np.repeat(l2g, 9)
            cols = np.tile(l2g, 9)
            # -c(u,v) - c(v,u), normal part on every boundary face
            cmat = np.outer(int_trn, sig_nn)  # test k trace, trial l stress
            builder.add(rows, cols, -(cmat + cmat.T))
            # mu-penalty on normal traces
            builder.add(rows, cols, (gamma / h) * mu_t * int_trn_trn)
            if on_d:
                cmat_t = np.outer(int_trt, sig_nt)
                builder.add(rows, cols, -(cmat_t + cmat_t.T))
                builder.add(rows, cols, (gamma / h) * mu_t * int_trt_trt)

            pts = seg.points(qx)
            if g_n is not None:
                gv = np.asarray(g_n(pts), dtype=float).ravel()
                int_g_trn = seg.length * np.einsum("q,q,kq->k", qw, gv, tr_n)
                int_g = seg.length * float(np.einsum("q,q->", qw, gv))
                mean_gn += int_g
                np.add.at(
                    builder.rhs, l2g,
                    (gamma / h) * mu_t * int_g_trn - sig_nn * int_g,
                )
            if on_d and g_t is not None:
                gtv = _eval_field(g_t, pts)
                gt_tau = gtv @ tau
                int_gt_trt = seg.length * np.einsum("q,q,kq->k", qw, gt_tau, tr_t)
                int_gt = seg.length * float(np.einsum("q,q->", qw, gt_tau))
                np.add.at(
                    builder.rhs, l2g,
                    (gamma / h) * mu_t * int_gt_trt - sig_nt * int_gt,
                )
        if g_n is not None:
            np.add.at(
                builder.rhs, l2g,
                (gamma / h) * lam * mean_gn * mean_n,
            )
    return _reduce(space, builder, 0, False)


def assemble_nitsche_brinkman_tangential(space, coeffs,
                                         pressure_multiplier=True):
    """Brinkman with strong normal / weak tangential boundary conditions.

    Adds -m(u,v) - m(v,u) + s(u,v) on the normal-constrained boundary
    faces; for mu = 0 every added term vanishes, so the Darcy limit is the
    plain saddle system on the constrained space.
    """
    tables = space.tables
    nt = space.mesh.num_triangles
    mu, sigma = coeffs.validate_brinkman(nt)
    gamma = coeffs.gamma
    size = space.n_velocity + nt + int(pressure_multiplier)
    builder = _Builder(size)
    K = _viscous_matrix(tables, mu) + _mass_matrix(tables, sigma)
    _element_block(builder, tables, K)
    _body_force_rhs(builder, tables, coeffs.f)
    _coupling_and_source(builder, tables, space.n_velocity, coeffs.g)
    if pressure_multiplier:
        _multiplier_row(builder, tables, space.n_velocity, nt)

    qx, qw = edge_rule(3)
    for face in _boundary_faces(space):
        if not isinstance(space.bc.get(face.tag), NormalZero):
            continue
        t = face.tri
        if mu[t] == 0.0:
            continue
        n, tau = face.normal, face.tangent
        h = face.length
        l2g = tables.loc2glob[t]
        rows = np.repeat(l2g, 9)
        cols = np.tile(l2g, 9)
        for seg in face.segments:
            traces = seg.traces(qx)
            G = seg.grads()
            dun_t = mu[t] * np.einsum("i,kij,j->k", tau, G, n)  # t.(mu grad u n)
            tr_t = np.einsum("kqi,i->kq", traces, tau)
            int_trt = seg.length * np.einsum("q,kq->k", qw, tr_t)
            int_trt_trt = seg.length * np.einsum("q,kq,lq->kl", qw, tr_t, tr_t)
            cmat = np.outer(int_trt, dun_t)
            builder.add(rows, cols, -(cmat + cmat.T))
            builder.add(rows, cols, (gamma / h) * mu[t] * int_trt_trt)
    return _reduce(space, builder, nt, pressure_multiplier)


def assemble_nitsche_slip(space, coeffs, pressure_multiplier=True,
                          slip_tags=None):
    """Brinkman with pure slip conditions imposed weakly on the normal
    component: A_B - c((u,p),v) - c((v,0),u) + s(u,v) with penalty weight
    (gamma/h)(mu + sigma).

    The pressure test function is deliberately absent from the second
    c-form, which keeps per-triangle mass conservation exact but makes the
    matrix non-symmetric in the pressure / boundary-velocity coupling.
    """
    tables = space.tables
    nt = space.mesh.num_triangles
    mu, sigma = coeffs.validate_brinkman(nt)
    gamma = coeffs.gamma
    size = space.n_velocity + nt + int(pressure_multiplier)
    builder = _Builder(size)
    K = _viscous_matrix(tables, mu) + _mass_matrix(tables, sigma)
    _element_block(builder, tables, K)
    _body_force_rhs(builder, tables, coeffs.f)
    _coupling_and_source(builder, tables, space.n_velocity, coeffs.g)
    if pressure_multiplier:
        _multiplier_row(builder, tables, space.n_velocity, nt)

    qx, qw = edge_rule(3)
    for face in _boundary_faces(space, slip_tags):
        t = face.tri
        n = face.normal
        h = face.length
        l2g = tables.loc2glob[t]
        rows = np.repeat(l2g, 9)
        cols = np.tile(l2g, 9)
        prow = space.n_velocity + t
        weight = (gamma / h) * (mu[t] + sigma[t])
        for seg in face.segments:
            traces = seg.traces(qx)
            G = seg.grads()
            dun_n = mu[t] * np.einsum("i,kij,j->k", n, G, n)  # n.(mu grad u n)
            tr_n = np.einsum("kqi,i->kq", traces, n)
            int_trn = seg.length * np.einsum("q,kq->k", qw, tr_n)
            int_trn_trn = seg.length * np.einsum("q,kq,lq->kl", qw, tr_n, tr_n)
            # -c((u,p),v): test-trace x trial-stress, and +int p (v.n)
            cmat = np.outer(int_trn, dun_n)
            builder.add(rows, cols, -cmat)
            builder.add(l2g, np.full(9, prow), int_trn)
            # -c((v,0),u): test-stress x trial-trace, no pressure column
            builder.add(rows, cols, -cmat.T)
            builder.add(rows, cols, weight * int_trn_trn)
    return _reduce(space, builder, nt, pressure_multiplier)


def boundary_normal_norm(space, coeffs, tags=None):
    """L2 norm of the velocity's normal trace over the (tagged) boundary."""
    qx, qw = edge_rule(3)
    local = space.tables.local_coeffs(coeffs)
    total = 0.0
    for face in _boundary_faces(space, tags):
        for seg in face.segments:
            traces = np.einsum("k,kqi->qi", local[face.tri], seg.traces(qx))
            un = traces @ face.normal
            total += seg.length * float(np.einsum("q,q->", qw, un**2))
    return np.sqrt(total)


def write_matrix_market(system, path):
    """MatrixMarket coordinate export of the reduced system matrix."""
    system.export_matrix_market(path)

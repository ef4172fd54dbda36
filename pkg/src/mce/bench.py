"""Benchmark problems, error norms, and parameter studies.

Covers the manufactured Stokes and Darcy cases on the unit square, the
Cook's membrane locking study (against plain affine elements on the same
macro mesh), and the two coupled Stokes-Brinkman scenarios on (0,2)^2.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .forms import (
    ProblemCoefficients,
    assemble_brinkman,
    assemble_elasticity,
    assemble_nitsche_brinkman_tangential,
    assemble_nitsche_elasticity,
    assemble_nitsche_slip,
)
from .mesh import generate_cook_mesh, generate_unit_square_mesh, subdivide
from .quadrature import triangle_barycentric
from .solve import solve
from .space import (
    Dirichlet,
    FieldSolution,
    Free,
    NormalZero,
    build_space,
    project_p0,
)


def _stack(fx, fy):
    def fn(p):
        p = np.atleast_2d(p)
        return np.column_stack([fx(p[:, 0], p[:, 1]), fy(p[:, 0], p[:, 1])])

    return fn


def _grad_stack(four):
    def fn(p):
        p = np.atleast_2d(p)
        out = np.empty((len(p), 2, 2))
        for (i, j), g in four.items():
            out[:, i, j] = g(p[:, 0], p[:, 1])
        return out

    return fn


@dataclass
class ManufacturedCase:
    """Exact fields, data, and boundary setup of one benchmark problem."""

    name: str
    model: str  # stokes | darcy | brinkman | elasticity
    coefficients: ProblemCoefficients
    boundary: dict
    velocity: object
    velocity_grad: object
    pressure: object = None
    pressure_grad: object = None
    laplacian: object = None
    needs_multiplier: bool = True
    default_bc_mode: str = "strong"
    boundary_split: str = "midpoint"
    domain: object = generate_unit_square_mesh

    def strong_residual(self, points):
        """Momentum and mass residuals of the exact fields at `points`."""
        points = np.atleast_2d(points)
        co = self.coefficients
        mu = float(np.max(np.atleast_1d(co.mu)))
        u = self.velocity(points)
        gu = self.velocity_grad(points)
        divu = gu[:, 0, 0] + gu[:, 1, 1]
        if self.model == "elasticity":
            # with div u = 0 the strong form reduces to -mu lap(u) = f
            mom = -mu * self.laplacian(points) - co.f(points)
            mass = divu
        else:
            sigma = float(np.max(np.atleast_1d(co.sigma)))
            mom = sigma * u + self.pressure_grad(points) - co.f(points)
            if mu and self.laplacian is not None:
                mom -= mu * self.laplacian(points)
            g = co.g(points) if co.g is not None else 0.0
            mass = divu - g
        return mom, mass

    def check_consistency(self, n_points=100, seed=0):
        """Max scaled residual of the governing equations at random points."""
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.05, 0.95, (n_points, 2))
        mom, mass = self.strong_residual(pts)
        scale = max(1.0, np.abs(self.coefficients.f(pts)).max())
        return max(np.abs(mom).max(), np.abs(mass).max()) / scale


def case_stokes():
    """Stokes on the unit square with the quartic divergence-free solution
    u = (20 x y^3, 5 x^4 - 5 y^4), p = 60 y x^2 - 20 y^3 - 5, f = 0."""
    velocity = _stack(
        lambda x, y: 20.0 * x * y**3, lambda x, y: 5.0 * x**4 - 5.0 * y**4
    )
    grad = _grad_stack(
        {
            (0, 0): lambda x, y: 20.0 * y**3,
            (0, 1): lambda x, y: 60.0 * x * y**2,
            (1, 0): lambda x, y: 20.0 * x**3,
            (1, 1): lambda x, y: -20.0 * y**3,
        }
    )
    pressure = lambda p: 60.0 * p[:, 1] * p[:, 0] ** 2 - 20.0 * p[:, 1] ** 3 - 5.0
    pressure_grad = _stack(
        lambda x, y: 120.0 * x * y, lambda x, y: 60.0 * x**2 - 60.0 * y**2
    )
    laplacian = _stack(
        lambda x, y: 120.0 * x * y, lambda x, y: 60.0 * x**2 - 60.0 * y**2
    )
    zero = lambda p: np.zeros((len(np.atleast_2d(p)), 2))
    co = ProblemCoefficients(mu=1.0, sigma=0.0, f=zero)
    bc = {tag: Dirichlet(velocity) for tag in ("left", "right", "top", "bottom")}
    return ManufacturedCase(
        name="stokes",
        model="stokes",
        coefficients=co,
        boundary=bc,
        velocity=velocity,
        velocity_grad=grad,
        pressure=pressure,
        pressure_grad=pressure_grad,
        laplacian=laplacian,
    )


def case_darcy(mu=0.0, sigma=1.0):
    """Darcy (mu = 0, sigma = 1) with u built from sin^2/sin(2 pi .) waves,
    p = sin(pi x) - 2/pi, and u.n = 0 imposed strongly.

    The exact velocity vanishes on the whole boundary, so the same fields
    solve the Brinkman equation for any coefficients once f absorbs the
    friction and viscosity terms; that makes this case double as the
    viscosity-robustness sweep.
    """
    pi = np.pi
    velocity = _stack(
        lambda x, y: -pi * np.sin(pi * x) ** 2 * np.sin(2 * pi * y),
        lambda x, y: pi * np.sin(2 * pi * x) * np.sin(pi * y) ** 2,
    )
    grad = _grad_stack(
        {
            (0, 0): lambda x, y: -(pi**2) * np.sin(2 * pi * x) * np.sin(2 * pi * y),
            (0, 1): lambda x, y: -2 * pi**2 * np.sin(pi * x) ** 2 * np.cos(2 * pi * y),
            (1, 0): lambda x, y: 2 * pi**2 * np.cos(2 * pi * x) * np.sin(pi * y) ** 2,
            (1, 1): lambda x, y: pi**2 * np.sin(2 * pi * x) * np.sin(2 * pi * y),
        }
    )
    laplacian = _stack(
        lambda x, y: 2 * pi**3 * np.sin(2 * pi * y) * (4 * np.sin(pi * x) ** 2 - 1),
        lambda x, y: 2 * pi**3 * np.sin(2 * pi * x) * (1 - 4 * np.sin(pi * y) ** 2),
    )
    pressure = lambda p: np.sin(pi * p[:, 0]) - 2.0 / pi
    pressure_grad = _stack(
        lambda x, y: pi * np.cos(pi * x), lambda x, y: np.zeros_like(x)
    )

    def f(p):
        p = np.atleast_2d(p)
        out = sigma * velocity(p) + pressure_grad(p)
        if mu:
            out -= mu * laplacian(p)
        return out

    co = ProblemCoefficients(mu=mu, sigma=sigma, f=f)
    bc = {tag: NormalZero() for tag in ("left", "right", "top", "bottom")}
    return ManufacturedCase(
        name="darcy" if mu == 0.0 else f"brinkman-mu{mu:g}",
        model="darcy" if mu == 0.0 else "brinkman",
        coefficients=co,
        boundary=bc,
        velocity=velocity,
        velocity_grad=grad,
        pressure=pressure,
        pressure_grad=pressure_grad,
        laplacian=laplacian,
        default_bc_mode="nitsche-tangential",
    )


def case_elasticity(lam, mu=1.0):
    """Elasticity with the divergence-free Stokes displacement field; the
    body force f = -mu lap(u) is then independent of lambda, so one exact
    solution serves the whole lambda sweep."""
    stokes = case_stokes()
    f = _stack(
        lambda x, y: -mu * 120.0 * x * y,
        lambda x, y: -mu * (60.0 * x**2 - 60.0 * y**2),
    )
    co = ProblemCoefficients(mu=mu, lam=lam, f=f)
    bc = {tag: Dirichlet(stokes.velocity)
          for tag in ("left", "right", "top", "bottom")}
    return ManufacturedCase(
        name=f"elasticity-lam{lam:g}",
        model="elasticity",
        coefficients=co,
        boundary=bc,
        velocity=stokes.velocity,
        velocity_grad=stokes.velocity_grad,
        laplacian=stokes.laplacian,
        needs_multiplier=False,
    )


def solve_case(case, n, bc_mode=None, gamma=None):
    """Mesh, assemble, and solve one case at refinement level n.

    Returns (FieldSolution, space, system, report).
    """
    mesh = case.domain(n)
    sub = subdivide(mesh, boundary_split=case.boundary_split)
    mode = bc_mode or case.default_bc_mode
    co = case.coefficients
    if gamma is not None:
        co = ProblemCoefficients(
            mu=co.mu, lam=co.lam, sigma=co.sigma, gamma=gamma, f=co.f, g=co.g,
            boundary=co.boundary,
        )

    if case.model == "elasticity":
        if mode == "strong":
            space = build_space(sub, case.boundary)
            system = assemble_elasticity(space, co)
        elif mode == "nitsche":
            space = build_space(sub, "free")
            system = assemble_nitsche_elasticity(
                space, co,
                dirichlet_tags={t for t in case.boundary},
                g_n=lambda p, _c=case: _normal_datum(_c, p),
                g_t=case.velocity,
            )
        else:
            raise ValueError(f"unsupported mode {mode!r} for elasticity")
        report = solve(system)
        u, _, _ = system.expand(report.solution)
        return FieldSolution(space, u), space, system, report

    if mode == "strong":
        space = build_space(sub, case.boundary)
        system = assemble_brinkman(
            space, co, pressure_multiplier=case.needs_multiplier
        )
    elif mode == "nitsche-tangential":
        space = build_space(sub, case.boundary)
        system = assemble_nitsche_brinkman_tangential(
            space, co, pressure_multiplier=case.needs_multiplier
        )
    elif mode == "nitsche-slip":
        space = build_space(sub, "free")
        system = assemble_nitsche_slip(
            space, co, pressure_multiplier=case.needs_multiplier
        )
    else:
        raise ValueError(f"unknown bc mode {mode!r}")
    report = solve(system)
    u, p, m = system.expand(report.solution)
    return FieldSolution(space, u, p, m), space, system, report


def _normal_datum(case, points):
    # only used on axis-aligned unit-square boundaries
    points = np.atleast_2d(points)
    u = case.velocity(points)
    n = np.zeros_like(points)
    n[np.isclose(points[:, 0], 0.0)] = [-1.0, 0.0]
    n[np.isclose(points[:, 0], 1.0)] = [1.0, 0.0]
    n[np.isclose(points[:, 1], 0.0)] = [0.0, -1.0]
    n[np.isclose(points[:, 1], 1.0)] = [0.0, 1.0]
    return np.einsum("ni,ni->n", u, n)


@dataclass
class ErrorRecord:
    l2_u: float
    h1_u: float
    div: float
    l2_p: float = math.nan
    p0p: float = math.nan
    triple_e: float = math.nan
    triple_b: float = math.nan

    def as_dict(self):
        return {
            "err_l2_u": self.l2_u,
            "err_h1_u": self.h1_u,
            "err_l2_p": self.l2_p,
            "err_p0p": self.p0p,
            "err_div": self.div,
        }


def error_norms(solution, case, degree=6):
    """All error norms of a solved case, integrated subtriangle-wise."""
    space = solution.space
    tables = space.tables
    nt = space.mesh.num_triangles
    co = case.coefficients
    mu = np.broadcast_to(np.asarray(co.mu, dtype=float), (nt,)) \
        if np.ndim(co.mu) == 0 else np.asarray(co.mu, dtype=float)
    sigma = np.broadcast_to(np.asarray(co.sigma, dtype=float), (nt,)) \
        if np.ndim(co.sigma) == 0 else np.asarray(co.sigma, dtype=float)

    bary, wts = triangle_barycentric(degree)
    pts = np.einsum("qc,tsci->tsqi", bary, tables.sub_corners)
    flat = pts.reshape(-1, 2)

    u_ex = case.velocity(flat).reshape(pts.shape)
    gu_ex = case.velocity_grad(flat).reshape(pts.shape[:3] + (2, 2))

    local = tables.local_coeffs(solution.velocity)
    corner_vals = np.einsum("tk,tksci->tsci", local, tables.basis_corner_values)
    uh = np.einsum("qc,tsci->tsqi", bary, corner_vals)
    gh = np.einsum("tk,tksij->tsij", local, tables.basis_grads)

    du = u_ex - uh
    dg = gu_ex - gh[:, :, None]
    w_areas = 2.0 * wts[None, None, :] * tables.sub_areas[:, :, None]

    def cell_int(values):  # values (nt, 6, nq) -> per-triangle integrals
        return np.einsum("tsq,tsq->t", w_areas, values)

    l2_u_t = cell_int((du**2).sum(axis=-1))
    h1_u_t = cell_int((dg**2).sum(axis=(-1, -2)))
    div_ex = gu_ex[..., 0, 0] + gu_ex[..., 1, 1]
    div_h = solution.divergence()
    div_t = cell_int((div_ex - div_h[:, None, None]) ** 2)
    sym = 0.5 * (dg + np.swapaxes(dg, -1, -2))
    eps_t = cell_int((sym**2).sum(axis=(-1, -2)))

    record = ErrorRecord(
        l2_u=float(np.sqrt(l2_u_t.sum())),
        h1_u=float(np.sqrt(h1_u_t.sum())),
        div=float(np.sqrt(div_t.sum())),
    )
    if co.lam is not None:
        record.triple_e = float(
            np.sqrt(np.sum(2.0 * mu * eps_t) + co.lam * div_t.sum())
        )
    if case.pressure is not None and solution.pressure is not None:
        p_ex = case.pressure(flat).reshape(pts.shape[:3])
        ph = solution.pressure
        l2_p_t = cell_int((p_ex - ph[:, None, None]) ** 2)
        p0 = project_p0(case.pressure, space.subdiv)
        p0p_t = tables.areas * (p0 - ph) ** 2
        record.l2_p = float(np.sqrt(l2_p_t.sum()))
        record.p0p = float(np.sqrt(p0p_t.sum()))
        record.triple_b = float(
            np.sqrt(
                np.sum(mu * h1_u_t)
                + np.sum(sigma * l2_u_t)
                + div_t.sum()
                + np.sum(p0p_t / (mu + sigma))
            )
        )
    return record


@dataclass
class ConvergenceRecord:
    """Per-level errors with fitted log-log slopes (last three levels)."""

    case_name: str
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)

    COLUMNS = ["err_l2_u", "err_h1_u", "err_l2_p", "err_p0p", "err_div"]

    def add(self, level, n, nno, h, errors):
        self.rows.append(
            {"level": level, "n": n, "NNO": nno, "h": h, **errors.as_dict()}
        )

    def fit_slopes(self, window=3):
        hs = np.array([r["h"] for r in self.rows])
        for col in self.COLUMNS:
            errs = np.array([r[col] for r in self.rows])
            take = slice(-window, None)
            h_w, e_w = hs[take], errs[take]
            ok = np.isfinite(e_w) & (e_w > 0)
            if ok.sum() >= 2:
                slope = float(
                    np.polyfit(np.log(h_w[ok]), np.log(e_w[ok]), 1)[0]
                )
            else:
                slope = math.nan
            self.slopes["slope_" + col[4:]] = slope
        return self.slopes

    def to_csv(self, path):
        names = ["level", "n", "NNO", "h"] + self.COLUMNS + sorted(self.slopes)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for row in self.rows:
                out = []
                for name in names:
                    value = row.get(name, self.slopes.get(name))
                    if isinstance(value, float):
                        out.append(format(value, ".17e"))
                    else:
                        out.append(value)
                writer.writerow(out)


def run_convergence(case, levels, bc_mode=None, gamma=None):
    """Assemble/solve the case over the levels and fit convergence slopes."""
    if len(levels) < 3:
        raise ValueError("need at least 3 levels to fit slopes")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing (h decreasing)")
    record = ConvergenceRecord(case_name=case.name)
    for idx, n in enumerate(levels):
        solution, space, system, report = solve_case(
            case, n, bc_mode=bc_mode, gamma=gamma
        )
        errors = error_norms(solution, case)
        mesh = space.mesh
        record.add(idx, n, mesh.num_vertices, mesh.mesh_size(), errors)
    record.fit_slopes()
    return record


# Cook's membrane ------------------------------------------------------------

PLANE_STRAIN = "plane-strain"


@dataclass
class CookProblem:
    nu: float
    young: float
    mu: float
    lam: float
    traction: tuple = (0.0, 1.0)
    tip: tuple = (48.0, 60.0)


def case_cooks(nu, young=200.0):
    """Cook's membrane material data under plane strain:
    lam = E nu / ((1+nu)(1-2nu)), mu = E / (2(1+nu))."""
    if not 0.0 < nu < 0.5:
        raise ValueError("Poisson ratio must lie in (0, 0.5)")
    mu = young / (2.0 * (1.0 + nu))
    lam = young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return CookProblem(nu=nu, young=young, mu=mu, lam=lam)


def solve_cooks(problem, n=16):
    """Solve Cook's membrane with the compatible element; returns
    (tip vertical displacement, FieldSolution, space)."""
    mesh = generate_cook_mesh(n)
    sub = subdivide(mesh, boundary_split="midpoint")
    space = build_space(
        sub,
        {
            "clamped": Dirichlet((0.0, 0.0)),
            "loaded": Free(),
            "traction-free": Free(),
        },
    )
    co = ProblemCoefficients(mu=problem.mu, lam=problem.lam)
    system = assemble_elasticity(
        space, co, tractions={"loaded": problem.traction}
    )
    report = solve(system)
    u, _, _ = system.expand(report.solution)
    tip = _vertex_at(mesh, problem.tip)
    return float(u[2 * tip + 1]), FieldSolution(space, u), space


def _vertex_at(mesh, point):
    d = np.linalg.norm(mesh.vertices - np.asarray(point), axis=1)
    v = int(np.argmin(d))
    if d[v] > 1e-8 * max(1.0, np.abs(mesh.vertices).max()):
        raise ValueError(f"no mesh vertex at {point}")
    return v


def solve_cooks_affine(problem, n=16):
    """Plain vector P1 elements on the same type-I mesh (the locking
    reference): pure displacement form, no subdivision, no bubbles."""
    mesh = generate_cook_mesh(n)
    verts = mesh.vertices
    tris = mesh.triangles
    nv = len(verts)
    ndof = 2 * nv

    corners = verts[tris]
    p0, p1, p2 = corners[:, 0], corners[:, 1], corners[:, 2]
    twoA = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (
        p1[:, 1] - p0[:, 1]
    ) * (p2[:, 0] - p0[:, 0])
    areas = 0.5 * twoA
    g = np.empty_like(corners)
    g[:, 0, 0] = p1[:, 1] - p2[:, 1]
    g[:, 0, 1] = p2[:, 0] - p1[:, 0]
    g[:, 1, 0] = p2[:, 1] - p0[:, 1]
    g[:, 1, 1] = p0[:, 0] - p2[:, 0]
    g[:, 2, 0] = p0[:, 1] - p1[:, 1]
    g[:, 2, 1] = p1[:, 0] - p0[:, 0]
    g /= twoA[:, None, None]

    # basis gradients for the 6 local dofs (vertex a, component c)
    G = np.zeros((len(tris), 6, 2, 2))
    for a in range(3):
        for c in range(2):
            G[:, 2 * a + c, c, :] = g[:, a]
    E = 0.5 * (G + np.swapaxes(G, 2, 3))
    K = 2.0 * problem.mu * np.einsum(
        "tkij,tlij,t->tkl", E, E, areas, optimize=True
    )
    D = np.trace(G, axis1=2, axis2=3)
    K += problem.lam * np.einsum("t,tk,tl->tkl", areas, D, D)

    l2g = np.empty((len(tris), 6), dtype=np.int64)
    l2g[:, 0:6:2] = 2 * tris
    l2g[:, 1:6:2] = 2 * tris + 1

    from scipy import sparse

    rows = np.repeat(l2g[:, :, None], 6, axis=2).ravel()
    cols = np.repeat(l2g[:, None, :], 6, axis=1).ravel()
    A = sparse.coo_matrix((K.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()

    rhs = np.zeros(ndof)
    tr = np.asarray(problem.traction, dtype=float)
    for e in mesh.boundary_edges:
        if mesh.boundary_tags[e] != "loaded":
            continue
        a, b = mesh.edges[e]
        length = np.linalg.norm(verts[b] - verts[a])
        for v in (a, b):  # trapezoid on the linear trace
            rhs[2 * v : 2 * v + 2] += 0.5 * length * tr

    fixed = np.zeros(ndof, dtype=bool)
    for e in mesh.boundary_edges:
        if mesh.boundary_tags[e] == "clamped":
            for v in mesh.edges[e]:
                fixed[2 * v : 2 * v + 2] = True
    keep = ~fixed
    A_red = A[keep][:, keep]
    x = np.zeros(ndof)
    from scipy.sparse.linalg import spsolve

    x[keep] = spsolve(A_red.tocsc(), rhs[keep])
    tip = _vertex_at(mesh, problem.tip)
    return float(x[2 * tip + 1])


@dataclass
class LockingRecord:
    rows: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["nu", "tip_compatible", "tip_affine"])
            for row in self.rows:
                writer.writerow(
                    [
                        format(row["nu"], ".17e"),
                        format(row["tip_compatible"], ".17e"),
                        format(row["tip_affine"], ".17e"),
                    ]
                )


def run_locking_study(nus, n=16):
    """Tip displacements of the compatible vs plain affine element."""
    record = LockingRecord()
    for nu in nus:
        problem = case_cooks(nu)
        tip_c, _, _ = solve_cooks(problem, n=n)
        tip_a = solve_cooks_affine(problem, n=n)
        record.rows.append(
            {"nu": nu, "tip_compatible": tip_c, "tip_affine": tip_a}
        )
    return record


# Coupled Stokes-Brinkman ----------------------------------------------------


def _square2_mesh(n):
    mesh = generate_unit_square_mesh(n)
    return mesh.with_vertices(mesh.vertices * 2.0)


NORMAL_MUS = (1.0, 1e-2, 1e-3, 1e-6)
TANGENTIAL_MUS = (10.0, 1.0, 1e-1, 1e-2)


def coupling_problem(scenario, mu_value, n=40):
    """Coefficients and boundary setup of one coupling run on (0,2)^2 with
    body force (0, 100)."""
    mesh = _square2_mesh(n)
    sub = subdivide(mesh)
    centers = sub.centroids
    nt = mesh.num_triangles
    mu = np.empty(nt)
    sigma = np.empty(nt)
    if scenario == "normal":
        lower = centers[:, 1] <= 1.0
        mu[lower] = 1.0
        mu[~lower] = mu_value
        sigma[lower] = 0.0
        sigma[~lower] = 1.0
        bc = {
            "left": Dirichlet((0.0, 0.0)),
            "right": Dirichlet((0.0, 0.0)),
            "top": Free(),
            "bottom": Free(),
        }
    elif scenario == "tangential":
        left = centers[:, 0] <= 1.0
        mu[left] = mu_value
        mu[~left] = 100.0
        sigma[left] = 1e3
        sigma[~left] = 0.0
        bc = {
            "left": NormalZero(),
            "right": Dirichlet((0.0, 0.0)),
            "top": Free(),
            "bottom": Free(),
        }
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    f = lambda p: np.column_stack(
        [np.zeros(len(np.atleast_2d(p))), np.full(len(np.atleast_2d(p)), 100.0)]
    )
    co = ProblemCoefficients(mu=mu, sigma=sigma, f=f, boundary=bc)
    return mesh, sub, co


def solve_coupling(scenario, mu_value, n=40):
    """Solve one coupling run; natural top/bottom boundaries fix the
    pressure level, so no multiplier row is used."""
    mesh, sub, co = coupling_problem(scenario, mu_value, n=n)
    space = build_space(sub, co.boundary)
    system = assemble_brinkman(space, co, pressure_multiplier=False)
    report = solve(system)
    u, p, _ = system.expand(report.solution)
    return FieldSolution(space, u, p), space, report


def velocity_profile(solution, y=1.0):
    """Vertex velocities along the horizontal line y=const, sorted by x."""
    mesh = solution.space.mesh
    on_line = np.isclose(mesh.vertices[:, 1], y)
    idx = np.flatnonzero(on_line)
    order = np.argsort(mesh.vertices[idx, 0])
    idx = idx[order]
    values = solution.vertex_velocities()[idx]
    return mesh.vertices[idx, 0], values


def second_difference_sign_changes(xs, ys, window=(0.7, 1.3), rel_floor=5e-3):
    """Count sign changes of the second difference of ys inside the window.

    Differences smaller than rel_floor times the window maximum are treated
    as zero (flat regions do not count as oscillation).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    d2 = ys[2:] - 2.0 * ys[1:-1] + ys[:-2]
    centers = xs[1:-1]
    mask = (centers >= window[0]) & (centers <= window[1])
    d2 = d2[mask]
    if d2.size == 0:
        return 0
    floor = rel_floor * np.abs(d2).max()
    signs = np.sign(d2)
    signs[np.abs(d2) < floor] = 0
    signs = signs[signs != 0]
    return int(np.sum(signs[1:] * signs[:-1] < 0))


@dataclass
class CouplingResult:
    scenario: str
    mu_values: tuple
    solutions: dict
    profiles: dict

    def profile_csv(self, path, mu_value):
        xs, values = self.profiles[mu_value]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "ux", "uy"])
            for x, (ux, uy) in zip(xs, values):
                writer.writerow(
                    [format(x, ".17e"), format(ux, ".17e"), format(uy, ".17e")]
                )


def run_brinkman_coupling(scenario, mu_values=None, n=40):
    """Run the coupling scenario for each viscosity value."""
    if mu_values is None:
        mu_values = NORMAL_MUS if scenario == "normal" else TANGENTIAL_MUS
    solutions, profiles = {}, {}
    for mu_value in mu_values:
        solution, space, report = solve_coupling(scenario, mu_value, n=n)
        solutions[mu_value] = solution
        profiles[mu_value] = velocity_profile(solution, y=1.0)
    return CouplingResult(
        scenario=scenario,
        mu_values=tuple(mu_values),
        solutions=solutions,
        profiles=profiles,
    )

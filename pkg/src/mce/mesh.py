"""Macro triangulations and their six-way subdivision.

A macro mesh is a conforming triangulation whose triangles each carry one
pressure value. Subdivision joins every triangle's centroid to its corners
(first split) and then cuts each of those children by the line through the
two centroids sharing the edge (second split), producing 6 subtriangles per
macro triangle. On boundary edges the cut runs along the perpendicular from
the centroid to the edge.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

INTERIOR = ""
DEFAULT_BOUNDARY_TAG = "wall"

# endpoint margin below which a split point is considered degenerate
_SPLIT_MARGIN = 1e-10


class MeshError(Exception):
    """Invalid mesh topology or geometry."""


class MeshFormatError(MeshError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _cross2(a, b):
    """z-component of the cross product for 2D vectors (broadcasting)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def triangle_areas(vertices, triangles):
    """Signed areas of the given triangles (positive for CCW)."""
    p = vertices[triangles]
    return 0.5 * _cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


@dataclass(frozen=True)
class MacroMesh:
    """Conforming macro triangulation.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    edges : (ne, 2) int array of vertex pairs
    edge_tris : (ne, 2) int array, incident triangles in ascending order;
        second entry is -1 for boundary edges
    tri_edges : (nt, 3) int array, global edge index opposite local vertex i
    boundary_tags : tuple of str per edge, "" for interior edges
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    tri_edges: np.ndarray
    boundary_tags: tuple

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    def is_boundary_edge(self, e):
        return self.edge_tris[e, 1] < 0

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_tris[:, 1] < 0)

    def mesh_size(self):
        """h = 1/sqrt(NNO) with NNO the number of macro vertices."""
        return 1.0 / np.sqrt(self.num_vertices)

    def with_vertices(self, vertices):
        """Same connectivity with new vertex coordinates."""
        vertices = np.asarray(vertices, dtype=float)
        if vertices.shape != self.vertices.shape:
            raise MeshError("vertex array shape mismatch")
        return replace(self, vertices=vertices)


def build_mesh(vertices, triangles, boundary_tags=None):
    """Assemble a MacroMesh from vertices, CCW triangles and optional
    boundary tags.

    Parameters
    ----------
    vertices : (nv, 2) array-like
    triangles : (nt, 3) array-like of vertex indices
    boundary_tags : dict mapping frozenset/tuple vertex pairs to tag strings;
        untagged boundary edges get DEFAULT_BOUNDARY_TAG.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    nt = len(triangles)
    if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise MeshError("triangle refers to a vertex index out of range")

    areas = triangle_areas(vertices, triangles)
    if np.any(areas <= 0):
        bad = int(np.flatnonzero(areas <= 0)[0])
        raise MeshError(f"non-positive area at triangle {bad}")

    edge_index = {}
    edges = []
    edge_tris = []
    tri_edges = np.empty((nt, 3), dtype=np.int64)
    for t, (i, j, k) in enumerate(triangles):
        for loc, (a, b) in enumerate(((j, k), (k, i), (i, j))):
            key = (min(a, b), max(a, b))
            e = edge_index.get(key)
            if e is None:
                e = len(edges)
                edge_index[key] = e
                edges.append((a, b))
                edge_tris.append([t, -1])
            else:
                if edge_tris[e][1] >= 0:
                    raise MeshError(
                        f"edge {key} shared by more than two triangles"
                    )
                edge_tris[e][1] = t
            tri_edges[t, loc] = e
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edge_tris = np.asarray(edge_tris, dtype=np.int64).reshape(-1, 2)

    tags = [INTERIOR] * len(edges)
    lookup = {}
    if boundary_tags:
        lookup = {
            (min(a, b), max(a, b)): tag for (a, b), tag in boundary_tags.items()
        }
    for e, (a, b) in enumerate(edges):
        if edge_tris[e, 1] < 0:
            tags[e] = lookup.pop((min(a, b), max(a, b)), DEFAULT_BOUNDARY_TAG)
    if lookup:
        pair = next(iter(lookup))
        raise MeshError(f"boundary tag given for non-boundary edge {pair}")

    return MacroMesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_tris=edge_tris,
        tri_edges=tri_edges,
        boundary_tags=tuple(tags),
    )


def generate_unit_square_mesh(n):
    """Uniform n-by-n grid of the unit square, each cell split by its
    lower-left to upper-right diagonal. Sides are tagged bottom/right/top/left.
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            ll, lr = vid(i, j), vid(i + 1, j)
            ur, ul = vid(i + 1, j + 1), vid(i, j + 1)
            triangles.append((ll, lr, ur))
            triangles.append((ll, ur, ul))
    tags = {}
    for i in range(n):
        tags[(vid(i, 0), vid(i + 1, 0))] = "bottom"
        tags[(vid(i, n), vid(i + 1, n))] = "top"
        tags[(vid(0, i), vid(0, i + 1))] = "left"
        tags[(vid(n, i), vid(n, i + 1))] = "right"
    return build_mesh(vertices, triangles, tags)


COOK_CORNERS = np.array([[0.0, 0.0], [48.0, 44.0], [48.0, 60.0], [0.0, 44.0]])


def generate_cook_mesh(n):
    """Cook's membrane: bilinear image of the unit-square n-by-n grid onto the
    quadrilateral (0,0), (48,44), (48,60), (0,44). The x=0 side is tagged
    `clamped`, x=48 `loaded`, top and bottom `traction-free`.
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    square = generate_unit_square_mesh(n)
    xi = square.vertices[:, 0]
    eta = square.vertices[:, 1]
    c00, c10, c11, c01 = COOK_CORNERS
    mapped = (
        np.outer((1 - xi) * (1 - eta), c00)
        + np.outer(xi * (1 - eta), c10)
        + np.outer(xi * eta, c11)
        + np.outer((1 - xi) * eta, c01)
    )
    rename = {"left": "clamped", "right": "loaded",
              "bottom": "traction-free", "top": "traction-free"}
    tags = {}
    for e, tag in enumerate(square.boundary_tags):
        if tag:
            a, b = square.edges[e]
            tags[(a, b)] = rename[tag]
    return build_mesh(mapped, square.triangles, tags)


@dataclass(frozen=True)
class SubdividedMesh:
    """Six-way subdivision of a MacroMesh.

    Attributes
    ----------
    mesh : the macro mesh
    centroids : (nt, 2) centroid of each macro triangle
    edge_splits : (ne, 2) split point x_m per edge
    edge_nu : (ne, 2) global unit split direction per edge; points from the
        centroid of the lower-indexed incident triangle toward x_m
    """

    mesh: MacroMesh
    centroids: np.ndarray
    edge_splits: np.ndarray
    edge_nu: np.ndarray

    # subtriangle corner indices into the 7 local nodes
    # [v0, v1, v2, m0, m1, m2, centroid]; children (a, m_i, c), (m_i, b, c)
    # for edge i with CCW endpoints a = v_{i+1}, b = v_{i+2}
    SUBTRIANGLES = np.array(
        [[1, 3, 6], [3, 2, 6], [2, 4, 6], [4, 0, 6], [0, 5, 6], [5, 1, 6]]
    )
    NODE_ROLES = (
        "macro-vertex", "macro-vertex", "macro-vertex",
        "edge-node", "edge-node", "edge-node", "centroid",
    )

    def local_nodes(self, t):
        """The 7 subdivision nodes of macro triangle t, ordered
        [v0, v1, v2, m0, m1, m2, centroid]."""
        mesh = self.mesh
        out = np.empty((7, 2))
        out[:3] = mesh.vertices[mesh.triangles[t]]
        out[3:6] = self.edge_splits[mesh.tri_edges[t]]
        out[6] = self.centroids[t]
        return out

    def subtriangles(self, t):
        """Corner coordinates (6, 3, 2) of the subtriangles of triangle t."""
        return self.local_nodes(t)[self.SUBTRIANGLES]

    def all_local_nodes(self):
        """Node coordinates for every triangle, shape (nt, 7, 2)."""
        mesh = self.mesh
        out = np.empty((mesh.num_triangles, 7, 2))
        out[:, :3] = mesh.vertices[mesh.triangles]
        out[:, 3:6] = self.edge_splits[mesh.tri_edges]
        out[:, 6] = self.centroids
        return out


def _boundary_split(a, b, c):
    """Foot of the perpendicular from centroid c onto segment (a, b)."""
    d = b - a
    t = np.dot(c - a, d) / np.dot(d, d)
    return t, a + t * d


def subdivide(mesh, boundary_split="perpendicular"):
    """Compute the SubdividedMesh of a MacroMesh.

    Interior edges split where the centroid-to-centroid segment crosses them.
    Boundary edges split at the perpendicular foot of the centroid
    (`boundary_split="perpendicular"`, the default) or at the edge midpoint
    (`"midpoint"`, needed for sheared meshes such as Cook's membrane where
    the foot can fall outside the edge). Raises MeshError for needle
    configurations where a split point falls within 1e-10 of an edge endpoint
    (relative to edge length) or the centroid segment misses the open edge.
    """
    if boundary_split not in ("perpendicular", "midpoint"):
        raise ValueError(f"unknown boundary_split {boundary_split!r}")
    verts = mesh.vertices
    centroids = verts[mesh.triangles].mean(axis=1)
    ne = mesh.num_edges
    splits = np.empty((ne, 2))
    nus = np.empty((ne, 2))
    for e in range(ne):
        va, vb = verts[mesh.edges[e]]
        t0, t1 = mesh.edge_tris[e]
        if t1 < 0:
            if boundary_split == "midpoint":
                xm = 0.5 * (va + vb)
            else:
                t, xm = _boundary_split(va, vb, centroids[t0])
                if not (_SPLIT_MARGIN < t < 1.0 - _SPLIT_MARGIN):
                    raise MeshError(
                        f"edge {e}: centroid projection falls outside the "
                        f"open edge (t={t:.3g}); mesh quality too poor"
                    )
        else:
            c0, c1 = centroids[t0], centroids[t1]
            d = c1 - c0
            ab = vb - va
            # c0 + s*d = va + t*ab; s along the centroid segment, t along the edge
            denom = _cross2(d, ab)
            if abs(denom) < 1e-14 * np.linalg.norm(d) * np.linalg.norm(ab):
                raise MeshError(f"edge {e}: centroid segment parallel to edge")
            s = _cross2(va - c0, ab) / denom
            t = _cross2(va - c0, d) / denom
            if not (0.0 < s < 1.0):
                raise MeshError(
                    f"edge {e}: centroid-to-centroid segment does not cross "
                    f"the shared edge (s={s:.3g})"
                )
            if not (_SPLIT_MARGIN < t < 1.0 - _SPLIT_MARGIN):
                raise MeshError(
                    f"edge {e}: split point within {_SPLIT_MARGIN:g} of an "
                    f"edge endpoint (t={t:.3g}); mesh quality too poor"
                )
            xm = va + t * ab
        splits[e] = xm
        nu = xm - centroids[t0]
        nus[e] = nu / np.linalg.norm(nu)
    return SubdividedMesh(
        mesh=mesh, centroids=centroids, edge_splits=splits, edge_nu=nus
    )


def validate_mesh(mesh):
    """Return a list of invariant violations (empty when the mesh is valid)."""
    report = []
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    for t in np.flatnonzero(areas <= 0):
        report.append(f"negative area at triangle {t}")
    lengths = np.linalg.norm(
        mesh.vertices[mesh.edges[:, 0]] - mesh.vertices[mesh.edges[:, 1]], axis=1
    )
    scale = lengths.max() if len(lengths) else 1.0
    for e in np.flatnonzero(lengths <= 1e-14 * max(scale, 1.0)):
        report.append(f"degenerate edge {e} (coincident endpoints)")
    for e in range(mesh.num_edges):
        tag = mesh.boundary_tags[e]
        if mesh.edge_tris[e, 1] < 0 and not tag:
            report.append(f"boundary edge {e} missing a tag")
        if mesh.edge_tris[e, 1] >= 0 and tag:
            report.append(f"interior edge {e} carries boundary tag {tag!r}")
    counts = np.zeros(mesh.num_vertices, dtype=int)
    np.add.at(counts, mesh.triangles.ravel(), 1)
    for v in np.flatnonzero(counts == 0):
        report.append(f"dangling vertex {v}")
    # conformity: no vertex may sit strictly inside another edge (T-junction)
    verts = mesh.vertices
    for e, (a, b) in enumerate(mesh.edges):
        pa, pb = verts[a], verts[b]
        d = pb - pa
        len2 = float(d @ d)
        if len2 == 0.0:
            continue
        t = ((verts - pa) @ d) / len2
        dist2 = np.sum((verts - pa - np.outer(t, d)) ** 2, axis=1)
        margin = 1e-12 * len2
        inside = (t > 1e-9) & (t < 1.0 - 1e-9) & (dist2 < margin)
        inside[[a, b]] = False
        for v in np.flatnonzero(inside):
            report.append(f"hanging vertex {v} on edge {e}")
    return report


MESH_FORMAT_HEADER = "mce-mesh 1"


def write_mesh(mesh, stream=None):
    """Serialize to the line-oriented text format; returns the text when no
    stream is given. Vertex coordinates round-trip bit-exactly."""
    lines = [MESH_FORMAT_HEADER, f"vertices {mesh.num_vertices}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines.append(f"triangles {mesh.num_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    tagged = [
        (a, b, mesh.boundary_tags[e])
        for e, (a, b) in enumerate(mesh.edges)
        if mesh.boundary_tags[e]
    ]
    lines.append(f"boundary {len(tagged)}")
    lines += [f"{a} {b} {tag}" for a, b, tag in tagged]
    text = "\n".join(lines) + "\n"
    if stream is None:
        return text
    stream.write(text)
    return None


def read_mesh(source):
    """Parse the text format back into a MacroMesh.

    Accepts a string, bytes, or a readable stream. Non-CCW triangles are
    reoriented with a warning; structural problems raise MeshFormatError with
    the offending line number.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("ascii")
    lines = source.splitlines()

    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines):
            pos += 1
            stripped = lines[pos - 1].strip()
            if stripped:
                return stripped, pos
        raise MeshFormatError("unexpected end of file", len(lines))

    header, ln = next_line()
    if header != MESH_FORMAT_HEADER:
        raise MeshFormatError(
            f"expected header {MESH_FORMAT_HEADER!r}, got {header!r}", ln
        )

    def section(name):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 2 or parts[0] != name or not parts[1].isdigit():
            raise MeshFormatError(f"expected '{name} <count>', got {text!r}", ln)
        return int(parts[1])

    nv = section("vertices")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 2:
            raise MeshFormatError(f"expected 'x y', got {text!r}", ln)
        try:
            vertices[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {text!r}", ln) from None

    nt = section("triangles")
    triangles = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        text, ln = next_line()
        parts = text.split()
        try:
            ijk = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError(f"bad triangle line {text!r}", ln) from None
        if len(ijk) != 3:
            raise MeshFormatError(f"expected 'i j k', got {text!r}", ln)
        for idx in ijk:
            if idx < 0 or idx >= nv:
                raise MeshFormatError(f"vertex index {idx} out of range", ln)
        p = vertices[ijk]
        if 0.5 * _cross2(p[1] - p[0], p[2] - p[0]) < 0:
            warnings.warn(f"line {ln}: reorienting non-CCW triangle {i}")
            ijk = [ijk[0], ijk[2], ijk[1]]
        triangles[i] = ijk

    nb = section("boundary")
    tags = {}
    for _ in range(nb):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 3:
            raise MeshFormatError(f"expected 'i j tag', got {text!r}", ln)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise MeshFormatError(f"bad boundary line {text!r}", ln) from None
        if not (0 <= a < nv and 0 <= b < nv):
            raise MeshFormatError(f"vertex index out of range in {text!r}", ln)
        tags[(a, b)] = parts[2]

    try:
        return build_mesh(vertices, triangles, tags)
    except MeshError as exc:
        raise MeshFormatError(str(exc), None) from exc

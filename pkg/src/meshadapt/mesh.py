"""Conforming 2D triangle meshes: storage, adjacency, validity and generation.

A :class:`Mesh` stores the *reference* configuration.  Deformed
configurations are described by a displacement field and materialized on
demand with :func:`apply_displacement`; the reference is never overwritten.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

DUPLICATE_TOL = 1e-12


class MeshError(ValueError):
    """Raised when a mesh violates a structural invariant."""


def signed_area(a, b, c):
    """Signed area of triangle ``abc``; positive for counter-clockwise order.

    Works elementwise on stacked points of shape ``(..., 2)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    u = b - a
    v = c - a
    return 0.5 * (u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])


def inscribed_radius(a, b, c, tol=1e-14):
    """Radius of the inscribed circle, ``area / semiperimeter``.

    Raises
    ------
    MeshError
        If any triangle is degenerate (unsigned area below ``tol`` times
        the squared longest edge).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    la = np.linalg.norm(b - c, axis=-1)
    lb = np.linalg.norm(c - a, axis=-1)
    lc = np.linalg.norm(a - b, axis=-1)
    area = np.abs(signed_area(a, b, c))
    lmax = np.maximum(np.maximum(la, lb), lc)
    if np.any(area <= tol * lmax**2) or np.any(lmax == 0):
        raise MeshError("degenerate triangle: inscribed radius undefined")
    return area / (0.5 * (la + lb + lc))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh in the reference configuration.

    Attributes
    ----------
    points : (n, 2) float array
    triangles : (m, 3) int array, counter-clockwise
    vertex_tags : (n,) int array, 0 for interior vertices
    triangle_tags : (m,) int array
    boundary_edges : (k, 2) int array
    edge_tags : (k,) int array
    """

    points: np.ndarray
    triangles: np.ndarray
    vertex_tags: np.ndarray = None
    triangle_tags: np.ndarray = None
    boundary_edges: np.ndarray = None
    edge_tags: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 2)
        tri = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n, m = len(pts), len(tri)
        vt = np.zeros(n, np.int64) if self.vertex_tags is None else np.asarray(self.vertex_tags, np.int64)
        tt = np.zeros(m, np.int64) if self.triangle_tags is None else np.asarray(self.triangle_tags, np.int64)
        if self.boundary_edges is None:
            be = _boundary_edges(tri)
            et = np.zeros(len(be), np.int64)
        else:
            be = np.asarray(self.boundary_edges, np.int64).reshape(-1, 2)
            et = np.zeros(len(be), np.int64) if self.edge_tags is None else np.asarray(self.edge_tags, np.int64)
        if vt.shape != (n,) or tt.shape != (m,) or et.shape != (len(be),):
            raise MeshError("tag arrays do not match entity counts")
        if not np.all(np.isfinite(pts)):
            raise MeshError("non-finite vertex coordinates")
        if m and (tri.min() < 0 or tri.max() >= n):
            raise MeshError("triangle vertex index out of range")
        if np.any((tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])):
            raise MeshError("triangle with repeated vertex")
        for name, arr in (("points", pts), ("triangles", tri), ("vertex_tags", vt),
                          ("triangle_tags", tt), ("boundary_edges", be), ("edge_tags", et)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self, points=None):
        """Triangle corner coordinates, shape ``(m, 3, 2)``."""
        p = self.points if points is None else np.asarray(points, float)
        return p[self.triangles]

    def areas(self, points=None):
        c = self.corners(points)
        return signed_area(c[:, 0], c[:, 1], c[:, 2])

    def edges(self):
        """Unique undirected edges, sorted, shape ``(E, 2)``."""
        if "edges" not in self._cache:
            self._cache["edges"] = build_adjacency(self).edges
        return self._cache["edges"]

    def boundary_vertices(self):
        """Boolean mask of vertices lying on a boundary edge."""
        mask = np.zeros(self.n_vertices, bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    def diameter(self) -> float:
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def with_points(self, points) -> "Mesh":
        """Copy sharing connectivity and tags, with new vertex positions."""
        return Mesh(points, self.triangles, self.vertex_tags, self.triangle_tags,
                    self.boundary_edges, self.edge_tags)

    def topology_hash(self) -> str:
        """Digest of connectivity only (triangles and boundary edges)."""
        h = hashlib.sha256()
        h.update(self.triangles.tobytes())
        h.update(self.boundary_edges.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in
                   ("points", "triangles", "vertex_tags", "triangle_tags", "boundary_edges", "edge_tags"))

    __hash__ = object.__hash__


def _edge_keys(tri):
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    return np.sort(e, axis=1)


def _boundary_edges(tri):
    if len(tri) == 0:
        return np.zeros((0, 2), np.int64)
    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    keys = np.sort(directed, axis=1)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return directed[counts[inv.ravel()] == 1]


@dataclass(frozen=True)
class Adjacency:
    """Vertex/edge/triangle incidence in compressed-row form."""

    edges: np.ndarray
    edge_triangle_count: np.ndarray
    v2v_ptr: np.ndarray
    v2v: np.ndarray
    v2t_ptr: np.ndarray
    v2t: np.ndarray

    def neighbors(self, i):
        return self.v2v[self.v2v_ptr[i]:self.v2v_ptr[i + 1]]

    def triangles_of(self, i):
        return self.v2t[self.v2t_ptr[i]:self.v2t_ptr[i + 1]]

    def degree(self):
        return np.diff(self.v2v_ptr)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.edges, self.v2v_ptr, self.v2v, self.v2t_ptr, self.v2t):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _csr(rows, cols, n):
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    ptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=ptr[1:])
    return ptr, cols


def build_adjacency(mesh: Mesh) -> Adjacency:
    """Build vertex neighbour lists, vertex-triangle lists and unique edges.

    Raises :class:`MeshError` naming the first edge shared by more than two
    triangles, or a declared boundary edge not owned by exactly one triangle.
    """
    tri = mesh.triangles
    n = mesh.n_vertices
    keys = _edge_keys(tri)
    edges, counts = np.unique(keys, axis=0, return_counts=True)
    bad = np.flatnonzero(counts > 2)
    if bad.size:
        a, b = edges[bad[0]]
        raise MeshError(f"non-conforming mesh: edge ({a}, {b}) shared by {counts[bad[0]]} triangles")
    if len(mesh.boundary_edges):
        bkeys = np.sort(mesh.boundary_edges, axis=1)
        idx = _lookup_rows(edges, bkeys)
        owned = np.where(idx >= 0, counts[np.maximum(idx, 0)], 0)
        wrong = np.flatnonzero(owned != 1)
        if wrong.size:
            a, b = mesh.boundary_edges[wrong[0]]
            raise MeshError(f"boundary edge ({a}, {b}) does not belong to exactly one triangle")
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    v2v_ptr, v2v = _csr(rows, cols, n)
    t_rows = tri.ravel()
    t_cols = np.repeat(np.arange(len(tri)), 3)
    v2t_ptr, v2t = _csr(t_rows, t_cols, n)
    return Adjacency(edges, counts, v2v_ptr, v2v, v2t_ptr, v2t)


def _lookup_rows(table, rows):
    """Index of each row of ``rows`` in the lexicographically sorted ``table`` (-1 if absent)."""
    n = max(int(table.max(initial=0)), int(rows.max(initial=0))) + 1
    tk = table[:, 0] * n + table[:, 1]
    rk = rows[:, 0] * n + rows[:, 1]
    pos = np.searchsorted(tk, rk)
    pos = np.minimum(pos, len(tk) - 1)
    return np.where(tk[pos] == rk, pos, -1)


@dataclass
class ValidityReport:
    inverted: np.ndarray
    min_area: float
    max_area: float
    conforming: bool
    message: str = ""

    @property
    def valid(self) -> bool:
        return self.conforming and self.inverted.size == 0


def validate(mesh: Mesh, displacement=None) -> ValidityReport:
    """Check conformity and orientation of the (optionally displaced) mesh."""
    conforming, message = True, ""
    try:
        build_adjacency(mesh)
    except MeshError as exc:
        conforming, message = False, str(exc)
    pts = mesh.points
    if displacement is not None and np.size(displacement):
        d = np.asarray(displacement, float)
        if d.shape != pts.shape:
            raise ValueError(f"displacement shape {d.shape} does not match {pts.shape}")
        pts = pts + d
    area = mesh.areas(pts)
    inverted = np.flatnonzero(area <= 0.0)
    return ValidityReport(inverted, float(area.min(initial=np.inf)), float(area.max(initial=-np.inf)),
                          conforming, message)


def check_duplicates(mesh: Mesh, rel_tol: float = DUPLICATE_TOL) -> np.ndarray:
    """Pairs of vertices closer than ``rel_tol`` times the bounding-box diagonal."""
    from scipy.spatial import cKDTree

    tol = rel_tol * mesh.diameter()
    pairs = cKDTree(mesh.points).query_pairs(tol, output_type="ndarray")
    return pairs


def generate_uniform(domain=(-1.0, 1.0, -1.0, 1.0), target_h: float = 0.1,
                     pattern: str = "alternating") -> Mesh:
    """Structured triangulation of an axis-aligned rectangle.

    ``pattern="alternating"`` splits square cells along one diagonal,
    alternating in a checkerboard; the cell size is chosen so that the
    *average* edge length (two legs plus one diagonal per cell) is close
    to ``target_h``.  ``pattern="equilateral"`` staggers rows of spacing
    ``target_h`` to produce near-equilateral triangles away from the
    left and right sides.

    Boundary tags: 1 bottom, 2 right, 3 top, 4 left.
    """
    if not target_h > 0:
        raise ValueError("target_h must be positive")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain must be (xmin, xmax, ymin, ymax) with positive extent")
    if pattern == "equilateral":
        return _equilateral(x0, x1, y0, y1, target_h)
    if pattern != "alternating":
        raise ValueError(f"unknown pattern {pattern!r}")
    cell = target_h * 3.0 / (2.0 + np.sqrt(2.0))
    nx = max(1, int(round((x1 - x0) / cell)))
    ny = max(1, int(round((y1 - y0) / cell)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    points = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    even = (i + j) % 2 == 0
    # even cells split along v00-v11, odd cells along v10-v01
    t1 = np.where(even[:, None], np.column_stack([v00, v10, v11]), np.column_stack([v00, v10, v01]))
    t2 = np.where(even[:, None], np.column_stack([v00, v11, v01]), np.column_stack([v10, v11, v01]))
    triangles = np.empty((2 * len(v00), 3), np.int64)
    triangles[0::2] = t1
    triangles[1::2] = t2

    vtags = np.zeros(len(points), np.int64)
    jj, ii = np.divmod(np.arange(len(points)), nx + 1)
    vtags[ii == 0] = 4
    vtags[jj == ny] = 3
    vtags[ii == nx] = 2
    vtags[jj == 0] = 1

    bottom = np.column_stack([np.arange(nx), np.arange(1, nx + 1)])
    right = np.column_stack([np.arange(ny) * (nx + 1) + nx, np.arange(1, ny + 1) * (nx + 1) + nx])
    top = np.column_stack([ny * (nx + 1) + np.arange(nx, 0, -1), ny * (nx + 1) + np.arange(nx - 1, -1, -1)])
    left = np.column_stack([np.arange(ny, 0, -1) * (nx + 1), np.arange(ny - 1, -1, -1) * (nx + 1)])
    bedges = np.concatenate([bottom, right, top, left])
    etags = np.repeat([1, 2, 3, 4], [nx, ny, nx, ny])
    return Mesh(points, triangles, vtags, np.ones(len(triangles), np.int64), bedges, etags)


def _equilateral(x0, x1, y0, y1, h):
    nx = max(1, int(round((x1 - x0) / h)))
    ny = max(1, int(round((y1 - y0) / (h * np.sqrt(3.0) / 2.0))))
    dx = (x1 - x0) / nx
    ys = np.linspace(y0, y1, ny + 1)
    rows, pts = [], []
    count = 0
    for j, y in enumerate(ys):
        if j % 2 == 0:
            xs = np.linspace(x0, x1, nx + 1)
        else:
            xs = np.concatenate([[x0], x0 + dx * (np.arange(nx) + 0.5), [x1]])
        rows.append(count + np.arange(len(xs)))
        pts.append(np.column_stack([xs, np.full(len(xs), y)]))
        count += len(xs)
    points = np.concatenate(pts)
    tris = []
    for j in range(ny):
        a, b = rows[j], rows[j + 1]
        xa, xb = points[a, 0], points[b, 0]
        i = k = 0
        while i < len(a) - 1 or k < len(b) - 1:
            if k == len(b) - 1 or (i < len(a) - 1 and xa[i + 1] <= xb[k + 1]):
                tris.append((a[i], a[i + 1], b[k]))
                i += 1
            else:
                tris.append((a[i], b[k + 1], b[k]))
                k += 1
    triangles = np.array(tris, np.int64)

    first = np.array([r[0] for r in rows])
    last = np.array([r[-1] for r in rows])
    bottom = np.column_stack([rows[0][:-1], rows[0][1:]])
    right = np.column_stack([last[:-1], last[1:]])
    top = np.column_stack([rows[-1][::-1][:-1], rows[-1][::-1][1:]])
    left = np.column_stack([first[::-1][:-1], first[::-1][1:]])
    bedges = np.concatenate([bottom, right, top, left])
    etags = np.repeat([1, 2, 3, 4], [len(bottom), len(right), len(top), len(left)])
    vtags = np.zeros(len(points), np.int64)
    vtags[first] = 4
    vtags[rows[-1]] = 3
    vtags[last] = 2
    vtags[rows[0]] = 1
    return Mesh(points, triangles, vtags, np.ones(len(triangles), np.int64), bedges, etags)


def apply_displacement(mesh: Mesh, displacement) -> Mesh:
    """Deformed copy ``xi + delta`` with identical connectivity (validity not checked)."""
    d = np.asarray(displacement, float)
    if d.shape != mesh.points.shape:
        raise ValueError(f"displacement shape {d.shape} does not match {mesh.points.shape}")
    return mesh.with_points(mesh.points + d)


def edge_lengths(mesh: Mesh, points=None, edges=None):
    p = mesh.points if points is None else np.asarray(points, float)
    e = mesh.edges() if edges is None else edges
    return np.linalg.norm(p[e[:, 1]] - p[e[:, 0]], axis=1)

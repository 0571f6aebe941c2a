"""Analytic level-sets, the spiral sizemap, and P1 differential operators."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator
from scipy.spatial import QhullError

from .mesh import Mesh, MeshError, signed_area


@dataclass(frozen=True)
class Circle:
    center: tuple = (0.0, 0.0)
    radius: float = 0.5

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")

    def __call__(self, p):
        p = np.asarray(p, float)
        c = np.asarray(self.center, float)
        return np.linalg.norm(p - c, axis=-1) - self.radius


@dataclass(frozen=True)
class Flower:
    """Polar lobed curve ``r = R0 + A cos(k theta)``; negative inside."""

    center: tuple = (0.0, 0.0)
    base_radius: float = 0.5
    amplitude: float = 0.2
    lobes: int = 4

    def __post_init__(self):
        if not (self.base_radius > self.amplitude >= 0):
            raise ValueError("flower requires base_radius > amplitude >= 0")
        if self.lobes < 1:
            raise ValueError("flower needs at least one lobe")

    def __call__(self, p):
        p = np.asarray(p, float)
        d = p - np.asarray(self.center, float)
        r = np.hypot(d[..., 0], d[..., 1])
        theta = np.arctan2(d[..., 1], d[..., 0])
        return r - (self.base_radius + self.amplitude * np.cos(self.lobes * theta))


@dataclass(frozen=True)
class UserTabulated:
    """Level-set known only at mesh vertices."""

    values: np.ndarray

    def __call__(self, p):
        raise TypeError("tabulated level-set cannot be evaluated at arbitrary points")


def eval_levelset(ls, p):
    return ls(p)


@dataclass(frozen=True)
class SpiralSizemapParams:
    a: float = 0.6
    s: float = 0.5
    offsets: tuple = (0.005, 0.0125)
    base: float = 1.6

    def __post_init__(self):
        if not (self.a > 0 and self.s > 0):
            raise ValueError("spiral parameters a and s must be positive")


def spiral_sizemap(p, params: SpiralSizemapParams = SpiralSizemapParams()):
    """Isotropic size of the double Archimedean spiral at points ``p`` (..., 2)."""
    p = np.asarray(p, float)
    x, y = p[..., 0], p[..., 1]
    phi = np.arctan2(y, x)
    rho = params.s * np.hypot(x, y)
    turns = math.pi * (1.0 + np.floor(rho / (2.0 * math.pi * params.a)))
    theta1 = phi + turns
    theta2 = phi - turns
    h1 = params.base + np.abs(rho - params.a * theta1) + params.offsets[0]
    h2 = params.base + np.abs(rho + params.a * theta2) + params.offsets[1]
    return np.minimum(h1, h2)


def sample(mesh: Mesh, f, points=None) -> np.ndarray:
    """Evaluate a vectorized callable at the mesh vertices."""
    pts = mesh.points if points is None else np.asarray(points, float)
    if isinstance(f, UserTabulated):
        vals = np.asarray(f.values, float)
    else:
        vals = np.asarray(f(pts), float)
    vals = np.broadcast_to(vals, (len(pts),) + vals.shape[1:]).astype(float)
    bad = np.flatnonzero(~np.isfinite(vals.reshape(len(pts), -1)).all(axis=1))
    if bad.size:
        raise ValueError(f"non-finite value at vertex {bad[0]}")
    return vals


def element_gradients(mesh: Mesh, points=None):
    """Gradients of the three barycentric basis functions on each triangle.

    Returns ``(grads, areas)`` with ``grads`` of shape ``(m, 3, 2)``.
    """
    c = mesh.corners(points)
    area = signed_area(c[:, 0], c[:, 1], c[:, 2])
    scale = np.abs(c).max(axis=(1, 2)) + 1.0
    if np.any(np.abs(area) <= 1e-14 * scale**2):
        k = int(np.flatnonzero(np.abs(area) <= 1e-14 * scale**2)[0])
        raise MeshError(f"degenerate triangle {k}")
    # grad(lambda_a) = rot90(opposite edge) / (2 A)
    e0 = c[:, 2] - c[:, 1]
    e1 = c[:, 0] - c[:, 2]
    e2 = c[:, 1] - c[:, 0]
    e = np.stack([e0, e1, e2], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    return grads, area


def scatter_to_vertices(mesh: Mesh, values):
    """Sum per-corner values of shape ``(m, 3, ...)`` onto vertices."""
    values = np.asarray(values, float)
    idx = mesh.triangles.ravel()
    flat = values.reshape(idx.size, -1)
    out = np.empty((mesh.n_vertices, flat.shape[1]))
    for k in range(flat.shape[1]):
        out[:, k] = np.bincount(idx, weights=flat[:, k], minlength=mesh.n_vertices)
    return out.reshape((mesh.n_vertices,) + values.shape[2:])


def p1_gradient(mesh: Mesh, f, points=None):
    """Vertex gradients of the P1 interpolant, area-weighted from elements.

    ``f`` may carry trailing components; the result has shape
    ``f.shape + (2,)``.
    """
    f = np.asarray(f, float)
    if f.shape[0] != mesh.n_vertices:
        raise ValueError("field length does not match vertex count")
    grads, area = element_gradients(mesh, points)
    w = np.abs(area)
    fe = f[mesh.triangles]  # (m, 3, ...)
    ge = np.einsum("ma...,mad->m...d", fe, grads)
    weighted = ge * w.reshape((-1,) + (1,) * (ge.ndim - 1))
    acc = scatter_to_vertices(mesh, np.repeat(weighted[:, None], 3, axis=1))
    wsum = scatter_to_vertices(mesh, np.repeat(w[:, None], 3, axis=1))
    if np.any(wsum == 0):
        raise MeshError(f"isolated vertex {int(np.flatnonzero(wsum == 0)[0])}")
    return acc / wsum.reshape((-1,) + (1,) * (acc.ndim - 1))


def unit_normals(mesh: Mesh, phi, points=None, tol=1e-12):
    """``grad phi / |grad phi|`` at vertices and a mask of vanishing gradients."""
    g = p1_gradient(mesh, phi, points)
    norm = np.linalg.norm(g, axis=1)
    flat = norm <= tol
    n = np.where(flat[:, None], 0.0, g / np.where(flat, 1.0, norm)[:, None])
    return n, flat, norm


def curvature(mesh: Mesh, phi, points=None, kappa_max: float = 100.0):
    """Curvature ``div(grad phi / |grad phi|)`` of the level-set contours, capped.

    Vertices with a vanishing gradient get zero normal; their count is
    reported through a :class:`RuntimeWarning`.
    """
    n, flat, _ = unit_normals(mesh, phi, points)
    dn = p1_gradient(mesh, n, points)  # (n, 2, 2): d n_k / d x_l
    kappa = dn[:, 0, 0] + dn[:, 1, 1]
    kappa[flat] = 0.0
    if flat.any():
        warnings.warn(f"vanishing level-set gradient at {int(flat.sum())} vertices; curvature set to 0",
                      RuntimeWarning, stacklevel=2)
    return np.clip(kappa, -kappa_max, kappa_max)


def crossing_vertices(mesh: Mesh, phi):
    """Vertices of the elements on which ``phi`` changes sign or vanishes."""
    v = np.asarray(phi, float)[mesh.triangles]
    cut = (v.min(axis=1) <= 0) & (v.max(axis=1) >= 0)
    return np.unique(mesh.triangles[cut])


def zero_level_curvature(mesh: Mesh, phi, points=None, kappa_max: float = 100.0):
    """Curvature of the zero contour carried to every vertex.

    Each vertex is projected onto the zero level with one Newton step
    ``y = x - phi grad(phi) / |grad(phi)|^2`` and takes the capped
    :func:`curvature` linearly interpolated at ``y`` from the vertices of
    the cut elements (nearest of them outside their hull).  Falls back to
    the local curvature when ``phi`` has no zero crossing.
    """
    phi = np.asarray(phi, float)
    x = mesh.points if points is None else np.asarray(points, float)
    kappa = curvature(mesh, phi, x, kappa_max)
    on = crossing_vertices(mesh, phi)
    if on.size < 3:
        return kappa
    g = p1_gradient(mesh, phi, x)
    g2 = (g * g).sum(axis=1)
    step = np.where(g2 > 0, phi / np.where(g2 > 0, g2, 1.0), 0.0)
    y = x - step[:, None] * g
    try:
        lin = LinearNDInterpolator(x[on], kappa[on])
    except QhullError:  # collinear cut vertices
        lin = None
    k0 = np.full(len(x), np.nan) if lin is None else lin(y)
    miss = ~np.isfinite(k0)
    if miss.any():
        k0[miss] = NearestNDInterpolator(x[on], kappa[on])(y[miss])
    return k0

"""Anisotropic 2x2 metric tensors.

Tensors are stored as arrays of shape ``(..., 3)`` holding ``(m11, m12, m22)``
so whole metric fields are processed without Python loops.  Every function
here accepts a single tensor (shape ``(3,)``) or a stacked field.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .levelset import p1_gradient
from .mesh import Mesh


class SpectralDecomp2(NamedTuple):
    """Eigenvalues sorted descending and a rotation whose *rows* are eigenvectors.

    The source tensor is ``R.T @ diag(eigenvalues) @ R``.
    """

    eigenvalues: np.ndarray
    rotation: np.ndarray


@dataclass(frozen=True)
class MetricBounds:
    h_min: float
    h_max: float

    def __post_init__(self):
        if not (0 < self.h_min < self.h_max):
            raise ValueError("metric bounds need 0 < h_min < h_max")

    @property
    def lam_min(self):
        return 1.0 / self.h_max**2

    @property
    def lam_max(self):
        return 1.0 / self.h_min**2


def as_tensor(m):
    m = np.asarray(m, float)
    if m.shape[-1] != 3:
        raise ValueError("tensors must have trailing dimension 3 (m11, m12, m22)")
    return m


def to_matrix(m):
    m = as_tensor(m)
    out = np.empty(m.shape[:-1] + (2, 2))
    out[..., 0, 0] = m[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = m[..., 1]
    out[..., 1, 1] = m[..., 2]
    return out


def from_matrix(a):
    a = np.asarray(a, float)
    return np.stack([a[..., 0, 0], 0.5 * (a[..., 0, 1] + a[..., 1, 0]), a[..., 1, 1]], axis=-1)


def isotropic(size):
    size = np.asarray(size, float)
    lam = 1.0 / size**2
    return np.stack([lam, np.zeros_like(lam), lam], axis=-1)


def spectral_decompose(m) -> SpectralDecomp2:
    """Closed-form eigendecomposition of symmetric 2x2 tensors."""
    m = as_tensor(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite tensor entries")
    a, b, c = m[..., 0], m[..., 1], m[..., 2]
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    lam = np.stack([mean + rad, mean - rad], axis=-1)
    theta = 0.5 * np.arctan2(2.0 * b, a - c)
    cs, sn = np.cos(theta), np.sin(theta)
    rot = np.empty(m.shape[:-1] + (2, 2))
    rot[..., 0, 0], rot[..., 0, 1] = cs, sn
    rot[..., 1, 0], rot[..., 1, 1] = -sn, cs
    return SpectralDecomp2(lam, rot)


def compose(eigenvalues, rotation):
    """Inverse of :func:`spectral_decompose`: ``R.T diag(lam) R``."""
    lam = np.asarray(eigenvalues, float)
    r = np.asarray(rotation, float)
    mat = np.einsum("...ki,...k,...kj->...ij", r, lam, r)
    return from_matrix(mat)


def is_spd(m, rtol=0.0):
    m = as_tensor(m)
    det = m[..., 0] * m[..., 2] - m[..., 1] ** 2
    return (m[..., 0] > 0) & (det > rtol * m[..., 0] * m[..., 2])


def recover_hessian(mesh: Mesh, u, points=None):
    """Vertex Hessians by applying area-weighted gradient recovery twice.

    Returns a symmetric tensor field of shape ``(n, 3)``.
    """
    g = p1_gradient(mesh, u, points)
    hg = p1_gradient(mesh, g, points)  # hg[:, k, l] = d g_k / d x_l
    return np.stack([hg[:, 0, 0], 0.5 * (hg[:, 0, 1] + hg[:, 1, 0]), hg[:, 1, 1]], axis=-1)


def physical_metric(hessian, bounds: MetricBounds):
    """Metric from Hessian eigenvalues clamped to ``[1/h_max^2, 1/h_min^2]``."""
    lam, rot = spectral_decompose(hessian)
    lam = np.clip(np.abs(lam), bounds.lam_min, bounds.lam_max)
    return compose(lam, rot)


def levelset_metric(mesh: Mesh, phi, eps: float, band_width: float, bounds: MetricBounds,
                    gradation: float = 1.0, points=None):
    """Metric resolving the zero iso-line of ``phi`` to accuracy ``eps``.

    Inside ``|phi| <= band_width`` the normal size is ``eps`` and the
    tangential eigenvalue is ``|kappa_t| / eps`` with ``kappa_t`` the
    Hessian of ``phi`` along the tangent.  Outside, the size is isotropic
    and grows linearly with slope ``gradation`` from ``eps`` at the band
    edge up to ``h_max``.  All eigenvalues are clamped to ``bounds``.
    """
    if not (eps > 0 and band_width > 0):
        raise ValueError("eps and band_width must be positive")
    phi = np.asarray(phi, float)
    grad = p1_gradient(mesh, phi, points)
    gnorm = np.linalg.norm(grad, axis=1)
    hess = to_matrix(recover_hessian(mesh, phi, points))
    flat = gnorm <= 1e-12
    nrm = grad / np.where(flat, 1.0, gnorm)[:, None]
    tan = np.stack([-nrm[:, 1], nrm[:, 0]], axis=1)
    lam_t = np.einsum("ni,nij,nj->n", tan, hess, tan)

    lam_n = np.full(len(phi), 1.0 / eps**2)
    lam_tan = np.maximum(np.abs(lam_t) / eps, bounds.lam_min)
    rot = np.stack([nrm, tan], axis=1)
    lam = np.clip(np.stack([lam_n, lam_tan], axis=1), bounds.lam_min, bounds.lam_max)
    inside = compose(lam, rot)

    band = np.abs(phi) <= band_width
    degenerate = band & flat
    if degenerate.any():
        warnings.warn(f"vanishing level-set gradient at {int(degenerate.sum())} banded vertices; "
                      "isotropic fallback used", RuntimeWarning, stacklevel=2)
        lam_iso = np.clip(1.0 / eps**2, bounds.lam_min, bounds.lam_max)
        inside[degenerate] = [lam_iso, 0.0, lam_iso]

    size = np.minimum(eps + gradation * (np.abs(phi) - band_width), bounds.h_max)
    size = np.clip(size, bounds.h_min, bounds.h_max)
    outside = isotropic(size)
    return np.where(band[:, None], inside, outside)


def intersect(m1, m2):
    """Metric intersection by simultaneous reduction.

    The pencil ``(m2, m1)`` is reduced through ``m1^(-1/2)`` built from the
    orthogonal eigenbasis of ``m1``: ``S = m1^(-1/2) m2 m1^(-1/2)`` is
    symmetric, its eigenvalues are the roots of ``det(m2 - mu m1) = 0`` and
    its eigenvectors diagonalize both metrics.  In that basis each
    generalized eigenvalue is replaced by ``max(1, mu)``, i.e. the larger
    of the two metrics per direction.

    Since ``max(1, mu) = mu + max(0, 1 - mu)`` the result is assembled as
    ``m2 + m1^(1/2) (I - S)_+ m1^(1/2)``: ``m2`` enters unrounded and only
    the positive semi-definite correction carries the rounding of ``S``.
    """
    m1 = as_tensor(m1)
    m2 = as_tensor(m2)
    if not (np.all(is_spd(m1)) and np.all(is_spd(m2))):
        raise ValueError("metric intersection requires SPD tensors")
    m1, m2 = np.broadcast_arrays(m1, m2)
    lam, rot = spectral_decompose(m1)
    root = np.sqrt(lam)
    outer = root[..., :, None] * root[..., None, :]
    # m2 in the eigenbasis of m1, then scaled to S
    s = np.einsum("...ik,...kl,...jl->...ij", rot, to_matrix(m2), rot) / outer
    mu, q = spectral_decompose(from_matrix(s))
    gap = to_matrix(compose(np.maximum(1.0 - mu, 0.0), q)) * outer
    return m2 + from_matrix(np.einsum("...ki,...kl,...lj->...ij", rot, gap, rot))


def metric_edge_length(pa, pb, ma, mb):
    """Length of edge ``ab`` in a metric varying between its endpoints.

    Log-mean of the endpoint lengths ``la = sqrt(e.Ma e)`` and
    ``lb = sqrt(e.Mb e)``.
    """
    e = np.asarray(pb, float) - np.asarray(pa, float)
    ma, mb = as_tensor(ma), as_tensor(mb)

    def quad(m):
        return m[..., 0] * e[..., 0] ** 2 + 2 * m[..., 1] * e[..., 0] * e[..., 1] + m[..., 2] * e[..., 1] ** 2

    la = np.sqrt(np.maximum(quad(ma), 0.0))
    lb = np.sqrt(np.maximum(quad(mb), 0.0))
    big = np.maximum(la, lb)
    close = np.abs(la - lb) <= 1e-12 * big
    with np.errstate(divide="ignore", invalid="ignore"):
        logmean = (la - lb) / np.log(la / lb)
    out = np.where(close, la, logmean)
    return np.where(big == 0, 0.0, out)


def _logm(m):
    lam, rot = spectral_decompose(m)
    if np.any(lam[..., 1] <= 0):
        raise ValueError("log of a non-SPD tensor")
    return compose(np.log(lam), rot)


def _expm(m):
    lam, rot = spectral_decompose(m)
    return compose(np.exp(lam), rot)


def interpolate_metric(corner_metrics, weights):
    """Log-Euclidean interpolation ``exp(sum w_i log M_i)``.

    ``corner_metrics`` has shape ``(k, ..., 3)`` and ``weights`` shape
    ``(k,)``, nonnegative and summing to one.
    """
    w = np.asarray(weights, float)
    if np.any(w < -1e-14) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to 1")
    logs = _logm(np.asarray(corner_metrics, float))
    return _expm(np.tensordot(w, logs, axes=(0, 0)))

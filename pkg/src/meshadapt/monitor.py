"""Monitor functions: per-vertex stiffness weights driving the mesh mover.

Scalar formulas are plain vectorized numpy functions.  The parameter classes
bundle their parameters and :func:`build_monitor_field` evaluates one of
them on a mesh at the current vertex positions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

from .levelset import curvature, p1_gradient, zero_level_curvature
from .mesh import Mesh
from .metric import recover_hessian

OMEGA_FLOOR = 1e-6


def omega_gb(phi, alpha0, alpha_phi, beta_phi):
    """Gradient-based level-set monitor ``sqrt(a0 + a_phi exp(-b_phi phi^2))``."""
    phi = np.asarray(phi, float)
    return np.sqrt(alpha0 + alpha_phi * np.exp(-beta_phi * phi**2))


def omega_pc(phi, thresholds, levels):
    """Piecewise-constant monitor on ``|phi|``.

    ``levels[0]`` on ``[0, thresholds[0]]``, ``levels[j]`` on
    ``(thresholds[j-1], thresholds[j]]`` and ``levels[-1]`` beyond the
    last threshold.
    """
    thresholds = np.asarray(thresholds, float)
    levels = np.asarray(levels, float)
    if len(levels) != len(thresholds) + 1:
        raise ValueError("need exactly one more level than thresholds")
    idx = np.searchsorted(thresholds, np.abs(np.asarray(phi, float)), side="left")
    return levels[idx]


def capped_gradient(grad_norm, beta_u, grad_ref):
    """``min(1, |grad| / (beta_u * grad_ref))``."""
    if not (beta_u > 0 and grad_ref > 0):
        raise ValueError("beta_u and grad_ref must be positive")
    return np.minimum(1.0, np.asarray(grad_norm, float) / (beta_u * grad_ref))


def omega_solution(capped, alpha_u):
    return np.sqrt(1.0 + alpha_u * np.asarray(capped, float) ** 2)


def omega_combined(phi, omega_phi, omega_u, eps):
    """Level-set monitor inside ``|phi| <= eps``, the larger of both outside."""
    phi = np.asarray(phi, float)
    return np.where(np.abs(phi) <= eps, omega_phi, np.maximum(omega_phi, omega_u))


def regularized_heaviside(H, eps_H):
    """Wet/dry indicator with a linear ramp on ``0 < H <= eps_H``."""
    H = np.asarray(H, float)
    if np.any(H < 0):
        raise ValueError("negative water depth; clip dry states before calling")
    return np.where(H > eps_H, 1.0, H / eps_H)


def omega_shoreline(capped_eta, grad_phiH_norm, alpha_eta, alpha_dry):
    return np.sqrt(1.0 + alpha_eta * np.asarray(capped_eta, float) ** 2
                   + alpha_dry * np.asarray(grad_phiH_norm, float) ** 2)


def omega_general(u, grad_norm, hess_norm, alpha, beta, gamma, p=1.0):
    """``(1 + alpha u + beta |grad u| + gamma |H(u)|)^p``."""
    base = 1.0 + alpha * np.asarray(u, float) + beta * np.asarray(grad_norm, float) \
        + gamma * np.asarray(hess_norm, float)
    return np.maximum(base, 0.0) ** p


# --- specs -----------------------------------------------------------------

@dataclass(frozen=True)
class General:
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0 or self.p < 1:
            raise ValueError("general monitor needs alpha, beta, gamma >= 0 and p >= 1")


@dataclass(frozen=True)
class GradientBased:
    """``alpha0`` is a constant, or ``alpha0 * |kappa|`` when ``curvature_scaled``.

    ``curvature_source`` selects ``kappa``: ``"local"`` is the curvature of
    the contour through each vertex, ``"zero-level"`` the curvature of the
    zero contour at the nearest point on it.  The zero contour of a fixed
    level-set does not move with the mesh, so the zero-level field is
    computed once on the reference positions and interpolated to the
    current ones.
    """

    alpha0: float = 1.0
    alpha_phi: float = 40.0
    beta_phi: float = 300.0
    curvature_scaled: bool = False
    alpha0_floor: float = 0.1
    kappa_max: float = 100.0
    curvature_source: str = "local"

    def __post_init__(self):
        if self.curvature_source not in ("local", "zero-level"):
            raise ValueError("curvature_source must be 'local' or 'zero-level'")
        if min(self.alpha0, self.alpha_phi, self.beta_phi) < 0:
            raise ValueError("gradient-based monitor parameters must be nonnegative")
        if not self.curvature_scaled and self.alpha0 + self.alpha_phi <= 0:
            raise ValueError("alpha0 + alpha_phi must be positive")


@dataclass(frozen=True)
class PiecewiseConstant:
    thresholds: tuple = (0.05, 1.0, 1.75)
    levels: tuple = (225.0, 90.0, 70.0, 20.0)

    def __post_init__(self):
        t = np.asarray(self.thresholds, float)
        if len(self.levels) != len(t) + 1:
            raise ValueError("need exactly one more level than thresholds")
        if np.any(np.diff(t) <= 0) or np.any(t <= 0):
            raise ValueError("thresholds must be positive and strictly increasing")
        if min(self.levels) <= 0:
            raise ValueError("levels must be positive")


@dataclass(frozen=True)
class Solution:
    """Capped-gradient solution monitor.

    ``grad_ref=None`` takes the maximum gradient norm over the mesh.
    """

    alpha_u: float = 1.0
    beta_u: float = 1.0
    grad_ref: Optional[float] = None
    freeze_reference: bool = False

    def __post_init__(self):
        if self.alpha_u < 0 or self.beta_u <= 0:
            raise ValueError("solution monitor needs alpha_u >= 0 and beta_u > 0")


@dataclass(frozen=True)
class Combined:
    eps: float
    inner: Union[GradientBased, PiecewiseConstant]
    outer: Solution

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("combined monitor band eps must be positive")


@dataclass(frozen=True)
class Shoreline:
    eps_H: float = 1e-3
    alpha_eta: float = 1.0
    alpha_dry: float = 1.0
    beta_eta: float = 1.0
    grad_ref: Optional[float] = None

    def __post_init__(self):
        if self.eps_H <= 0 or self.alpha_eta < 0 or self.alpha_dry < 0 or self.beta_eta <= 0:
            raise ValueError("invalid shoreline monitor parameters")


MonitorSpec = Union[General, GradientBased, PiecewiseConstant, Solution, Combined, Shoreline]

REQUIRED_FIELDS = {
    General: ("u",),
    GradientBased: ("phi",),
    PiecewiseConstant: ("phi",),
    Solution: ("u",),
    Combined: ("phi", "u"),
    Shoreline: ("H", "eta"),
}


def _field(mesh, fields, name, points):
    if name not in fields or fields[name] is None:
        raise KeyError(f"monitor requires field '{name}'")
    f = fields[name]
    if callable(f):
        vals = np.asarray(f(points), float)
    else:
        vals = np.asarray(f, float)
    if vals.shape != (mesh.n_vertices,):
        raise ValueError(f"field '{name}' must have one value per vertex")
    return vals


def _reference(norms, given):
    ref = float(norms.max()) if given is None else float(given)
    return ref if ref > 0 else 1.0


def _zero_level_kappa(mesh, f, x, kappa_max, state):
    """Zero-contour curvature from the reference configuration, cached in ``state``."""
    key = ("kappa0", kappa_max)
    if key not in state:
        phi0 = _field(mesh, {"phi": f}, "phi", mesh.points)
        k0 = zero_level_curvature(mesh, phi0, mesh.points, kappa_max)
        # tabulated values travel with their vertices; callables are fields in space
        interp = (LinearNDInterpolator(mesh.points, k0), NearestNDInterpolator(mesh.points, k0)) \
            if callable(f) else None
        state[key] = (k0, interp)
    k0, interp = state[key]
    if interp is None:
        return k0
    k = interp[0](x)
    miss = ~np.isfinite(k)
    if miss.any():
        k[miss] = interp[1](x[miss])
    return k


def build_monitor_field(mesh: Mesh, spec: MonitorSpec, fields: dict, points=None,
                        state: Optional[dict] = None):
    """Evaluate ``spec`` on ``mesh`` at ``points`` (defaults to the reference positions).

    ``fields`` maps ``phi``, ``u``, ``H`` and ``eta`` to per-vertex arrays
    or to vectorized callables of position, which are re-evaluated at
    ``points``.  Gradients are taken in the current configuration.
    ``state`` is an optional dict used to freeze reference gradients
    across calls.
    """
    x = mesh.points if points is None else np.asarray(points, float)
    state = {} if state is None else state
    for name in REQUIRED_FIELDS[type(spec)]:
        if name not in fields or fields[name] is None:
            raise KeyError(f"monitor requires field '{name}'")

    def level_part(s):
        phi = _field(mesh, fields, "phi", x)
        if isinstance(s, PiecewiseConstant):
            return omega_pc(phi, s.thresholds, s.levels)
        if s.curvature_scaled:
            if s.curvature_source == "local":
                kappa = curvature(mesh, phi, x, s.kappa_max)
            else:
                kappa = _zero_level_kappa(mesh, fields["phi"], x, s.kappa_max, state)
            a0 = np.maximum(s.alpha0 * np.abs(kappa), s.alpha0_floor)
        else:
            a0 = s.alpha0
        return omega_gb(phi, a0, s.alpha_phi, s.beta_phi)

    def solution_part(s):
        u = _field(mesh, fields, "u", x)
        gn = np.linalg.norm(p1_gradient(mesh, u, x), axis=1)
        if s.freeze_reference and "grad_ref_u" in state:
            ref = state["grad_ref_u"]
        else:
            ref = _reference(gn, s.grad_ref)
            state["grad_ref_u"] = ref
        return omega_solution(capped_gradient(gn, s.beta_u, ref), s.alpha_u)

    if isinstance(spec, (GradientBased, PiecewiseConstant)):
        w = level_part(spec)
    elif isinstance(spec, Solution):
        w = solution_part(spec)
    elif isinstance(spec, Combined):
        phi = _field(mesh, fields, "phi", x)
        w = omega_combined(phi, level_part(spec.inner), solution_part(spec.outer), spec.eps)
    elif isinstance(spec, Shoreline):
        H = np.maximum(_field(mesh, fields, "H", x), 0.0)
        eta = _field(mesh, fields, "eta", x)
        ge = np.linalg.norm(p1_gradient(mesh, eta, x), axis=1)
        capped = capped_gradient(ge, spec.beta_eta, _reference(ge, spec.grad_ref))
        gh = np.linalg.norm(p1_gradient(mesh, regularized_heaviside(H, spec.eps_H), x), axis=1)
        w = omega_shoreline(capped, gh, spec.alpha_eta, spec.alpha_dry)
    elif isinstance(spec, General):
        u = _field(mesh, fields, "u", x)
        gn = np.linalg.norm(p1_gradient(mesh, u, x), axis=1)
        h = recover_hessian(mesh, u, x)
        hn = np.sqrt(h[:, 0] ** 2 + 2 * h[:, 1] ** 2 + h[:, 2] ** 2)
        w = omega_general(u, gn, hn, spec.alpha, spec.beta, spec.gamma, spec.p)
    else:
        raise TypeError(f"unknown monitor spec {spec!r}")
    w = np.broadcast_to(np.asarray(w, float), (mesh.n_vertices,)).copy()
    if not np.all(np.isfinite(w)):
        raise ValueError("monitor produced non-finite values")
    return np.maximum(w, OMEGA_FLOOR)

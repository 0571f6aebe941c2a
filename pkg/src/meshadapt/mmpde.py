"""Moving-mesh PDE solver (r-adaptation).

The displacement ``delta = x - xi`` solves, on the reference mesh,

    -div sigma(delta) = div(omega Id)

with either a monitor-weighted Laplacian closure or linear elasticity.
Both are discretized with P1 elements and relaxed with simultaneous block
Jacobi sweeps.  Degrees of freedom are interleaved: ``2*i + k`` is
component ``k`` of vertex ``i``.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .levelset import element_gradients
from .mesh import Mesh, apply_displacement, build_adjacency
from .monitor import MonitorSpec, build_monitor_field

log = logging.getLogger(__name__)

DIAG_COLUMNS = ("iteration", "residual", "residual_ratio", "min_signed_area", "inversions", "wall_ms")


class SolverError(RuntimeError):
    """Unrecoverable solver failure; ``state`` holds the last valid displacement."""

    def __init__(self, message, state=None, diagnostics=None):
        super().__init__(message)
        self.state = state
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Laplacian:
    pass


@dataclass(frozen=True)
class Elasticity:
    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not (self.mu > 0 and self.lam >= 0):
            raise ValueError("elasticity needs mu > 0 and lambda >= 0")


Closure = Union[Laplacian, Elasticity]


@dataclass(frozen=True)
class SolverConfig:
    closure: Closure = Laplacian()
    max_outer_iters: int = 5000
    jacobi_sweeps_per_outer: int = 1
    residual_drop: float = 1e-3
    step_limiter: float = 1.0
    safeguard: str = "reject-and-halve"
    max_halvings: int = 10
    clamp_fraction: float = 0.3
    tau: float = 0.0
    boundary: str = "dirichlet"

    def __post_init__(self):
        if not (0 < self.residual_drop < 1):
            raise ValueError("residual_drop must lie in (0, 1)")
        if self.max_outer_iters < 1 or self.jacobi_sweeps_per_outer < 1:
            raise ValueError("iteration counts must be >= 1")
        if not (0 < self.step_limiter <= 1):
            raise ValueError("step_limiter must lie in (0, 1]")
        if self.safeguard not in ("reject-and-halve", "clamp"):
            raise ValueError("safeguard must be 'reject-and-halve' or 'clamp'")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.boundary not in ("dirichlet", "slip"):
            raise ValueError("boundary must be 'dirichlet' or 'slip'")


@dataclass
class AssembledSystem:
    """Stiffness matrix and per-vertex force ``(n, 2)``.

    ``matrix`` is either the full interleaved ``(2n, 2n)`` operator or, when
    ``scalar`` is set, an ``(n, n)`` matrix ``L`` with ``K = L (x) I2``.
    """

    matrix: sp.csr_matrix
    force: np.ndarray
    scalar: bool = False

    @property
    def n_vertices(self):
        return self.force.shape[0]

    def full_matrix(self):
        if self.scalar:
            return sp.kron(self.matrix, sp.identity(2), format="csr")
        return self.matrix

    def diagonal_blocks(self):
        blocks = np.zeros((self.n_vertices, 2, 2))
        if self.scalar:
            d = self.matrix.diagonal()
            blocks[:, 0, 0] = blocks[:, 1, 1] = d
            return blocks
        d = self.matrix.diagonal().reshape(-1, 2)
        off = self.matrix.diagonal(1)[0::2]
        blocks[:, 0, 0] = d[:, 0]
        blocks[:, 1, 1] = d[:, 1]
        blocks[:, 0, 1] = blocks[:, 1, 0] = off
        return blocks

    def apply(self, delta):
        """``K delta`` per vertex."""
        delta = np.asarray(delta, float)
        if self.scalar:
            return self.matrix @ delta
        return (self.matrix @ delta.ravel()).reshape(-1, 2)

    def residual(self, delta):
        """``K delta - F`` per vertex."""
        return self.apply(delta) - self.force


class _Pattern:
    """Fixed CSR sparsity of a P1 operator with ``block`` dofs per vertex."""

    def __init__(self, triangles, n, block):
        dofs = (block * triangles[:, :, None] + np.arange(block)).reshape(len(triangles), -1)
        k = dofs.shape[1]
        rows = np.repeat(dofs, k, axis=1).ravel()
        cols = np.tile(dofs, (1, k)).ravel()
        size = block * n
        uniq, inv = np.unique(rows * size + cols, return_inverse=True)
        r, c = np.divmod(uniq, size)
        self.inv = inv.ravel()
        self.nnz = len(uniq)
        self.indptr = np.zeros(size + 1, np.int64)
        np.cumsum(np.bincount(r, minlength=size), out=self.indptr[1:])
        self.indices = c.astype(np.int64)
        self.shape = (size, size)

    def build(self, local):
        data = np.bincount(self.inv, weights=np.asarray(local).ravel(), minlength=self.nnz)
        mat = sp.csr_matrix(self.shape)
        mat.indptr, mat.indices, mat.data = self.indptr, self.indices, data
        mat.has_sorted_indices = True
        return mat


@dataclass
class Constraints:
    """Per-dof fixed mask and prescribed values, both shaped ``(n, 2)``."""

    fixed: np.ndarray
    values: np.ndarray

    @classmethod
    def none(cls, n):
        return cls(np.zeros((n, 2), bool), np.zeros((n, 2)))

    def apply(self, delta):
        out = np.array(delta, float)
        out[self.fixed] = self.values[self.fixed]
        return out


def boundary_constraints(mesh: Mesh, mode: str = "dirichlet", values=None) -> Constraints:
    """Constraints on boundary vertices.

    ``dirichlet`` fixes both components.  ``slip`` fixes only the normal
    component on straight axis-aligned sides and both at corners.
    """
    n = mesh.n_vertices
    vals = np.zeros((n, 2)) if values is None else np.asarray(values, float).copy()
    fixed = np.zeros((n, 2), bool)
    on_bdry = mesh.boundary_vertices()
    if mode == "dirichlet":
        fixed[on_bdry] = True
        return Constraints(fixed, vals)
    if mode != "slip":
        raise ValueError(f"unknown boundary mode {mode!r}")
    be = mesh.boundary_edges
    d = mesh.points[be[:, 1]] - mesh.points[be[:, 0]]
    scale = np.linalg.norm(d, axis=1)
    horiz = np.abs(d[:, 1]) <= 1e-12 * scale
    vert = np.abs(d[:, 0]) <= 1e-12 * scale
    for k, direction in ((1, horiz), (0, vert)):
        fixed[be[direction].ravel(), k] = True
    # vertices on slanted edges cannot slip along an axis
    other = ~(horiz | vert)
    fixed[be[other].ravel()] = True
    return Constraints(fixed, vals)


class Assembler:
    """Caches reference-element geometry and sparsity patterns.

    The reference mesh is fixed, so between assemblies only the monitor
    values change; matrix data is rebuilt with one ``bincount``.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        grads, area = element_gradients(mesh)
        if np.any(area <= 0):
            raise ValueError("reference mesh has non-positive element areas")
        self.grads = grads
        self.area = area
        self._scalar = _Pattern(mesh.triangles, mesh.n_vertices, 1)
        self._vector = None
        self.laplace_local = area[:, None, None] * np.einsum("mad,mbd->mab", grads, grads)
        # integral of grad(phi_a) over the element
        self.force_local = area[:, None, None] * grads
        self._elastic_cache = {}

    def element_omega(self, omega):
        omega = np.asarray(omega, float)
        if omega.shape != (self.mesh.n_vertices,):
            raise ValueError("monitor field must have one value per vertex")
        if np.any(omega <= 0):
            raise ValueError("monitor values must be positive")
        return omega[self.mesh.triangles].mean(axis=1)

    def force(self, omega):
        """``F_i = -sum_K omega_K int_K grad(phi_i)``, shape ``(n, 2)``."""
        return self._force(self.element_omega(omega))

    def _force(self, wk):
        local = -wk[:, None, None] * self.force_local
        idx = self.mesh.triangles.ravel()
        n = self.mesh.n_vertices
        flat = local.reshape(-1, 2)
        return np.column_stack([np.bincount(idx, weights=flat[:, k], minlength=n) for k in range(2)])

    def laplacian(self, omega) -> AssembledSystem:
        wk = self.element_omega(omega)
        mat = self._scalar.build(wk[:, None, None] * self.laplace_local)
        return AssembledSystem(mat, self._force(wk), scalar=True)

    def elasticity_matrix(self, mu, lam):
        key = (float(mu), float(lam))
        if key not in self._elastic_cache:
            if self._vector is None:
                self._vector = _Pattern(self.mesh.triangles, self.mesh.n_vertices, 2)
            g = self.grads
            m = len(g)
            # strain-displacement rows: exx, eyy, 2exy; columns interleaved (a, k)
            B = np.zeros((m, 3, 6))
            B[:, 0, 0::2] = g[:, :, 0]
            B[:, 1, 1::2] = g[:, :, 1]
            B[:, 2, 0::2] = g[:, :, 1]
            B[:, 2, 1::2] = g[:, :, 0]
            C = np.array([[2 * mu + lam, lam, 0.0], [lam, 2 * mu + lam, 0.0], [0.0, 0.0, mu]])
            local = self.area[:, None, None] * np.einsum("mip,ij,mjq->mpq", B, C, B)
            self._elastic_cache[key] = self._vector.build(local)
        return self._elastic_cache[key]

    def elasticity(self, mu, lam, omega) -> AssembledSystem:
        return AssembledSystem(self.elasticity_matrix(mu, lam), self.force(omega))

    def lumped_mass(self):
        return np.bincount(self.mesh.triangles.ravel(), weights=np.repeat(self.area / 3.0, 3),
                           minlength=self.mesh.n_vertices)


def assemble_laplacian(ref_mesh: Mesh, omega) -> AssembledSystem:
    return Assembler(ref_mesh).laplacian(omega)


def assemble_elasticity(ref_mesh: Mesh, mu, lam, omega) -> AssembledSystem:
    if not (mu > 0 and lam >= 0):
        raise ValueError("elasticity needs mu > 0 and lambda >= 0")
    return Assembler(ref_mesh).elasticity(mu, lam, omega)


def inverse_diagonal_blocks(system: AssembledSystem, constraints: Constraints, extra_diag=None):
    """Inverse of each vertex's 2x2 block restricted to its free components."""
    blocks = system.diagonal_blocks()
    if extra_diag is not None:
        blocks = blocks + extra_diag[:, None, None] * np.eye(2)
    free = ~constraints.fixed
    both = free.all(axis=1)
    one = free.any(axis=1) & ~both
    inv = np.zeros_like(blocks)
    if both.any():
        b = blocks[both]
        det = b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]
        bad = np.abs(det) <= 1e-300
        if bad.any():
            vid = int(np.flatnonzero(both)[np.flatnonzero(bad)[0]])
            raise SolverError(f"singular diagonal block at vertex {vid}")
        inv[both, 0, 0] = b[:, 1, 1] / det
        inv[both, 1, 1] = b[:, 0, 0] / det
        inv[both, 0, 1] = -b[:, 0, 1] / det
        inv[both, 1, 0] = -b[:, 1, 0] / det
    if one.any():
        ids = np.flatnonzero(one)
        k = np.argmax(free[ids], axis=1)
        d = blocks[ids, k, k]
        if np.any(d == 0):
            raise SolverError(f"singular diagonal entry at vertex {int(ids[np.flatnonzero(d == 0)[0]])}")
        inv[ids, k, k] = 1.0 / d
    return inv


def jacobi_sweep(system: AssembledSystem, delta, constraints: Optional[Constraints] = None,
                 step: float = 1.0, inv_blocks=None):
    """One simultaneous block-Jacobi update.

    ``delta_i <- delta_i - step * K_ii^-1 (sum_j K_ij delta_j - F_i)`` on
    free components; constrained components keep their prescribed value.
    """
    delta = np.asarray(delta, float)
    if constraints is None:
        constraints = Constraints.none(len(delta))
    if inv_blocks is None:
        inv_blocks = inverse_diagonal_blocks(system, constraints)
    delta = constraints.apply(delta)
    r = system.residual(delta)
    out = delta - step * np.einsum("nij,nj->ni", inv_blocks, r)
    return constraints.apply(out)


@dataclass
class Diagnostics:
    rows: list = field(default_factory=list)
    converged: bool = False
    inversions: int = 0
    wall_time: float = 0.0
    outer_iterations: int = 0

    @property
    def residuals(self):
        return np.array([r["residual"] for r in self.rows])

    def write_csv(self, path, timings=True):
        """Write the per-iteration rows; ``timings=False`` writes ``wall_ms`` as 0
        so that repeated runs give identical files."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIAG_COLUMNS)
            for r in self.rows:
                w.writerow([r["iteration"], repr(r["residual"]), repr(r["residual_ratio"]),
                            repr(r["min_signed_area"]), r["inversions"], f"{r['wall_ms'] if timings else 0.0:.3f}"])


@dataclass
class SolveResult:
    displacement: np.ndarray
    diagnostics: Diagnostics
    monitor: np.ndarray

    @property
    def converged(self):
        return self.diagnostics.converged


def _clamp_increments(mesh, delta, trial, fraction, adjacency):
    x = mesh.points + delta
    e = adjacency.edges
    le = np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)
    hmin = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(hmin, e[:, 0], le)
    np.minimum.at(hmin, e[:, 1], le)
    inc = trial - delta
    norm = np.linalg.norm(inc, axis=1)
    limit = fraction * hmin
    scale = np.where(norm > limit, limit / np.where(norm > 0, norm, 1.0), 1.0)
    return delta + inc * scale[:, None]


def solve(ref_mesh: Mesh, spec: MonitorSpec, fields: dict, config: SolverConfig = SolverConfig(),
          constraints: Optional[Constraints] = None, initial=None, freeze_monitor: bool = False,
          diag_path=None) -> SolveResult:
    """Relax the mesh PDE until the displacement increment has dropped by
    ``config.residual_drop`` relative to the first iteration.

    Each outer iteration evaluates the monitor at the current positions,
    reassembles (the stiffness only for the Laplacian closure), runs
    ``jacobi_sweeps_per_outer`` damped sweeps and checks the deformed mesh
    for inverted elements.  Inverted trials are rejected and retried with
    half the step (``clamp`` additionally limits each vertex move to a
    fraction of its shortest incident edge).
    """
    t0 = time.perf_counter()
    n = ref_mesh.n_vertices
    asm = Assembler(ref_mesh)
    adjacency = build_adjacency(ref_mesh)
    if constraints is None:
        constraints = boundary_constraints(ref_mesh, config.boundary)
    delta = constraints.apply(np.zeros((n, 2)) if initial is None else initial)
    if not np.all(ref_mesh.areas(ref_mesh.points + delta) > 0):
        raise SolverError("initial displacement produces inverted elements", state=delta)
    extra = config.tau * asm.lumped_mass() if config.tau > 0 else None
    closure = config.closure
    diag = Diagnostics()
    monitor_state: dict = {}
    omega = None
    first = None
    for it in range(1, config.max_outer_iters + 1):
        x = ref_mesh.points + delta
        if omega is None or not freeze_monitor:
            omega = build_monitor_field(ref_mesh, spec, fields, x, monitor_state)
        if isinstance(closure, Laplacian):
            system = asm.laplacian(omega)
        else:
            system = asm.elasticity(closure.mu, closure.lam, omega)
        if it == 1 or isinstance(closure, Laplacian) or extra is not None:
            inv_blocks = inverse_diagonal_blocks(system, constraints, extra)
        step = config.step_limiter
        rejected = 0
        for _ in range(config.max_halvings + 1):
            trial = delta
            for _ in range(config.jacobi_sweeps_per_outer):
                trial = jacobi_sweep(system, trial, constraints, step, inv_blocks)
            if config.safeguard == "clamp":
                trial = constraints.apply(_clamp_increments(ref_mesh, delta, trial,
                                                            config.clamp_fraction, adjacency))
            areas = ref_mesh.areas(ref_mesh.points + trial)
            if np.all(areas > 0):
                break
            rejected += 1
            step *= 0.5
        else:
            diag.inversions += rejected
            diag.wall_time = time.perf_counter() - t0
            if diag_path is not None:
                diag.write_csv(diag_path)
            raise SolverError(f"inversion safeguard exhausted at iteration {it}", state=delta,
                              diagnostics=diag)
        diag.inversions += rejected
        increment = float(np.linalg.norm(trial - delta))
        if first is None:
            first = increment
        ratio = increment / first if first > 0 else 0.0
        delta = trial
        diag.rows.append(dict(iteration=it, residual=increment, residual_ratio=ratio,
                              min_signed_area=float(areas.min()), inversions=rejected,
                              wall_ms=1e3 * (time.perf_counter() - t0)))
        diag.outer_iterations = it
        if first == 0.0 or ratio <= config.residual_drop:
            diag.converged = True
            break
    diag.wall_time = time.perf_counter() - t0
    if not diag.converged:
        log.warning("mesh PDE not converged after %d iterations (ratio %.3g)", diag.outer_iterations,
                    diag.rows[-1]["residual_ratio"])
    if diag_path is not None:
        diag.write_csv(diag_path)
    return SolveResult(delta, diag, omega)


__all__ = [
    "Assembler", "AssembledSystem", "Closure", "Constraints", "Diagnostics", "Elasticity", "Laplacian",
    "SolveResult", "SolverConfig", "SolverError", "apply_displacement", "assemble_elasticity",
    "assemble_laplacian", "boundary_constraints", "inverse_diagonal_blocks", "jacobi_sweep", "solve",
]

"""Mesh quality measures and narrow-band statistics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

import numpy as np

from .mesh import Mesh, MeshError, inscribed_radius, signed_area
from .metric import metric_edge_length

ISO_BETA = math.sqrt(3.0) / 12.0
DEFAULT_BINS = (0.0, 0.3, 0.6, 0.7, 0.9, 1.3, 1.41, 2.0, 5.0, math.inf)


def iso_quality_2d(a, b, c, tol=1e-14):
    """``beta * sum(L_j^2) / area`` with ``beta = sqrt(3)/12``; 1 for equilateral.

    Vectorized over leading dimensions.  Orientation is ignored.
    """
    a, b, c = (np.asarray(v, float) for v in (a, b, c))
    area = np.abs(signed_area(a, b, c))
    l2 = ((b - a) ** 2).sum(-1) + ((c - b) ** 2).sum(-1) + ((a - c) ** 2).sum(-1)
    if np.any(area <= tol * l2):
        raise MeshError("degenerate triangle has no isotropic quality")
    return ISO_BETA * l2 / area


def mesh_iso_quality(mesh: Mesh, points=None):
    c = mesh.corners(points)
    return iso_quality_2d(c[:, 0], c[:, 1], c[:, 2])


def compression_ratio(ref_mesh: Mesh, adapted_mesh: Mesh):
    """Per-element ratio of inscribed radii, reference over adapted."""
    if ref_mesh.topology_hash() != adapted_mesh.topology_hash():
        raise MeshError("compression ratio needs meshes with identical connectivity")
    r0 = ref_mesh.corners()
    r1 = adapted_mesh.corners()
    return inscribed_radius(r0[:, 0], r0[:, 1], r0[:, 2]) / inscribed_radius(r1[:, 0], r1[:, 1], r1[:, 2])


@dataclass
class EdgeLengthHistogram:
    bins: tuple
    counts: np.ndarray
    total: int

    @property
    def percentages(self):
        if self.total == 0:
            return np.zeros(len(self.counts))
        return 100.0 * self.counts / self.total

    def rounded_percentages(self):
        """Two-decimal percentages summing to exactly 100 (largest remainder)."""
        if self.total == 0:
            return np.zeros(len(self.counts))
        hundredths = 10000.0 * self.counts / self.total
        base = np.floor(hundredths).astype(np.int64)
        short = 10000 - int(base.sum())
        order = np.argsort(-(hundredths - base), kind="stable")
        base[order[:short]] += 1
        return base / 100.0

    def labels(self):
        out = []
        for lo, hi in zip(self.bins[:-1], self.bins[1:]):
            out.append(f">{lo:g}" if math.isinf(hi) else f"({lo:g},{hi:g}]")
        return out


def edge_histogram(mesh: Mesh, metric, bins=DEFAULT_BINS, points=None) -> EdgeLengthHistogram:
    """Classify every unique edge by its length in ``metric`` into ``(a, b]`` bins."""
    metric = np.asarray(metric, float)
    if metric.shape != (mesh.n_vertices, 3):
        raise ValueError("metric must hold one (m11, m12, m22) record per vertex")
    bins = tuple(float(b) for b in bins)
    if any(b1 <= b0 for b0, b1 in zip(bins[:-1], bins[1:])):
        raise ValueError("bin edges must be strictly increasing")
    x = mesh.points if points is None else np.asarray(points, float)
    e = mesh.edges()
    lengths = metric_edge_length(x[e[:, 0]], x[e[:, 1]], metric[e[:, 0]], metric[e[:, 1]])
    # right-closed bins; lengths at or below the first edge land in the first bin
    idx = np.clip(np.searchsorted(np.asarray(bins), lengths, side="left") - 1, 0, len(bins) - 2)
    counts = np.bincount(idx, minlength=len(bins) - 1)
    return EdgeLengthHistogram(bins, counts, int(len(e)))


@dataclass
class NarrowBandStats:
    """Element count plus edge-length and isotropic-quality extrema.

    With an empty band ``count`` is 0, the extrema are NaN and ``empty``
    is set.
    """

    count: int
    h_min: float
    h_max: float
    h_avg: float
    q_min: float
    q_max: float
    q_avg: float

    @property
    def empty(self):
        return self.count == 0

    def as_row(self):
        return [getattr(self, f.name) for f in fields(self)]


STATS_COLUMNS = ("label", "elements", "h_min", "h_max", "h_avg", "q_iso_min", "q_iso_max", "q_iso_avg")


def band_elements(mesh: Mesh, phi, band: float = 1e-2):
    """Mask of elements whose smallest vertex ``|phi|`` is below ``band``."""
    if not band > 0:
        raise ValueError("band must be positive")
    phi = np.asarray(phi, float)
    return np.abs(phi[mesh.triangles]).min(axis=1) < band


def narrow_band_stats(mesh: Mesh, phi, band: float = 1e-2, points=None) -> NarrowBandStats:
    sel = band_elements(mesh, phi, band)
    if not sel.any():
        nan = float("nan")
        return NarrowBandStats(0, nan, nan, nan, nan, nan, nan)
    x = mesh.points if points is None else np.asarray(points, float)
    tri = mesh.triangles[sel]
    e = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    e = np.unique(e, axis=0)
    h = np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)
    c = x[tri]
    q = iso_quality_2d(c[:, 0], c[:, 1], c[:, 2])
    return NarrowBandStats(int(sel.sum()), float(h.min()), float(h.max()), float(h.mean()),
                           float(q.min()), float(q.max()), float(q.mean()))


def stats_csv(rows) -> str:
    """CSV text for ``(label, NarrowBandStats)`` pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for label, s in rows:
        w.writerow([label, s.count] + [repr(v) for v in s.as_row()[1:]])
    return buf.getvalue()


def stats_table(rows) -> str:
    """Aligned plain-text table with three significant digits."""
    lines = ["{:<12}{:>9}{:>11}{:>11}{:>11}{:>11}{:>11}{:>11}".format(*STATS_COLUMNS)]
    for label, s in rows:
        v = s.as_row()
        lines.append("{:<12}{:>9d}{:>11.3g}{:>11.3g}{:>11.3g}{:>11.3g}{:>11.3g}{:>11.3g}".format(label, *v))
    return "\n".join(lines)


def histogram_csv(hist: EdgeLengthHistogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin", "count", "percent"])
    for lab, cnt, pct in zip(hist.labels(), hist.counts, hist.rounded_percentages()):
        w.writerow([lab, int(cnt), f"{pct:.2f}"])
    w.writerow(["total", hist.total, "100.00" if hist.total else "0.00"])
    return buf.getvalue()

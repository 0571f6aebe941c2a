"""2D simplicial mesh adaptation: metric fields for h-adaptation and a
moving-mesh PDE solver for r-adaptation."""

from .levelset import Circle, Flower, SpiralSizemapParams, UserTabulated, spiral_sizemap
from .mesh import Mesh, MeshError, apply_displacement, build_adjacency, generate_uniform, validate
from .metric import MetricBounds, intersect, levelset_metric, metric_edge_length, physical_metric
from .mmpde import Elasticity, Laplacian, SolverConfig, SolverError, solve
from .monitor import (Combined, General, GradientBased, PiecewiseConstant, Shoreline, Solution,
                      build_monitor_field)
from .quality import compression_ratio, edge_histogram, iso_quality_2d, narrow_band_stats

__version__ = "0.1.0"

__all__ = [
    "Circle", "Combined", "Elasticity", "Flower", "General", "GradientBased", "Laplacian", "Mesh",
    "MeshError", "MetricBounds", "PiecewiseConstant", "Shoreline", "Solution", "SolverConfig",
    "SolverError", "SpiralSizemapParams", "UserTabulated", "apply_displacement", "build_adjacency",
    "build_monitor_field", "compression_ratio", "edge_histogram", "generate_uniform", "intersect",
    "iso_quality_2d", "levelset_metric", "metric_edge_length", "narrow_band_stats", "physical_metric",
    "solve", "spiral_sizemap", "validate",
]

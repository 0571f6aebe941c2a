import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshadapt.levelset import Circle
from meshadapt.monitor import (Combined, General, GradientBased, PiecewiseConstant, Shoreline, Solution,
                               build_monitor_field, capped_gradient, omega_combined, omega_gb, omega_pc,
                               omega_shoreline, omega_solution, regularized_heaviside)

PC_THRESHOLDS = (0.05, 1.0, 1.75)
PC_LEVELS = (225.0, 90.0, 70.0, 20.0)


def test_omega_gb_examples():
    assert omega_gb(0.0, 1, 40, 300) == pytest.approx(math.sqrt(41))
    assert omega_gb(1e3, 1, 40, 300) == pytest.approx(1.0)
    assert np.all(omega_gb(np.linspace(-2, 2, 9), 4.0, 0.0, 300) == 2.0)


@settings(max_examples=100, deadline=None)
@given(phi=st.floats(-5, 5), a0=st.floats(0.01, 10), ap=st.floats(0, 100), bp=st.floats(0, 1000))
def test_omega_gb_bounds_and_symmetry(phi, a0, ap, bp):
    w = omega_gb(phi, a0, ap, bp)
    assert math.sqrt(a0) - 1e-12 <= w <= math.sqrt(a0 + ap) + 1e-12
    assert w == omega_gb(-phi, a0, ap, bp)


def test_omega_pc_examples():
    assert omega_pc(0.03, PC_THRESHOLDS, PC_LEVELS) == 225
    assert omega_pc(1.5, PC_THRESHOLDS, PC_LEVELS) == 70
    assert omega_pc(-5, PC_THRESHOLDS, PC_LEVELS) == 20
    # closed upper ends
    assert np.array_equal(omega_pc([0.05, 1.0, 1.75], PC_THRESHOLDS, PC_LEVELS), [225, 90, 70])
    with pytest.raises(ValueError):
        omega_pc(0.0, PC_THRESHOLDS, PC_LEVELS[:3])


def test_capped_and_solution_examples():
    assert capped_gradient(0.0, 2.0, 3.0) == 0
    assert capped_gradient(6.0, 2.0, 3.0) == 1
    assert capped_gradient(3.0, 2.0, 3.0) == 0.5
    assert omega_solution(0.0, 5) == 1
    assert omega_solution(1.0, 3) == 2
    assert np.all(omega_solution(np.linspace(0, 1, 5), 0) == 1)
    with pytest.raises(ValueError):
        capped_gradient(1.0, 0.0, 1.0)


def test_combined_examples():
    assert omega_combined(0.01, 5.0, 9.0, 0.05) == 5.0
    assert omega_combined(0.5, 5.0, 9.0, 0.05) == 9.0
    assert omega_combined(0.5, 5.0, 5.0, 0.05) == 5.0


def test_heaviside_and_shoreline_examples():
    assert regularized_heaviside(0.0, 0.1) == 0
    assert regularized_heaviside(0.2, 0.1) == 1
    assert regularized_heaviside(0.05, 0.1) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        regularized_heaviside(-1e-3, 0.1)
    assert omega_shoreline(0, 0, 1, 1) == 1
    assert omega_shoreline(1, 0, 3, 0) == 2
    assert omega_shoreline(0, 1, 0, 8) == 3


def test_field_gb_without_level_term(coarse_square):
    phi = Circle()(coarse_square.points)
    w = build_monitor_field(coarse_square, GradientBased(2.25, 0.0, 300), {"phi": phi})
    assert np.all(w == 1.5)


def test_field_pc_four_levels(square_h05):
    phi = Circle((0, 0), 0.5)(square_h05.points) * 4  # spans all bands inside [-1, 1]^2
    w = build_monitor_field(square_h05, PiecewiseConstant(PC_THRESHOLDS, PC_LEVELS), {"phi": phi})
    assert set(np.unique(w)) == set(PC_LEVELS)


def test_field_solution_linear_constant(coarse_square):
    u = 2 * coarse_square.points[:, 0] + coarse_square.points[:, 1]
    w = build_monitor_field(coarse_square, Solution(alpha_u=3), {"u": u})
    assert np.allclose(w, 2.0)


def test_field_missing_required(coarse_square):
    with pytest.raises(KeyError, match="'phi'"):
        build_monitor_field(coarse_square, GradientBased(), {})
    with pytest.raises(KeyError, match="'eta'"):
        build_monitor_field(coarse_square, Shoreline(), {"H": np.ones(coarse_square.n_vertices)})


def test_field_callable_is_reevaluated(coarse_square):
    ls = Circle((0, 0), 0.5)
    x = coarse_square.points * 0.5
    w = build_monitor_field(coarse_square, GradientBased(1, 40, 300), {"phi": ls}, points=x)
    assert np.allclose(w, omega_gb(ls(x), 1, 40, 300))


def test_field_combined_and_general(coarse_square):
    p = coarse_square.points
    phi = Circle()(p)
    u = p[:, 0] ** 2
    spec = Combined(0.05, GradientBased(1, 40, 300), Solution(alpha_u=3))
    w = build_monitor_field(coarse_square, spec, {"phi": phi, "u": u})
    assert np.all(w >= 1)
    band = np.abs(phi) <= 0.05
    assert np.allclose(w[band], omega_gb(phi[band], 1, 40, 300))
    g = build_monitor_field(coarse_square, General(alpha=1.0), {"u": np.ones(len(p))})
    assert np.allclose(g, 2.0)


def test_curvature_scaled_sources(square_h05):
    phi = Circle((0, 0), 0.5)(square_h05.points)
    with pytest.warns(RuntimeWarning):
        w = build_monitor_field(square_h05, GradientBased(2.5, 0, 200, curvature_scaled=True,
                                                          curvature_source="zero-level"), {"phi": phi})
    # |kappa| of the zero contour is 2 everywhere, so alpha0 ~ 5
    assert np.all(np.abs(w ** 2 / 5 - 1) < 0.25)
    with pytest.raises(ValueError):
        GradientBased(curvature_source="nearest")


def test_spec_validation():
    with pytest.raises(ValueError):
        PiecewiseConstant((1.0, 0.5), (1, 2, 3))
    with pytest.raises(ValueError):
        Combined(0.0, GradientBased(), Solution())
    with pytest.raises(ValueError):
        General(p=0.5)


@settings(max_examples=100, deadline=None)
@given(p1=st.floats(-3, 3), p2=st.floats(-3, 3), a0=st.floats(0.01, 5), ap=st.floats(0, 50),
       bp=st.floats(0, 500))
def test_omega_gb_monotone_in_abs_phi(p1, p2, a0, ap, bp):
    lo, hi = sorted((p1, p2), key=abs)
    assert omega_gb(lo, a0, ap, bp) >= omega_gb(hi, a0, ap, bp)


@settings(max_examples=100, deadline=None)
@given(phi=st.lists(st.floats(-5, 5), min_size=1, max_size=50))
def test_omega_pc_levels_only_and_even(phi):
    phi = np.array(phi)
    w = omega_pc(phi, PC_THRESHOLDS, PC_LEVELS)
    assert set(w.tolist()) <= set(PC_LEVELS)
    assert np.array_equal(w, omega_pc(-phi, PC_THRESHOLDS, PC_LEVELS))


@settings(max_examples=100, deadline=None)
@given(phi=st.floats(-1, 1), wp=st.floats(0.1, 100), wu=st.floats(0.1, 100), eps=st.floats(1e-3, 0.5))
def test_omega_combined_between(phi, wp, wu, eps):
    w = omega_combined(phi, wp, wu, eps)
    assert min(wp, wu) <= w <= max(wp, wu)
    assert w == omega_combined(-phi, wp, wu, eps)


@settings(max_examples=20, deadline=None)
@given(a0=st.floats(0.01, 5), ap=st.floats(0, 50), r=st.floats(0.1, 0.9))
def test_field_floor_and_lower_bound(coarse_square, a0, ap, r):
    phi = Circle((0, 0), r)(coarse_square.points)
    w = build_monitor_field(coarse_square, GradientBased(a0, ap, 300), {"phi": phi})
    assert np.all(np.isfinite(w)) and np.all(w >= 1e-6)
    assert np.all(w >= math.sqrt(a0) * (1 - 1e-12))
    pc = build_monitor_field(coarse_square, PiecewiseConstant(), {"phi": phi})
    assert np.all(pc >= min(PiecewiseConstant().levels))

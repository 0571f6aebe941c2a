import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshadapt.levelset import (Circle, Flower, SpiralSizemapParams, UserTabulated, crossing_vertices,
                                curvature, p1_gradient, sample, spiral_sizemap, zero_level_curvature)
from meshadapt.mesh import Mesh, generate_uniform

from conftest import interior_mask


def spiral_direct(x, y, a=0.6, s=0.5):
    """Scalar transcription of the double-spiral size formula."""
    phi = math.atan2(y, x)
    rho = s * math.hypot(x, y)
    k = math.floor(rho / (2 * math.pi * a))
    t1 = phi + math.pi * (1 + k)
    t2 = phi - math.pi * (1 + k)
    return min(1.6 + abs(rho - a * t1) + 0.005, 1.6 + abs(rho + a * t2) + 0.0125)


def test_circle_and_flower_values():
    c = Circle((0, 0), 0.5)
    assert c(np.array([0.5, 0.0])) == 0.0
    assert c(np.array([0.0, 0.0])) == -0.5
    f = Flower((0, 0), 0.5, 0.2, 4)
    assert f(np.array([0.7, 0.0])) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        Flower((0, 0), 0.2, 0.3)
    with pytest.raises(ValueError):
        Circle((0, 0), 0.0)


def test_spiral_anchor_values():
    v = spiral_sizemap(np.array([[0.0, 0.0], [10.0, 0.0]]))
    assert v[0] == pytest.approx(1.6 + 0.6 * math.pi + 0.005, abs=1e-12)
    # the quoted four-decimal anchors are truncated, not rounded
    assert v[0] == pytest.approx(3.4899, abs=1e-4)
    assert v[1] == pytest.approx(2.8351, abs=1e-4)


def test_spiral_matches_direct_transcription():
    rng = np.random.default_rng(0)
    p = rng.uniform(-20, 20, (2000, 2))
    got = spiral_sizemap(p)
    ref = np.array([spiral_direct(x, y) for x, y in p])
    assert np.max(np.abs(got - ref)) <= 1e-12


def test_spiral_params_validation():
    with pytest.raises(ValueError):
        SpiralSizemapParams(a=0.0)


def test_sample_examples():
    m = generate_uniform((0, 1, 0, 1), 0.25)
    assert np.all(sample(m, lambda p: np.full(len(p), 2.5)) == 2.5)
    i = int(np.argmin(np.linalg.norm(m.points, axis=1)))
    assert np.array_equal(m.points[i], [0, 0])
    assert sample(m, Circle((0, 0), 0.5))[i] == -0.5
    tri = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    f = Flower()
    assert np.array_equal(sample(tri, f), f(tri.points))
    with pytest.raises(ValueError, match="vertex 0"):
        sample(tri, lambda p: np.array([np.nan, 0, 0]))
    assert np.array_equal(sample(tri, UserTabulated(np.array([1.0, 2, 3]))), [1, 2, 3])


def test_gradient_linear_exact(square_h05):
    g = p1_gradient(square_h05, 3 * square_h05.points[:, 0] - 2 * square_h05.points[:, 1])
    assert np.allclose(g, [3, -2], atol=1e-11)
    assert np.allclose(p1_gradient(square_h05, np.full(square_h05.n_vertices, 4.0)), 0, atol=1e-12)


def test_gradient_quadratic(square_h05):
    x = square_h05.points[:, 0]
    g = p1_gradient(square_h05, x**2)
    inner = interior_mask(square_h05, 0.06) & (np.abs(x) > 0.2)
    assert np.all(np.abs(g[inner, 0] / (2 * x[inner]) - 1) < 0.05)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5))
def test_gradient_reproduces_affine(a, b, c):
    m = generate_uniform((0, 1, 0, 1), 0.3)
    f = a * m.points[:, 0] + b * m.points[:, 1] + c
    assert np.allclose(p1_gradient(m, f), [a, b], atol=1e-9 * (1 + abs(a) + abs(b) + abs(c)))


@pytest.mark.filterwarnings("ignore:vanishing level-set gradient:RuntimeWarning")
def test_curvature_circle(square_h05):
    phi = Circle((0, 0), 0.5)(square_h05.points)
    k = curvature(square_h05, phi)
    near = np.abs(phi) < 0.05
    assert np.all(np.abs(np.abs(k[near]) / 2 - 1) < 0.2)


def test_curvature_planar_and_cap(square_h05):
    k = curvature(square_h05, square_h05.points[:, 0] - 0.1)
    assert np.max(np.abs(k)) < 1e-9
    r = np.linalg.norm(square_h05.points, axis=1)
    with pytest.warns(RuntimeWarning, match="vanishing"):
        spike = curvature(square_h05, r, kappa_max=5.0)
    assert np.max(np.abs(spike)) <= 5.0


@pytest.mark.filterwarnings("ignore:vanishing level-set gradient:RuntimeWarning")
def test_zero_level_curvature_is_contour_value(square_h05):
    phi = Circle((0, 0), 0.5)(square_h05.points)
    k0 = zero_level_curvature(square_h05, phi)
    # the whole mesh sees the curvature of the radius-0.5 contour
    assert np.all(np.abs(k0[interior_mask(square_h05, 0.1)] / 2 - 1) < 0.2)
    on = crossing_vertices(square_h05, phi)
    assert np.all(np.abs(phi[on]) < 0.08)


@pytest.mark.filterwarnings("ignore:vanishing level-set gradient:RuntimeWarning")
def test_zero_level_curvature_without_crossing(square_h05):
    phi = Circle((0, 0), 0.5)(square_h05.points) + 10
    assert np.array_equal(zero_level_curvature(square_h05, phi), curvature(square_h05, phi))


def test_spiral_lower_bound():
    rng = np.random.default_rng(5)
    assert spiral_sizemap(rng.uniform(-50, 50, (20000, 2))).min() >= 1.605


def test_circle_is_signed_distance():
    rng = np.random.default_rng(6)
    c = Circle((0.2, -0.1), 0.5)
    p = rng.uniform(-1, 1, (500, 2))
    p = p[np.linalg.norm(p - [0.2, -0.1], axis=1) > 0.05]
    h = 1e-6
    gx = (c(p + [h, 0]) - c(p - [h, 0])) / (2 * h)
    gy = (c(p + [0, h]) - c(p - [0, h])) / (2 * h)
    assert np.allclose(np.hypot(gx, gy), 1.0, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_p1_gradient_linear_in_f(coarse_square, a, b):
    p = coarse_square.points
    f, g = np.sin(3 * p[:, 0]), p[:, 1] ** 3
    lhs = p1_gradient(coarse_square, a * f + b * g)
    rhs = a * p1_gradient(coarse_square, f) + b * p1_gradient(coarse_square, g)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)


@pytest.mark.parametrize("lobes", [1, 3, 4, 7])
def test_flower_sign_changes(lobes):
    f = Flower((0.1, 0.2), 0.5, 0.2, lobes)
    t = np.linspace(0, 2 * np.pi, 20001)[:-1] + 1e-3
    v = f(np.column_stack([0.1 + 0.5 * np.cos(t), 0.2 + 0.5 * np.sin(t)]))
    s = np.sign(v)
    assert np.count_nonzero(s != np.roll(s, 1)) == 2 * lobes

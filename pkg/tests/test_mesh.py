import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshadapt.mesh import (Mesh, MeshError, apply_displacement, build_adjacency, check_duplicates,
                            edge_lengths, generate_uniform, inscribed_radius, signed_area, validate)


def test_signed_area_examples():
    assert signed_area((0, 0), (1, 0), (0, 1)) == 0.5
    assert signed_area((0, 0), (0, 1), (1, 0)) == -0.5
    assert signed_area((0, 0), (1, 0), (2, 0)) == 0.0


def test_inscribed_radius_examples():
    s3 = math.sqrt(3.0)
    assert inscribed_radius((0, 0), (1, 0), (0.5, s3 / 2)) == pytest.approx(s3 / 6, rel=1e-14)
    assert inscribed_radius((0, 0), (3, 0), (0, 4)) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(MeshError):
        inscribed_radius((0, 0), (1, 0), (2, 0))


angles = st.floats(0, 2 * math.pi)
coords = st.floats(-10, 10)


@settings(max_examples=200, deadline=None)
@given(theta=angles, tx=coords, ty=coords)
def test_inscribed_radius_rigid_invariance(theta, tx, ty):
    pts = np.array([[0.1, -0.3], [1.7, 0.2], [0.4, 1.1]])
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    moved = pts @ rot.T + (tx, ty)
    assert inscribed_radius(*moved) == pytest.approx(inscribed_radius(*pts), rel=1e-12)


def test_adjacency_single_triangle(unit_triangle):
    adj = build_adjacency(unit_triangle)
    for i in range(3):
        assert sorted(adj.neighbors(i)) == sorted({0, 1, 2} - {i})


def test_adjacency_two_triangles():
    m = Mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
    adj = build_adjacency(m)
    assert len(adj.neighbors(0)) == 3 and len(adj.neighbors(2)) == 3
    assert len(adj.neighbors(1)) == 2
    assert len(adj.edges) == 5


def test_adjacency_rejects_edge_shared_by_three():
    m = Mesh([[0, 0], [1, 0], [0.5, 1], [0.5, -1], [0.5, 2]], [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(MeshError, match=r"edge \(0, 1\) shared by 3"):
        build_adjacency(m)


def test_adjacency_symmetric_and_euler(coarse_square):
    adj = build_adjacency(coarse_square)
    for i in range(coarse_square.n_vertices):
        for j in adj.neighbors(i):
            assert i in adj.neighbors(j)
    # V - E + F = 1 for a disc
    assert coarse_square.n_vertices - len(adj.edges) + coarse_square.n_triangles == 1
    interior = adj.edge_triangle_count == 2
    assert interior.sum() + len(coarse_square.boundary_edges) == len(adj.edges)


def test_adjacency_isomorphic_under_permutation(coarse_square):
    rng = np.random.default_rng(3)
    perm = rng.permutation(coarse_square.n_vertices)
    inv = np.argsort(perm)
    m2 = Mesh(coarse_square.points[perm], inv[coarse_square.triangles])
    a1, a2 = build_adjacency(coarse_square), build_adjacency(m2)
    assert len(a1.edges) == len(a2.edges)
    assert sorted(a1.degree()) == sorted(a2.degree())
    assert np.array_equal(a1.degree()[perm], a2.degree())


def test_validate_examples(coarse_square):
    assert validate(coarse_square).inverted.size == 0
    assert validate(coarse_square, np.zeros((0, 2))).valid
    # push an interior vertex far across its neighbours
    i = int(np.argmin(np.linalg.norm(coarse_square.points, axis=1)))
    d = np.zeros_like(coarse_square.points)
    d[i] = (0.5, 0.5)
    rep = validate(coarse_square, d)
    assert rep.inverted.size >= 1 and not rep.valid


def test_generate_uniform_counts():
    m = generate_uniform((0, 1, 0, 1), 0.5)
    assert (m.n_vertices, m.n_triangles) == (9, 8)
    m = generate_uniform((0, 1, 0, 1), 1.0)
    assert (m.n_vertices, m.n_triangles) == (4, 2)
    with pytest.raises(ValueError):
        generate_uniform((0, 1, 0, 1), 0.0)


@pytest.mark.parametrize("pattern", ["alternating", "equilateral"])
def test_generate_uniform_experiment_resolution(pattern):
    m = generate_uniform((-1, 1, -1, 1), 0.0158, pattern)
    assert 0.0134 <= edge_lengths(m).mean() <= 0.0182
    assert np.all(m.areas() > 0)
    assert m.areas().sum() == pytest.approx(4.0, rel=1e-10)
    assert len(check_duplicates(m)) == 0


@settings(max_examples=30, deadline=None)
@given(h=st.floats(0.03, 0.6), w=st.floats(0.5, 3), ht=st.floats(0.5, 3),
       pattern=st.sampled_from(["alternating", "equilateral"]))
def test_generate_uniform_properties(h, w, ht, pattern):
    m = generate_uniform((0, w, 0, ht), min(h, 0.9 * min(w, ht)), pattern)
    assert np.all(m.areas() > 0)
    assert m.areas().sum() == pytest.approx(w * ht, rel=1e-10)
    build_adjacency(m)
    tags = m.vertex_tags[m.boundary_vertices()]
    assert np.all(tags > 0)


def test_generate_uniform_alternating_average_edge():
    for h in (0.05, 0.1, 0.2):
        m = generate_uniform((-1, 1, -1, 1), h)
        assert abs(edge_lengths(m).mean() / h - 1) < 0.15


def test_apply_displacement(coarse_square):
    same = apply_displacement(coarse_square, np.zeros_like(coarse_square.points))
    assert same == coarse_square
    moved = apply_displacement(coarse_square, np.tile([0.3, -0.2], (coarse_square.n_vertices, 1)))
    assert np.array_equal(moved.areas(), coarse_square.areas()) or np.allclose(
        moved.areas(), coarse_square.areas(), rtol=1e-13, atol=0)
    assert moved.topology_hash() == coarse_square.topology_hash()
    # the reference is untouched
    assert coarse_square.points[0, 0] == -1.0


def test_mesh_rejects_bad_input():
    with pytest.raises(MeshError):
        Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])
    with pytest.raises(MeshError):
        Mesh([[0, 0], [1, 0], [0, np.nan]], [[0, 1, 2]])
    with pytest.raises(MeshError):
        Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 1]])


def test_duplicate_detection():
    m = Mesh([[0, 0], [1, 0], [0, 1], [1, 1]], [[0, 1, 2], [1, 3, 2]])
    assert len(check_duplicates(m)) == 0
    m = Mesh([[0, 0], [1, 0], [0, 1], [0, 1 + 1e-14]], [[0, 1, 2], [1, 3, 2]])
    assert len(check_duplicates(m)) == 1

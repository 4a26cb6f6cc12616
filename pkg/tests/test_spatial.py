import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uvwadvect.mesh import MeshFrame, interpolate_many
from uvwadvect.seqgen import uv_sphere
from uvwadvect.spatial import NoSurfaceError, TriangleIndex, brute_force_closest, build_index, closest_location

from conftest import random_frame
from test_mesh import reference_closest


def test_empty_index_raises():
    index = build_index(MeshFrame(np.zeros((3, 3)), np.zeros((0, 3), dtype=int)))
    with pytest.raises(NoSurfaceError):
        closest_location(index, (0, 0, 0))


def test_single_triangle_matches_kernel(unit_triangle):
    loc, dist = closest_location(build_index(unit_triangle), (0.25, 0.25, 1.0))
    assert loc.triangle == 0
    np.testing.assert_allclose(loc.bary, (0.5, 0.25, 0.25), atol=1e-15)
    assert dist == pytest.approx(1.0)


def test_query_on_vertex_picks_lowest_incident_triangle():
    verts, tris = uv_sphere(12)
    frame = MeshFrame(verts, tris)
    index = build_index(frame)
    for j in (0, 5, 30, len(verts) - 1):
        loc, dist = closest_location(index, verts[j])
        incident = np.flatnonzero((tris == j).any(axis=1))
        assert dist == 0.0
        assert loc.triangle == incident.min()
        k = list(tris[loc.triangle]).index(j)
        assert loc.bary[k] == 1.0


def test_congruent_tie_goes_to_lower_index():
    a = [(0, 0, 1), (1, 0, 1), (0, 1, 1)]
    b = [(0, 0, -1), (1, 0, -1), (0, 1, -1)]
    frame = MeshFrame(b + a, [(3, 4, 5), (0, 1, 2)])
    loc, dist = closest_location(build_index(frame), (0.2, 0.2, 0.0))
    assert loc.triangle == 0 and dist == pytest.approx(1.0)


def test_brute_force_agrees_with_numpy_oracle():
    rng = np.random.default_rng(11)
    frame = random_frame(rng, 40, 60)
    pts = rng.normal(size=(200, 3)) * 1.5
    _, _, d2 = brute_force_closest(frame, pts)
    for p, got in zip(pts, d2):
        want = min(reference_closest(*frame.positions[t], p) for t in frame.triangles)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300))
def test_bvh_matches_brute_force_exactly(seed, n_tri):
    rng = np.random.default_rng(seed)
    frame = random_frame(rng, max(3, n_tri // 2), n_tri, uvws=False)
    pts = rng.normal(size=(100, 3)) * 2
    got = build_index(frame).query(pts)
    want = brute_force_closest(frame, pts)
    for g, w in zip(got, want):
        np.testing.assert_array_equal(g, w)


def test_result_independent_of_workers():
    rng = np.random.default_rng(2)
    frame = random_frame(rng, 500, 1000)
    pts = rng.normal(size=(5000, 3))
    index = build_index(frame)
    one = index.query(pts, workers=1)
    for w in (2, 3, 8):
        for a, b in zip(one, index.query(pts, workers=w)):
            np.testing.assert_array_equal(a, b)


def test_distance_matches_interpolated_position():
    rng = np.random.default_rng(5)
    frame = random_frame(rng, 100, 200)
    pts = rng.normal(size=(500, 3))
    tri, bary, d2 = build_index(frame).query(pts)
    q = interpolate_many(frame.positions, frame.triangles, tri, bary)
    np.testing.assert_allclose(np.sqrt(d2), np.linalg.norm(pts - q, axis=1), rtol=1e-12, atol=1e-12)


def test_index_is_immutable_and_shaped():
    frame = MeshFrame(*uv_sphere(16))
    index = TriangleIndex(frame)
    assert index.n_triangles == frame.n_triangles
    assert sorted(index.order) == list(range(frame.n_triangles))
    with pytest.raises(ValueError):
        index.order[0] = 1


def test_degenerate_triangles_are_indexed():
    frame = MeshFrame([(0, 0, 0), (1, 0, 0), (2, 0, 0), (5, 5, 5)], [(0, 1, 2), (3, 3, 3)])
    loc, dist = closest_location(build_index(frame), (5, 5, 6))
    assert loc.triangle == 1 and dist == pytest.approx(1.0)

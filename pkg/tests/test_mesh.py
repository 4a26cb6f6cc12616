import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from uvwadvect.mesh import (MeshError, MeshFrame, MeshSequence, SurfaceLocation, barycentric_interpolate,
                            closest_point_on_triangle, vertex_adjacency)
from uvwadvect.seqgen import uv_sphere


def reference_closest(a, b, c, p):
    """Independent oracle: best of the interior projection, three clamped segments and three vertices."""
    a, b, c, p = (np.asarray(x, dtype=float) for x in (a, b, c, p))
    cands = [a, b, c]
    for s, e in ((a, b), (b, c), (c, a)):
        d = e - s
        dd = d @ d
        t = 0.0 if dd == 0 else np.clip((p - s) @ d / dd, 0, 1)
        cands.append(s + t * d)
    e0, e1 = b - a, c - a
    gram = np.array([[e0 @ e0, e0 @ e1], [e0 @ e1, e1 @ e1]])
    if abs(np.linalg.det(gram)) > 1e-12 * (e0 @ e0) * (e1 @ e1):
        s, t = np.linalg.solve(gram, [(p - a) @ e0, (p - a) @ e1])
        if s >= 0 and t >= 0 and s + t <= 1:
            cands.append(a + s * e0 + t * e1)
    return min(float((p - q) @ (p - q)) for q in cands)


class TestFrame:
    def test_lengths_must_match(self):
        with pytest.raises(MeshError, match="velocities"):
            MeshFrame(np.zeros((3, 3)), [(0, 1, 2)], np.zeros((2, 3)))
        with pytest.raises(MeshError, match="uvws"):
            MeshFrame(np.zeros((3, 3)), [(0, 1, 2)], uvws=np.zeros((4, 3)))

    def test_triangle_index_range(self):
        with pytest.raises(MeshError, match="triangle 1"):
            MeshFrame(np.zeros((3, 3)), [(0, 1, 2), (0, 1, 3)])

    def test_degenerate_triangles_allowed(self):
        f = MeshFrame(np.zeros((3, 3)), [(0, 0, 1), (2, 2, 2)])
        assert f.n_triangles == 2

    def test_non_finite_rejected(self):
        with pytest.raises(MeshError, match="non-finite"):
            MeshFrame([(0, 0, np.nan)], [])

    def test_default_velocity_zero_and_immutable(self, unit_triangle):
        assert np.all(unit_triangle.velocities == 0)
        with pytest.raises(ValueError):
            unit_triangle.positions[0, 0] = 1.0

    def test_sequence_needs_a_frame(self, unit_triangle):
        with pytest.raises(MeshError):
            MeshSequence([])
        assert len(MeshSequence([unit_triangle])) == 1


class TestLocation:
    @pytest.mark.parametrize("bary", [(0.5, 0.5, 0.5), (-0.1, 0.6, 0.5), (1.0, 0.0)])
    def test_invalid(self, bary):
        with pytest.raises(MeshError):
            SurfaceLocation(0, bary)


class TestInterpolate:
    values = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]

    @pytest.mark.parametrize("bary, expected", [
        ((1, 0, 0), (0, 0, 0)),
        ((1 / 3, 1 / 3, 1 / 3), (1 / 3, 1 / 3, 0)),
    ])
    def test_examples(self, bary, expected):
        f = MeshFrame(self.values, [(0, 1, 2)], uvws=self.values)
        got = barycentric_interpolate(f, SurfaceLocation(0, bary), "uvw")
        np.testing.assert_allclose(got, expected, atol=1e-15)

    def test_linear_combination(self):
        f = MeshFrame(self.values, [(0, 1, 2)], velocities=[(2, 2, 2), (4, 4, 4), (6, 6, 6)])
        got = barycentric_interpolate(f, SurfaceLocation(0, (0.5, 0.25, 0.25)), "velocity")
        np.testing.assert_array_equal(got, (3.5, 3.5, 3.5))

    def test_missing_channel_and_bad_triangle(self, unit_triangle):
        with pytest.raises(MeshError, match="uvw"):
            barycentric_interpolate(unit_triangle, SurfaceLocation(0, (1, 0, 0)), "uvw")
        with pytest.raises(MeshError, match="out of range"):
            barycentric_interpolate(unit_triangle, SurfaceLocation(3, (1, 0, 0)), "position")

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_position_channel_reproduces_surface_point(self, s, t):
        if s + t > 1:
            s, t = 1 - s, 1 - t
        pos = np.array([(0.3, -1.0, 2.0), (1.5, 0.2, 0.1), (-0.7, 0.9, 1.1)])
        f = MeshFrame(pos, [(0, 1, 2)], uvws=pos)
        loc = SurfaceLocation(0, (max(0.0, 1 - s - t), s, t))
        np.testing.assert_array_equal(barycentric_interpolate(f, loc, "position"),
                                      barycentric_interpolate(f, loc, "uvw"))


class TestClosestPoint:
    A, B, C = (0, 0, 0), (1, 0, 0), (0, 1, 0)

    @pytest.mark.parametrize("p, bary, d2", [
        ((0.25, 0.25, 1), (0.5, 0.25, 0.25), 1.0),
        ((2, 0, 0), (0, 1, 0), 1.0),
        ((0.5, -1, 0), (0.5, 0.5, 0), 1.0),
    ])
    def test_examples(self, p, bary, d2):
        got_bary, got_d2 = closest_point_on_triangle(self.A, self.B, self.C, p)
        np.testing.assert_allclose(got_bary, bary, atol=1e-15)
        assert got_d2 == pytest.approx(d2, rel=1e-15)

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_query_on_vertex_gives_unit_weight(self, k):
        rng = np.random.default_rng(k)
        tri = rng.normal(size=(3, 3))
        bary, d2 = closest_point_on_triangle(*tri, tri[k])
        assert d2 == 0.0
        assert bary[k] == 1.0

    def test_random_against_oracle_and_vertices(self):
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            a, b, c, p = rng.normal(size=(4, 3))
            bary, d2 = closest_point_on_triangle(a, b, c, p)
            assert min(bary) >= 0 and max(bary) <= 1
            assert abs(sum(bary) - 1) <= 1e-12
            vmin = min(float((p - v) @ (p - v)) for v in (a, b, c))
            assert d2 <= vmin * (1 + 1e-12)
            assert d2 == pytest.approx(reference_closest(a, b, c, p), rel=1e-9, abs=1e-14)

    def test_projection_inside_reconstructs(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a, b, c = rng.normal(size=(3, 3))
            w = rng.dirichlet([1, 1, 1])
            n = np.cross(b - a, c - a)
            inside = w[0] * a + w[1] * b + w[2] * c
            p = inside + rng.normal() * n / np.linalg.norm(n)
            bary, _ = closest_point_on_triangle(a, b, c, p)
            rec = bary[0] * a + bary[1] * b + bary[2] * c
            assert np.linalg.norm(rec - inside) <= 1e-12 * max(1.0, np.linalg.norm(inside)) * 1e2

    @pytest.mark.parametrize("tri, p, expected_d2", [
        # collinear: closest point on the segment from (0,0,0) to (2,0,0)
        (((0, 0, 0), (1, 0, 0), (2, 0, 0)), (1.5, 1, 0), 1.0),
        # two coincident vertices
        (((0, 0, 0), (0, 0, 0), (1, 0, 0)), (0.5, 0, 2), 4.0),
        # fully collapsed to a point
        (((1, 1, 1), (1, 1, 1), (1, 1, 1)), (1, 1, 3), 4.0),
    ])
    def test_degenerate(self, tri, p, expected_d2):
        bary, d2 = closest_point_on_triangle(*tri, p)
        assert d2 == pytest.approx(expected_d2)
        assert abs(sum(bary) - 1) <= 1e-12 and min(bary) >= 0

    @settings(max_examples=300)
    @given(arrays(np.float64, (4, 3), elements=st.floats(-100, 100)))
    def test_total_on_finite_inputs(self, pts):
        bary, d2 = closest_point_on_triangle(*pts)
        assert np.isfinite(d2) and d2 >= 0
        assert abs(sum(bary) - 1) <= 1e-12 and min(bary) >= 0 and max(bary) <= 1


class TestAdjacency:
    def test_single_triangle(self, unit_triangle):
        assert vertex_adjacency(unit_triangle) == [[1, 2], [0, 2], [0, 1]]

    def test_shared_edge(self):
        f = MeshFrame(np.zeros((4, 3)), [(0, 1, 2), (1, 3, 2)])
        assert vertex_adjacency(f)[1] == [0, 2, 3]

    def test_isolated_vertex(self):
        f = MeshFrame(np.zeros((4, 3)), [(0, 1, 2)])
        assert vertex_adjacency(f)[3] == []

    def test_no_self_neighbours_with_degenerate(self):
        f = MeshFrame(np.zeros((3, 3)), [(0, 0, 1)])
        assert vertex_adjacency(f) == [[1], [0], []]

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        f = MeshFrame(rng.normal(size=(20, 3)), rng.integers(0, 20, size=(30, 3)))
        adj = vertex_adjacency(f)
        for j, nbrs in enumerate(adj):
            assert j not in nbrs
            assert len(set(nbrs)) == len(nbrs)
            for k in nbrs:
                assert j in adj[k]

    def test_sphere_symmetric(self):
        adj = vertex_adjacency(MeshFrame(*uv_sphere(12)))
        assert all(j in adj[k] for j, n in enumerate(adj) for k in n)

"""Closest-location queries against a single frame via a median-split BVH."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from .mesh import MeshFrame, SurfaceLocation, closest_bary_kernel

LEAF_SIZE = 4
_STACK = 128


class NoSurfaceError(LookupError):
    """The indexed frame has no triangles to query."""


@njit(cache=True)
def _build(tri_lo, tri_hi, centroids, leaf_size):
    t = centroids.shape[0]
    order = np.arange(t)
    cap = max(1, 2 * t)
    node_lo = np.empty((cap, 3))
    node_hi = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    if t == 0:
        return order, node_lo[:0], node_hi[:0], left[:0], right[:0], start[:0], count[:0], 0

    n_nodes = 1
    start[0] = 0
    count[0] = t
    stack = np.empty(cap, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    max_depth = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = start[node]
        e = s + count[node]
        for a in range(3):
            lo = np.inf
            hi = -np.inf
            for i in range(s, e):
                tt = order[i]
                if tri_lo[tt, a] < lo:
                    lo = tri_lo[tt, a]
                if tri_hi[tt, a] > hi:
                    hi = tri_hi[tt, a]
            node_lo[node, a] = lo
            node_hi[node, a] = hi
        if depth[node] > max_depth:
            max_depth = depth[node]
        if e - s <= leaf_size:
            continue
        axis = 0
        best_ext = -1.0
        for a in range(3):
            lo = np.inf
            hi = -np.inf
            for i in range(s, e):
                c = centroids[order[i], a]
                if c < lo:
                    lo = c
                if c > hi:
                    hi = c
            if hi - lo > best_ext:
                best_ext = hi - lo
                axis = a
        seg = order[s:e].copy()
        keys = np.empty(e - s)
        for i in range(e - s):
            keys[i] = centroids[seg[i], axis]
        perm = np.argsort(keys, kind="mergesort")
        for i in range(e - s):
            order[s + i] = seg[perm[i]]
        mid = s + (e - s) // 2
        l_node = n_nodes
        r_node = n_nodes + 1
        n_nodes += 2
        start[l_node] = s
        count[l_node] = mid - s
        start[r_node] = mid
        count[r_node] = e - mid
        depth[l_node] = depth[node] + 1
        depth[r_node] = depth[node] + 1
        left[node] = l_node
        right[node] = r_node
        stack[sp] = r_node
        sp += 1
        stack[sp] = l_node
        sp += 1
    return (order, node_lo[:n_nodes].copy(), node_hi[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), start[:n_nodes].copy(), count[:n_nodes].copy(), max_depth)


@njit(cache=True, nogil=True)
def _box_dist2(lo, hi, node, px, py, pz):
    d = 0.0
    if px < lo[node, 0]:
        d += (lo[node, 0] - px) ** 2
    elif px > hi[node, 0]:
        d += (px - hi[node, 0]) ** 2
    if py < lo[node, 1]:
        d += (lo[node, 1] - py) ** 2
    elif py > hi[node, 1]:
        d += (py - hi[node, 1]) ** 2
    if pz < lo[node, 2]:
        d += (lo[node, 2] - pz) ** 2
    elif pz > hi[node, 2]:
        d += (pz - hi[node, 2]) ** 2
    return d


@njit(cache=True, nogil=True)
def _query(points, verts, tris, order, node_lo, node_hi, left, right, start, count, slack,
           out_tri, out_bary, out_d2):
    stack = np.empty(_STACK, dtype=np.int64)
    for q in range(points.shape[0]):
        px = points[q, 0]
        py = points[q, 1]
        pz = points[q, 2]
        best = np.inf
        best_t = -1
        bu = 0.0
        bv = 0.0
        bw = 0.0
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            # conservative: equal-distance candidates must still be visited for the index tie-break
            if _box_dist2(node_lo, node_hi, node, px, py, pz) > best * (1.0 + 1e-9) + slack:
                continue
            if left[node] < 0:
                for i in range(start[node], start[node] + count[node]):
                    t = order[i]
                    a = tris[t, 0]
                    b = tris[t, 1]
                    c = tris[t, 2]
                    u, v, w, d2 = closest_bary_kernel(
                        verts[a, 0], verts[a, 1], verts[a, 2],
                        verts[b, 0], verts[b, 1], verts[b, 2],
                        verts[c, 0], verts[c, 1], verts[c, 2],
                        px, py, pz)
                    if d2 < best or (d2 == best and t < best_t):
                        best = d2
                        best_t = t
                        bu = u
                        bv = v
                        bw = w
            else:
                l_node = left[node]
                r_node = right[node]
                dl = _box_dist2(node_lo, node_hi, l_node, px, py, pz)
                dr = _box_dist2(node_lo, node_hi, r_node, px, py, pz)
                # push the farther child first so the nearer one is popped next
                if dl <= dr:
                    stack[sp] = r_node
                    stack[sp + 1] = l_node
                else:
                    stack[sp] = l_node
                    stack[sp + 1] = r_node
                sp += 2
        out_tri[q] = best_t
        out_bary[q, 0] = bu
        out_bary[q, 1] = bv
        out_bary[q, 2] = bw
        out_d2[q] = best


@njit(cache=True, nogil=True)
def _brute(points, verts, tris, out_tri, out_bary, out_d2):
    for q in range(points.shape[0]):
        px = points[q, 0]
        py = points[q, 1]
        pz = points[q, 2]
        best = np.inf
        for t in range(tris.shape[0]):
            a = tris[t, 0]
            b = tris[t, 1]
            c = tris[t, 2]
            u, v, w, d2 = closest_bary_kernel(
                verts[a, 0], verts[a, 1], verts[a, 2],
                verts[b, 0], verts[b, 1], verts[b, 2],
                verts[c, 0], verts[c, 1], verts[c, 2],
                px, py, pz)
            if d2 < best:
                best = d2
                out_tri[q] = t
                out_bary[q, 0] = u
                out_bary[q, 1] = v
                out_bary[q, 2] = w
        out_d2[q] = best


class TriangleIndex:
    """Immutable BVH over one frame's triangles.

    Nodes are stored as flat arrays: ``node_lo``/``node_hi`` boxes, ``left``/
    ``right`` child ids (-1 for leaves) and a ``start``/``count`` range into
    ``order``, the permutation of original triangle indices.
    """

    def __init__(self, frame: MeshFrame, leaf_size: int = LEAF_SIZE):
        self.frame = frame
        verts = np.ascontiguousarray(frame.positions)
        tris = np.ascontiguousarray(frame.triangles)
        if len(tris):
            corners = verts[tris]
            tri_lo = corners.min(axis=1)
            tri_hi = corners.max(axis=1)
            centroids = corners.mean(axis=1)
        else:
            tri_lo = tri_hi = centroids = np.zeros((0, 3))
        (order, node_lo, node_hi, left, right, start, count, depth) = _build(
            np.ascontiguousarray(tri_lo), np.ascontiguousarray(tri_hi),
            np.ascontiguousarray(centroids), leaf_size)
        if 2 * depth + 2 > _STACK:
            raise RuntimeError(f"BVH depth {depth} exceeds traversal stack")
        self._verts = verts
        self._tris = tris
        self.order = order
        self.node_lo = node_lo
        self.node_hi = node_hi
        self.left = left
        self.right = right
        self.start = start
        self.count = count
        self.depth = int(depth)
        extent = float(np.abs(verts).max()) if len(verts) else 0.0
        self._slack = (1e-12 * extent) ** 2
        for arr in (order, node_lo, node_hi, left, right, start, count):
            arr.setflags(write=False)

    @property
    def n_triangles(self) -> int:
        return len(self._tris)

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def query(self, points, workers: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batch query: (triangle ids, bary (n, 3), squared distances).

        With ``workers > 1`` the points are split into contiguous chunks that
        run concurrently; each result lands in its own slot, so the output
        does not depend on the worker count.
        """
        if self.n_triangles == 0:
            raise NoSurfaceError("no surface: the indexed frame has no triangles")
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        n = len(pts)
        tri = np.empty(n, dtype=np.int64)
        bary = np.empty((n, 3))
        d2 = np.empty(n)

        def run(lo: int, hi: int) -> None:
            _query(pts[lo:hi], self._verts, self._tris, self.order, self.node_lo, self.node_hi,
                   self.left, self.right, self.start, self.count, self._slack,
                   tri[lo:hi], bary[lo:hi], d2[lo:hi])

        workers = max(1, min(int(workers), n))
        if workers == 1:
            run(0, n)
        else:
            bounds = np.linspace(0, n, workers + 1).astype(int)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run, bounds[:-1], bounds[1:]))
        return tri, bary, d2


def build_index(frame: MeshFrame) -> TriangleIndex:
    return TriangleIndex(frame)


def closest_location(index: TriangleIndex, p) -> tuple[SurfaceLocation, float]:
    """Closest surface location to ``p`` and its Euclidean distance.

    Ties are broken by the smallest original triangle index.
    """
    tri, bary, d2 = index.query(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return SurfaceLocation(int(tri[0]), tuple(bary[0])), float(np.sqrt(d2[0]))


def brute_force_closest(frame: MeshFrame, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear scan over every triangle; the reference for :class:`TriangleIndex`."""
    if frame.n_triangles == 0:
        raise NoSurfaceError("no surface: the frame has no triangles")
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    n = len(pts)
    tri = np.empty(n, dtype=np.int64)
    bary = np.empty((n, 3))
    d2 = np.empty(n)
    _brute(pts, np.ascontiguousarray(frame.positions), np.ascontiguousarray(frame.triangles), tri, bary, d2)
    return tri, bary, d2

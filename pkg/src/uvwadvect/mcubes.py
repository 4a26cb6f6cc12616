"""Marching-cubes polygonisation.

The 256-case triangle table is derived at import time rather than typed in:
for every corner configuration the crossings on each cube face are joined
into segments, segments are chained into closed loops and each loop is fan
triangulated. Ambiguous faces always isolate the inside corners, so two
cells sharing a face agree on its segments and the surface is watertight.
"""
from __future__ import annotations

import numpy as np

# corner k sits at offset (k & 1, k >> 1 & 1, k >> 2 & 1)
CORNERS = np.array([[k & 1, (k >> 1) & 1, (k >> 2) & 1] for k in range(8)], dtype=np.int64)


def _edges():
    edges = []
    for axis in range(3):
        for k in range(8):
            if not (k >> axis) & 1:
                edges.append((k, k | (1 << axis), axis))
    return edges


EDGES = _edges()
EDGE_AXIS = np.array([a for _, _, a in EDGES], dtype=np.int64)
EDGE_ORIGIN = np.array([CORNERS[c0] for c0, _, _ in EDGES], dtype=np.int64)
_EDGE_OF = {frozenset((c0, c1)): e for e, (c0, c1, _) in enumerate(EDGES)}


def _faces():
    """Each face as its four corners in counter-clockwise order about the outward normal."""
    faces = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, 1):
            ring = []
            for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                k = (side << axis) | (du << u) | (dv << v)
                ring.append(k)
            faces.append(ring if side else ring[::-1])
    return faces


FACES = _faces()
_FACE_EDGES = [{_EDGE_OF[frozenset((r[i], r[(i + 1) % 4]))] for i in range(4)} for r in FACES]


def _case_triangles(case: int) -> list[tuple[int, int, int]]:
    inside = [(case >> k) & 1 for k in range(8)]
    nxt = {}
    for ring in FACES:
        for i in range(4):
            # a run of inside corners ends at ring[i]; find where it starts
            if not inside[ring[i]] or inside[ring[(i + 1) % 4]]:
                continue
            j = i
            while inside[ring[(j - 1) % 4]] and (j - 1) % 4 != i:
                j = (j - 1) % 4
            exit_edge = _EDGE_OF[frozenset((ring[i], ring[(i + 1) % 4]))]
            entry_edge = _EDGE_OF[frozenset((ring[(j - 1) % 4], ring[j]))]
            nxt[exit_edge] = entry_edge
    tris = []
    seen = set()
    for first in sorted(nxt):
        if first in seen:
            continue
        loop = [first]
        seen.add(first)
        e = nxt[first]
        while e != first:
            loop.append(e)
            seen.add(e)
            e = nxt[e]
        tris.extend(_fan(loop))
    return tris


def _shares_face(e0: int, e1: int) -> bool:
    return any(e0 in f and e1 in f for f in _FACE_EDGES)


def _fan(loop: list[int]) -> list[tuple[int, int, int]]:
    # prefer an apex whose diagonals leave every cube face; such a diagonal
    # could otherwise coincide with one from the neighbouring cell
    n = len(loop)
    apex = 0
    for s in range(n):
        if not any(_shares_face(loop[s], loop[(s + k) % n]) for k in range(2, n - 1)):
            apex = s
            break
    ring = loop[apex:] + loop[:apex]
    return [(ring[0], ring[k], ring[k + 1]) for k in range(1, n - 1)]


def _build_table():
    table = [_case_triangles(c) for c in range(256)]
    # orient so normals point away from inside corners (toward decreasing field)
    (a, b, c), = table[1]
    mid = lambda e: EDGE_ORIGIN[e] + 0.5 * np.eye(3)[EDGE_AXIS[e]]
    normal = np.cross(mid(b) - mid(a), mid(c) - mid(a))
    if np.dot(normal, mid(a) - CORNERS[0]) < 0:
        table = [[(x, z, y) for x, y, z in tris] for tris in table]
    return table


TRI_TABLE = _build_table()


def polygonize(values: np.ndarray, origin, cell_size: float, iso: float):
    """Extract the iso-surface of node ``values`` (shape (nx, ny, nz)).

    Inside is ``value > iso``. Returns ``(positions, triangles, edge_values)``
    where ``edge_values`` holds, per vertex, the field at both edge ends and
    the interpolation weight ``t``. One vertex is produced per crossed grid
    edge, numbered in (axis, flat edge index) order; triangles are ordered by
    cell then table position.
    """
    f = np.asarray(values, dtype=np.float64)
    if f.ndim != 3 or min(f.shape) < 2:
        raise ValueError("need at least 2 grid nodes along every axis")
    origin = np.asarray(origin, dtype=np.float64)
    inside = f > iso

    edge_ids = []
    positions = []
    edge_vals = []
    offset = 0
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        crossed = inside[tuple(lo)] != inside[tuple(hi)]
        ids = np.full(crossed.shape, -1, dtype=np.int64)
        idx = np.argwhere(crossed)
        ids[crossed] = offset + np.arange(len(idx))
        offset += len(idx)
        edge_ids.append(ids)
        f0 = f[tuple(lo)][crossed]
        f1 = f[tuple(hi)][crossed]
        t = (iso - f0) / (f1 - f0)
        pos = origin + idx * cell_size
        pos[:, axis] += t * cell_size
        positions.append(pos)
        edge_vals.append(np.stack([f0, f1, t], axis=1))
    positions = np.concatenate(positions)
    edge_vals = np.concatenate(edge_vals)

    nx, ny, nz = (s - 1 for s in f.shape)
    case = np.zeros((nx, ny, nz), dtype=np.int64)
    for k, (ox, oy, oz) in enumerate(CORNERS):
        case |= inside[ox:ox + nx, oy:oy + ny, oz:oz + nz].astype(np.int64) << k
    flat_case = case.ravel()
    active = np.flatnonzero((flat_case != 0) & (flat_case != 255))

    cell_keys, slot_keys, tri_chunks = [], [], []
    cases = flat_case[active]
    for c in np.unique(cases):
        cells = active[cases == c]
        ci, cj, ck = np.unravel_index(cells, (nx, ny, nz))
        for slot, local in enumerate(TRI_TABLE[c]):
            corner_ids = []
            for e in local:
                ax = EDGE_AXIS[e]
                ox, oy, oz = EDGE_ORIGIN[e]
                corner_ids.append(edge_ids[ax][ci + ox, cj + oy, ck + oz])
            tri_chunks.append(np.stack(corner_ids, axis=1))
            cell_keys.append(cells)
            slot_keys.append(np.full(len(cells), slot))
    if tri_chunks:
        tris = np.concatenate(tri_chunks)
        order = np.lexsort((np.concatenate(slot_keys), np.concatenate(cell_keys)))
        tris = tris[order]
    else:
        tris = np.zeros((0, 3), dtype=np.int64)
    return positions, tris, edge_vals

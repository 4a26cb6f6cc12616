"""Mesh-sequence data model and per-triangle geometry kernels.

Arrays are float64 internally; indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numba import njit

CHANNELS = ("position", "velocity", "uvw")


class MeshError(ValueError):
    """Raised when a frame or location violates its invariants."""


def _as_vec3_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise MeshError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MeshError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MeshFrame:
    """One element of a mesh sequence.

    ``positions``, ``velocities`` and (optional) ``uvws`` are (n, 3) float64
    arrays; ``triangles`` is an (m, 3) int64 array of vertex indices.
    All arrays are read-only after construction.
    """

    positions: np.ndarray
    velocities: np.ndarray
    triangles: np.ndarray
    uvws: np.ndarray | None = None

    def __init__(self, positions, triangles, velocities=None, uvws=None):
        pos = _as_vec3_array(positions, "positions")
        if velocities is None:
            vel = np.zeros_like(pos)
            vel.setflags(write=False)
        else:
            vel = _as_vec3_array(velocities, "velocities")
        tri = np.array(triangles, dtype=np.int64)
        if tri.size == 0:
            tri = tri.reshape(0, 3)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise MeshError(f"triangles must have shape (m, 3), got {tri.shape}")
        tri.setflags(write=False)
        uvw = None if uvws is None else _as_vec3_array(uvws, "uvws")

        n = len(pos)
        if len(vel) != n:
            raise MeshError(f"velocities length {len(vel)} != positions length {n}")
        if uvw is not None and len(uvw) != n:
            raise MeshError(f"uvws length {len(uvw)} != positions length {n}")
        if len(tri):
            bad = np.flatnonzero(np.any((tri < 0) | (tri >= n), axis=1))
            if len(bad):
                j = int(bad[0])
                raise MeshError(
                    f"triangle {j} {tuple(int(i) for i in tri[j])} references a vertex outside [0, {n})"
                )
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "triangles", tri)
        object.__setattr__(self, "uvws", uvw)

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def with_uvws(self, uvws) -> "MeshFrame":
        return MeshFrame(self.positions, self.triangles, self.velocities, uvws)

    def channel(self, name: str) -> np.ndarray:
        if name == "position":
            return self.positions
        if name == "velocity":
            return self.velocities
        if name == "uvw":
            if self.uvws is None:
                raise MeshError("frame has no uvw channel")
            return self.uvws
        raise MeshError(f"unknown channel {name!r}; expected one of {CHANNELS}")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise MeshError("empty frame has no bounds")
        return self.positions.min(axis=0), self.positions.max(axis=0)


@dataclass(frozen=True)
class MeshSequence:
    frames: tuple[MeshFrame, ...]

    def __init__(self, frames: Sequence[MeshFrame]):
        frames = tuple(frames)
        if not frames:
            raise MeshError("a mesh sequence needs at least one frame")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[MeshFrame]:
        return iter(self.frames)

    def __getitem__(self, i: int) -> MeshFrame:
        return self.frames[i]


@dataclass(frozen=True)
class SurfaceLocation:
    """A point on a frame's surface: triangle index plus barycentric weights."""

    triangle: int
    bary: tuple[float, float, float]

    def __post_init__(self):
        b = tuple(float(x) for x in self.bary)
        if len(b) != 3:
            raise MeshError("bary needs exactly three weights")
        if any(not (0.0 <= x <= 1.0) for x in b) or abs(sum(b) - 1.0) > 1e-12:
            raise MeshError(f"invalid barycentric coordinates {b}")
        if self.triangle < 0:
            raise MeshError(f"negative triangle index {self.triangle}")
        object.__setattr__(self, "triangle", int(self.triangle))
        object.__setattr__(self, "bary", b)


def barycentric_interpolate(frame: MeshFrame, location: SurfaceLocation, channel: str) -> np.ndarray:
    """Interpolate a vertex channel at ``location``: b1*a1 + b2*a2 + b3*a3."""
    values = frame.channel(channel)
    if not 0 <= location.triangle < frame.n_triangles:
        raise MeshError(
            f"triangle index {location.triangle} out of range for frame with {frame.n_triangles} triangles"
        )
    i, j, k = frame.triangles[location.triangle]
    b1, b2, b3 = location.bary
    return b1 * values[i] + b2 * values[j] + b3 * values[k]


def interpolate_many(values: np.ndarray, triangles: np.ndarray, tri: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Vectorised :func:`barycentric_interpolate` (same operation order)."""
    corners = triangles[tri]
    return (
        bary[:, 0:1] * values[corners[:, 0]]
        + bary[:, 1:2] * values[corners[:, 1]]
        + bary[:, 2:3] * values[corners[:, 2]]
    )


@njit(cache=True, nogil=True)
def _segment_bary(ax, ay, az, bx, by, bz, px, py, pz):
    # closest point on segment ab as weight t of b; zero-length segments give t = 0
    ex = bx - ax
    ey = by - ay
    ez = bz - az
    ee = ex * ex + ey * ey + ez * ez
    if ee <= 0.0:
        return 0.0
    t = ((px - ax) * ex + (py - ay) * ey + (pz - az) * ez) / ee
    if t < 0.0:
        return 0.0
    if t > 1.0:
        return 1.0
    return t


@njit(cache=True, nogil=True)
def _dist2_at(ax, ay, az, bx, by, bz, cx, cy, cz, u, v, w, px, py, pz):
    qx = u * ax + v * bx + w * cx
    qy = u * ay + v * by + w * cy
    qz = u * az + v * bz + w * cz
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, nogil=True)
def closest_bary_kernel(ax, ay, az, bx, by, bz, cx, cy, cz, px, py, pz):
    """Return (u, v, w, squared distance) of the closest point on triangle abc.

    Region classification after Ericson, Real-Time Collision Detection 5.1.5,
    with all vertex regions tested before edge regions so a query that sits
    exactly on a vertex always yields a unit weight there.
    """
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    nx = aby * acz - abz * acy
    ny = abz * acx - abx * acz
    nz = abx * acy - aby * acx
    n2 = nx * nx + ny * ny + nz * nz
    ab2 = abx * abx + aby * aby + abz * abz
    ac2 = acx * acx + acy * acy + acz * acz

    if not n2 > 1e-24 * ab2 * ac2:
        # collapsed triangle: best of the three edge segments
        t = _segment_bary(ax, ay, az, bx, by, bz, px, py, pz)
        bu, bv, bw = 1.0 - t, t, 0.0
        best = _dist2_at(ax, ay, az, bx, by, bz, cx, cy, cz, bu, bv, bw, px, py, pz)
        t = _segment_bary(ax, ay, az, cx, cy, cz, px, py, pz)
        d = _dist2_at(ax, ay, az, bx, by, bz, cx, cy, cz, 1.0 - t, 0.0, t, px, py, pz)
        if d < best:
            bu, bv, bw, best = 1.0 - t, 0.0, t, d
        t = _segment_bary(bx, by, bz, cx, cy, cz, px, py, pz)
        d = _dist2_at(ax, ay, az, bx, by, bz, cx, cy, cz, 0.0, 1.0 - t, t, px, py, pz)
        if d < best:
            bu, bv, bw, best = 0.0, 1.0 - t, t, d
        return bu, bv, bw, best

    apx = px - ax
    apy = py - ay
    apz = pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz

    if d1 <= 0.0 and d2 <= 0.0:
        u, v, w = 1.0, 0.0, 0.0
    elif d3 >= 0.0 and d4 <= d3:
        u, v, w = 0.0, 1.0, 0.0
    elif d6 >= 0.0 and d5 <= d6:
        u, v, w = 0.0, 0.0, 1.0
    else:
        vc = d1 * d4 - d3 * d2
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            t = d1 / (d1 - d3)
            u, v, w = 1.0 - t, t, 0.0
        elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
            t = d2 / (d2 - d6)
            u, v, w = 1.0 - t, 0.0, t
        elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
            t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
            u, v, w = 0.0, 1.0 - t, t
        else:
            denom = 1.0 / (va + vb + vc)
            u = va * denom
            v = vb * denom
            w = vc * denom
    return u, v, w, _dist2_at(ax, ay, az, bx, by, bz, cx, cy, cz, u, v, w, px, py, pz)


def closest_point_on_triangle(a, b, c, p) -> tuple[tuple[float, float, float], float]:
    """Barycentric weights of the point of triangle abc nearest to p, and its squared distance."""
    a, b, c, p = (np.asarray(x, dtype=np.float64) for x in (a, b, c, p))
    u, v, w, d2 = closest_bary_kernel(a[0], a[1], a[2], b[0], b[1], b[2], c[0], c[1], c[2], p[0], p[1], p[2])
    return (float(u), float(v), float(w)), float(d2)


def adjacency_csr(n_vertices: int, triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Edge-induced neighbour sets as (indptr, indices), indices sorted per row."""
    tri = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    src = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2], tri[:, 1], tri[:, 2], tri[:, 0]])
    dst = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0], tri[:, 0], tri[:, 1], tri[:, 2]])
    keep = src != dst
    pairs = np.unique(np.stack([src[keep], dst[keep]], axis=1), axis=0).reshape(-1, 2)
    counts = np.bincount(pairs[:, 0], minlength=n_vertices)
    indptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, pairs[:, 1].astype(np.int64)


def vertex_adjacency(frame: MeshFrame) -> list[list[int]]:
    indptr, indices = adjacency_csr(frame.n_vertices, frame.triangles)
    return [indices[indptr[j]:indptr[j + 1]].tolist() for j in range(frame.n_vertices)]

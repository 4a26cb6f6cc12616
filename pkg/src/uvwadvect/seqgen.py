"""Synthetic mesh sequences with known motion.

Rigid presets (translate, rotate, remesh) move a UV sphere and know the exact
inverse motion, so every frame comes with an analytic material-coordinate
map. ``metaballs_merge`` polygonises two approaching Wyvill blobs with
marching cubes for genuine topology changes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mcubes import polygonize
from .mesh import MeshFrame, MeshSequence

PRESETS = ("translate_sphere", "remesh_sphere", "rotate_sphere", "metaballs_merge")


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float, float]
    radius: float
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)


def metaball_field(points, balls) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Field value, analytic gradient and kernel-weighted velocity at ``points``.

    Each ball contributes k(d/R) = (1 - (d/R)^2)^3 inside its radius and 0
    outside. Accepts a single point or an (n, 3) array.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    value = np.zeros(len(pts))
    grad = np.zeros((len(pts), 3))
    vel_sum = np.zeros((len(pts), 3))
    for ball in balls:
        if not ball.radius > 0:
            raise ValueError("ball radius must be > 0")
        diff = pts - np.asarray(ball.center, dtype=np.float64)
        s = 1.0 - np.einsum("ij,ij->i", diff, diff) / ball.radius ** 2
        s = np.where(s > 0.0, s, 0.0)
        w = s ** 3
        value += w
        grad += (-6.0 / ball.radius ** 2) * (s ** 2)[:, None] * diff
        vel_sum += w[:, None] * np.asarray(ball.velocity, dtype=np.float64)
    vel = np.zeros_like(vel_sum)
    nz = value > 0.0
    vel[nz] = vel_sum[nz] / value[nz, None]
    if single:
        return value[0], grad[0], vel[0]
    return value, grad, vel


def marching_cubes(sampler: Callable[[np.ndarray], np.ndarray], origin, cell_size: float, dims,
                   iso: float, velocity: Callable[[np.ndarray], np.ndarray] | None = None) -> MeshFrame:
    """Polygonise ``sampler`` on a regular grid of ``dims`` nodes.

    ``velocity``, when given, is evaluated at the generated vertices.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 2:
        raise ValueError("dims must give >= 2 nodes per axis")
    origin = np.asarray(origin, dtype=np.float64)
    axes = [origin[a] + cell_size * np.arange(dims[a]) for a in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    values = np.asarray(sampler(grid), dtype=np.float64).reshape(dims)
    if not np.all(np.isfinite(values)):
        raise ValueError("field is not finite on every grid node")
    positions, tris, _ = polygonize(values, origin, cell_size, iso)
    vel = velocity(positions) if velocity is not None and len(positions) else None
    return MeshFrame(positions, tris, vel)


def uv_sphere(resolution: int, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Closed UV sphere: ``resolution`` segments around, ``resolution // 2`` bands pole to pole."""
    if resolution < 4:
        raise ValueError("sphere resolution must be >= 4")
    n_lon = int(resolution)
    n_lat = max(2, n_lon // 2)
    theta = np.pi * np.arange(1, n_lat) / n_lat
    phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
    st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
    ring = np.stack([st * np.cos(phi), st * np.sin(phi), np.repeat(ct, n_lon, axis=1)], axis=-1)
    verts = np.concatenate([[[0.0, 0.0, 1.0]], ring.reshape(-1, 3), [[0.0, 0.0, -1.0]]])
    verts = radius * verts + np.asarray(center, dtype=np.float64)

    south = len(verts) - 1
    idx = lambda r, j: 1 + r * n_lon + (j % n_lon)
    tris = []
    for j in range(n_lon):
        tris.append((0, idx(0, j), idx(0, j + 1)))
    for r in range(n_lat - 2):
        for j in range(n_lon):
            a, b = idx(r, j), idx(r, j + 1)
            c, d = idx(r + 1, j), idx(r + 1, j + 1)
            tris.append((a, c, d))
            tris.append((a, d, b))
    for j in range(n_lon):
        tris.append((south, idx(n_lat - 2, j + 1), idx(n_lat - 2, j)))
    return verts, np.array(tris, dtype=np.int64)


def rotation_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class GeneratorPreset:
    name: str
    frames: int = 10
    resolution: int = 24
    resolution_b: int | None = None
    displacement: tuple[float, float, float] = (0.05, 0.02, 0.0)
    radians: float = 0.05
    axis: tuple[float, float, float] = (1.0, 1.0, 0.0)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    current_motion: bool = False
    ball_starts: tuple[tuple[float, float, float], ...] = ((-0.9, 0.0, 0.0), (0.9, 0.0, 0.0))
    ball_ends: tuple[tuple[float, float, float], ...] = ((-0.3, 0.0, 0.0), (0.3, 0.0, 0.0))
    ball_radii: tuple[float, ...] = (1.0, 1.0)
    iso: float = 0.5

    def __post_init__(self):
        if self.name not in PRESETS:
            raise ValueError(f"unknown preset {self.name!r}; expected one of {PRESETS}")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.resolution < 4 or (self.resolution_b is not None and self.resolution_b < 4):
            raise ValueError("resolutions must be >= 4")
        if self.radius <= 0:
            raise ValueError("radius must be > 0")
        if self.name == "metaballs_merge":
            if not (len(self.ball_starts) == len(self.ball_ends) == len(self.ball_radii) >= 1):
                raise ValueError("ball trajectories and radii must have matching lengths")
            if not 0.0 < self.iso < 1.0:
                raise ValueError("iso level must lie in (0, 1), the attainable range at a ball centre")
        if self.name == "rotate_sphere" and not np.linalg.norm(self.axis) > 0:
            raise ValueError("rotation axis must be non-zero")

    @property
    def velocity_convention(self) -> str:
        return "current" if self.current_motion else "previous"

    @property
    def second_resolution(self) -> int:
        if self.resolution_b is not None:
            return self.resolution_b
        return max(4, int(round(0.75 * self.resolution)))


@dataclass
class RigidGroundTruth:
    """Per frame, ``material = rotation @ p + translation`` maps a frame-t point to frame 1."""

    rotations: list[np.ndarray] = field(default_factory=list)
    translations: list[np.ndarray] = field(default_factory=list)

    def material(self, frame_index: int, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.rotations[frame_index].T + self.translations[frame_index]

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "rigid",
            "frames": [
                {"rotation": r.tolist(), "translation": t.tolist()}
                for r, t in zip(self.rotations, self.translations)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RigidGroundTruth":
        if data.get("kind") != "rigid" or data.get("version") != 1:
            raise ValueError("ground truth must be a version-1 rigid map")
        gt = cls()
        for fr in data["frames"]:
            gt.rotations.append(np.asarray(fr["rotation"], dtype=np.float64).reshape(3, 3))
            gt.translations.append(np.asarray(fr["translation"], dtype=np.float64).reshape(3))
        return gt


def _translate(p: GeneratorPreset):
    d = np.asarray(p.displacement, dtype=np.float64)
    frames, gt = [], RigidGroundTruth()
    base = {}
    for t in range(p.frames):
        res = p.resolution if (p.name == "translate_sphere" or t % 2 == 0) else p.second_resolution
        if res not in base:
            base[res] = uv_sphere(res, p.radius, p.center)
        verts, tris = base[res]
        pos = verts + t * d
        frames.append(MeshFrame(pos, tris, np.broadcast_to(d, pos.shape)))
        gt.rotations.append(np.eye(3))
        gt.translations.append(-t * d)
    return frames, gt


def _rotate(p: GeneratorPreset):
    c = np.asarray(p.center, dtype=np.float64)
    verts, tris = uv_sphere(p.resolution, p.radius, c)
    rel = verts - c
    place = lambda t: c + rel @ rotation_matrix(p.axis, t * p.radians).T
    frames, gt = [], RigidGroundTruth()
    for t in range(p.frames):
        pos = place(t)
        vel = place(t + 1) - pos if p.current_motion else pos - place(t - 1)
        frames.append(MeshFrame(pos, tris, vel))
        back = rotation_matrix(p.axis, -t * p.radians)
        gt.rotations.append(back)
        gt.translations.append(c - back @ c)
    return frames, gt


def metaball_frame(balls, origin, cell_size: float, dims, iso: float) -> MeshFrame:
    return marching_cubes(
        lambda q: metaball_field(q, balls)[0], origin, cell_size, dims, iso,
        velocity=lambda q: metaball_field(q, balls)[2],
    )


def _metaballs(p: GeneratorPreset):
    starts = np.asarray(p.ball_starts, dtype=np.float64)
    ends = np.asarray(p.ball_ends, dtype=np.float64)
    radii = np.asarray(p.ball_radii, dtype=np.float64)
    steps = max(1, p.frames - 1)
    step = (ends - starts) / steps
    lo = np.minimum(starts, ends) - radii[:, None]
    hi = np.maximum(starts, ends) + radii[:, None]
    lo, hi = lo.min(axis=0), hi.max(axis=0)
    cell = float((hi - lo).max()) / p.resolution
    dims = tuple(int(np.ceil((hi[a] - lo[a]) / cell)) + 1 for a in range(3))
    frames = []
    for t in range(p.frames):
        centers = starts + t * step
        # velocity is the per-frame displacement of each ball
        balls = [Ball(tuple(ctr), float(r), tuple(step[i])) for i, (ctr, r) in enumerate(zip(centers, radii))]
        frames.append(metaball_frame(balls, lo, cell, dims, p.iso))
    return frames, None


def generate_preset(preset: GeneratorPreset) -> tuple[MeshSequence, RigidGroundTruth | None]:
    if preset.name in ("translate_sphere", "remesh_sphere"):
        frames, gt = _translate(preset)
    elif preset.name == "rotate_sphere":
        frames, gt = _rotate(preset)
    else:
        frames, gt = _metaballs(preset)
    return MeshSequence(frames), gt

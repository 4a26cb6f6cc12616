"""Backward-advection transfer of UVWs along a mesh sequence.

Each vertex of frame i is moved back along its motion vector and picks up the
UVW of the closest surface location on frame i-1. Optional stages run per
frame in the order: transfer, Laplacian smoothing, half-float quantisation.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .mesh import MeshError, MeshFrame, SurfaceLocation, adjacency_csr, interpolate_many
from .spatial import NoSurfaceError, TriangleIndex, build_index

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("positional", "from_file")
VELOCITY_CONVENTIONS = ("previous", "current")
QUANTIZE_MODES = ("none", "half")
HALF_MAX = 65504.0


class PropagationError(RuntimeError):
    """A frame failed to propagate; ``frame_index`` is 0-based."""

    def __init__(self, frame_index: int, cause: Exception):
        super().__init__(f"frame {frame_index}: {cause}")
        self.frame_index = frame_index
        self.cause = cause


@dataclass(frozen=True)
class PropagationConfig:
    init_strategy: str = "positional"
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    velocity_convention: str = "previous"
    velocity_scale: float = 1.0
    bfec: bool = False
    smooth_iterations: int = 0
    smooth_lambda: float = 0.5
    quantize: str = "none"
    max_distance: float | None = None
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}")
        if self.velocity_convention not in VELOCITY_CONVENTIONS:
            raise ValueError(f"velocity_convention must be one of {VELOCITY_CONVENTIONS}")
        if self.quantize not in QUANTIZE_MODES:
            raise ValueError(f"quantize must be one of {QUANTIZE_MODES}")
        if not (np.isfinite(self.velocity_scale) and self.velocity_scale > 0):
            raise ValueError("velocity_scale must be > 0")
        if not 0.0 <= self.smooth_lambda <= 1.0:
            raise ValueError("smooth_lambda must lie in [0, 1]")
        if int(self.smooth_iterations) != self.smooth_iterations or self.smooth_iterations < 0:
            raise ValueError("smooth_iterations must be an integer >= 0")
        if self.max_distance is not None and not self.max_distance > 0:
            raise ValueError("max_distance must be > 0 (or None for unbounded)")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        for name in ("origin", "scale"):
            vec = tuple(float(x) for x in getattr(self, name))
            if len(vec) != 3 or not all(np.isfinite(vec)):
                raise ValueError(f"{name} must be three finite numbers")
            object.__setattr__(self, name, vec)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        d["origin"] = list(self.origin)
        d["scale"] = list(self.scale)
        return d


def positional_uvw(positions: np.ndarray, origin, scale) -> np.ndarray:
    return (np.asarray(positions, dtype=np.float64) - np.asarray(origin)) * np.asarray(scale)


def init_uvw(frame: MeshFrame, strategy: str = "positional", origin=(0.0, 0.0, 0.0),
             scale=(1.0, 1.0, 1.0)) -> np.ndarray:
    if strategy == "positional":
        return positional_uvw(frame.positions, origin, scale)
    if strategy == "from_file":
        if frame.uvws is None:
            raise MeshError("from_file initialisation needs a frame that carries uvws")
        return np.array(frame.uvws)
    raise ValueError(f"unknown init strategy {strategy!r}")


def backtrack_point(position, velocity, velocity_scale: float = 1.0) -> np.ndarray:
    return np.asarray(position, dtype=np.float64) - velocity_scale * np.asarray(velocity, dtype=np.float64)


def _bfec_points(prev: MeshFrame, index: TriangleIndex, positions, velocities, scale, workers=1):
    p1 = backtrack_point(positions, velocities, scale)
    tri, bary, _ = index.query(p1, workers)
    x1 = interpolate_many(prev.positions, prev.triangles, tri, bary)
    v1 = interpolate_many(prev.velocities, prev.triangles, tri, bary)
    # forward re-advection; half the round-trip error is taken off the query point
    err = (x1 + scale * v1) - positions
    return p1 - 0.5 * err


def bfec_corrected_location(prev: MeshFrame, prev_index: TriangleIndex, position, velocity,
                            cfg: PropagationConfig) -> SurfaceLocation:
    p = _bfec_points(prev, prev_index, np.asarray(position, dtype=np.float64).reshape(1, 3),
                     np.asarray(velocity, dtype=np.float64).reshape(1, 3), cfg.velocity_scale)
    tri, bary, _ = prev_index.query(p)
    return SurfaceLocation(int(tri[0]), tuple(bary[0]))


def laplacian_smooth_uvw(frame: MeshFrame, uvws, iterations: int, lam: float) -> np.ndarray:
    """Uniform-weight Jacobi sweeps: u <- u + lam * (mean of neighbours - u)."""
    u = np.array(uvws, dtype=np.float64)
    if u.shape != (frame.n_vertices, 3):
        raise MeshError(f"uvws shape {u.shape} does not match frame with {frame.n_vertices} vertices")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if iterations <= 0 or lam == 0.0:
        return u
    indptr, indices = adjacency_csr(frame.n_vertices, frame.triangles)
    deg = np.diff(indptr)
    rows = np.flatnonzero(deg)
    if len(rows) == 0:
        return u
    starts = indptr[rows]
    for _ in range(int(iterations)):
        mean = np.add.reduceat(u[indices], starts, axis=0) / deg[rows, None]
        u[rows] = u[rows] + lam * (mean - u[rows])
    return u


def quantize_half(value):
    """Round to the nearest binary16 value (ties to even), clamped to +-65504."""
    arr = np.clip(np.asarray(value, dtype=np.float64), -HALF_MAX, HALF_MAX)
    out = arr.astype(np.float16).astype(np.float64)
    return float(out) if out.ndim == 0 else out


@dataclass
class FrameResult:
    uvws: np.ndarray
    fallbacks: int


def _propagate(prev: MeshFrame, index: TriangleIndex | None, cur: MeshFrame,
               cfg: PropagationConfig) -> FrameResult:
    if prev.uvws is None:
        raise MeshError("previous frame carries no uvws")
    n = cur.n_vertices
    fallback = np.zeros(n, dtype=bool)
    uvw = np.empty((n, 3))
    if n:
        if index is None or index.n_triangles == 0:
            fallback[:] = True
        else:
            if cfg.bfec:
                query = _bfec_points(prev, index, cur.positions, cur.velocities, cfg.velocity_scale, cfg.workers)
            else:
                query = backtrack_point(cur.positions, cur.velocities, cfg.velocity_scale)
            tri, bary, d2 = index.query(query, cfg.workers)
            uvw[:] = interpolate_many(prev.uvws, prev.triangles, tri, bary)
            if cfg.max_distance is not None:
                fallback = np.sqrt(d2) > cfg.max_distance
        if fallback.any():
            uvw[fallback] = positional_uvw(cur.positions[fallback], cfg.origin, cfg.scale)
    uvw = laplacian_smooth_uvw(cur, uvw, cfg.smooth_iterations, cfg.smooth_lambda)
    if cfg.quantize == "half":
        uvw = quantize_half(uvw)
    return FrameResult(uvw, int(fallback.sum()))


def propagate_frame(prev: MeshFrame, cur: MeshFrame, cfg: PropagationConfig,
                    prev_index: TriangleIndex | None = None) -> np.ndarray:
    """UVWs for ``cur`` transferred from ``prev`` (which must carry uvws)."""
    if prev_index is None and prev.n_triangles:
        prev_index = build_index(prev)
    return _propagate(prev, prev_index, cur, cfg).uvws


@dataclass
class SequenceSummary:
    frames: int = 0
    fallbacks: int = 0
    fallbacks_per_frame: list[int] = field(default_factory=list)
    seconds: float = 0.0


def propagate_sequence(frames: Iterable[MeshFrame], cfg: PropagationConfig,
                       sink: Callable[[int, MeshFrame], None]) -> SequenceSummary:
    """Stream frames through the transfer, emitting each with its uvws.

    Only the previous result and its index are retained between frames, so
    memory does not grow with sequence length.
    """
    t0 = time.perf_counter()
    summary = SequenceSummary()
    prev: MeshFrame | None = None
    index: TriangleIndex | None = None
    for i, frame in enumerate(frames):
        try:
            if prev is None:
                uvw = init_uvw(frame, cfg.init_strategy, cfg.origin, cfg.scale)
                if cfg.quantize == "half":
                    uvw = quantize_half(uvw)
                fallbacks = 0
            else:
                result = _propagate(prev, index, frame, cfg)
                uvw, fallbacks = result.uvws, result.fallbacks
            out = frame.with_uvws(uvw)
        except (MeshError, NoSurfaceError, ValueError) as exc:
            raise PropagationError(i, exc) from exc
        if fallbacks:
            log.warning("frame %d: %d vertices fell back to positional uvws", i, fallbacks)
        sink(i, out)
        summary.frames += 1
        summary.fallbacks += fallbacks
        summary.fallbacks_per_frame.append(fallbacks)
        prev = out
        index = build_index(out) if out.n_triangles else None
    if prev is None:
        raise ValueError("empty sequence: at least one frame is required")
    summary.seconds = time.perf_counter() - t0
    return summary

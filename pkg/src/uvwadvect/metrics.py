"""Drift and jitter measurements for propagated sequences.

Jitter is the mean norm of the temporal second difference of UVWs sampled at
fixed world-space probes; vertex identity does not survive topology changes,
so probes stand in for tracked points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mesh import MeshError, MeshFrame, interpolate_many
from .spatial import build_index

REPORT_VERSION = 1


def drift_error(frame: MeshFrame, reference) -> tuple[float, float]:
    """Mean and max Euclidean UVW error against a per-vertex list or a map position -> uvw."""
    if frame.uvws is None:
        raise MeshError("frame carries no uvws")
    if callable(reference):
        ref = np.asarray(reference(frame.positions), dtype=np.float64).reshape(-1, 3)
    else:
        ref = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if len(ref) != frame.n_vertices:
        raise MeshError(f"reference has {len(ref)} entries for {frame.n_vertices} vertices")
    if frame.n_vertices == 0:
        return 0.0, 0.0
    err = np.linalg.norm(frame.uvws - ref, axis=1)
    return float(err.mean()), float(err.max())


def sample_probes(frames: Sequence[MeshFrame], count: int, seed: int = 0) -> np.ndarray:
    """Uniform points in the union of the frames' bounding boxes (fixed seed)."""
    boxes = [f.bounds() for f in frames if f.n_vertices]
    if not boxes:
        raise MeshError("cannot place probes: every frame is empty")
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    rng = np.random.default_rng(seed)
    return lo + rng.random((int(count), 3)) * (hi - lo)


def sample_uvw(frame: MeshFrame, probes) -> np.ndarray:
    if frame.uvws is None:
        raise MeshError("frame carries no uvws")
    if frame.n_triangles == 0:
        raise MeshError("cannot sample an empty frame")
    tri, bary, _ = build_index(frame).query(probes)
    return interpolate_many(frame.uvws, frame.triangles, tri, bary)


def jitter_series(samples: np.ndarray) -> np.ndarray:
    """Per interior frame, mean over probes of |u[t+1] - 2u[t] + u[t-1]|.

    ``samples`` has shape (frames, probes, 3).
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.shape[0] < 3:
        raise ValueError("jitter needs at least 3 frames")
    second = s[2:] - 2.0 * s[1:-1] + s[:-2]
    return np.linalg.norm(second, axis=2).mean(axis=1)


def probe_jitter(frames: Sequence[MeshFrame], probes) -> float:
    frames = list(frames)
    if len(frames) < 3:
        raise ValueError("jitter needs at least 3 frames")
    probes = np.asarray(probes, dtype=np.float64).reshape(-1, 3)
    samples = np.stack([sample_uvw(f, probes) for f in frames])
    return float(jitter_series(samples).mean())


@dataclass
class FrameRecord:
    frame: int
    drift_mean: float | None
    drift_max: float | None
    jitter: float | None
    fallbacks: int

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "drift_mean": self.drift_mean,
            "drift_max": self.drift_max,
            "jitter": self.jitter,
            "fallbacks": self.fallbacks,
        }


@dataclass
class MetricsReport:
    """Per-frame records plus aggregates.

    ``drift_*`` is null when no reference was supplied; ``jitter`` is null on
    the first and last frame, where the second difference is undefined.
    """

    records: list[FrameRecord] = field(default_factory=list)
    probes: int = 0
    seed: int = 0

    def aggregate(self) -> dict:
        def collect(key):
            vals = [getattr(r, key) for r in self.records if getattr(r, key) is not None]
            return vals

        means = collect("drift_mean")
        maxes = collect("drift_max")
        jit = collect("jitter")
        return {
            "frames": len(self.records),
            "drift_mean": float(np.mean(means)) if means else None,
            "drift_max": float(np.max(maxes)) if maxes else None,
            "final_drift_mean": means[-1] if means else None,
            "jitter": float(np.mean(jit)) if jit else None,
            "fallbacks": int(sum(r.fallbacks for r in self.records)),
        }

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "probes": self.probes,
            "seed": self.seed,
            "frames": [r.to_dict() for r in self.records],
            "aggregate": self.aggregate(),
        }


def evaluate(frames: Sequence[MeshFrame],
             reference: Callable[[int, MeshFrame], object] | None = None,
             probes: int = 64, seed: int = 0,
             fallbacks: Sequence[int] | None = None) -> MetricsReport:
    """Build a :class:`MetricsReport` for a propagated sequence.

    ``reference(i, frame)`` returns the drift reference for frame ``i`` (a
    per-vertex list or a callable map), or None to skip drift.
    """
    frames = list(frames)
    n = len(frames)
    jitter = [None] * n
    if probes > 0 and n >= 3:
        pts = sample_probes(frames, probes, seed)
        series = jitter_series(np.stack([sample_uvw(f, pts) for f in frames]))
        jitter[1:-1] = [float(x) for x in series]
    report = MetricsReport(probes=probes if n >= 3 else 0, seed=seed)
    for i, frame in enumerate(frames):
        mean = mx = None
        ref = reference(i, frame) if reference is not None else None
        if ref is not None:
            mean, mx = drift_error(frame, ref)
        fb = int(fallbacks[i]) if fallbacks is not None and i < len(fallbacks) else 0
        report.records.append(FrameRecord(i, mean, mx, jitter[i], fb))
    return report

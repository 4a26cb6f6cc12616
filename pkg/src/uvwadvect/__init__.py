"""Temporally coherent 3D texture coordinates for mesh sequences with changing topology."""

__version__ = "0.1.0"

from .advect import (PropagationConfig, backtrack_point, bfec_corrected_location, init_uvw,
                     laplacian_smooth_uvw, propagate_frame, propagate_sequence, quantize_half)
from .mesh import (MeshFrame, MeshSequence, SurfaceLocation, barycentric_interpolate,
                   closest_point_on_triangle, vertex_adjacency)
from .spatial import TriangleIndex, build_index, closest_location

__all__ = [
    "MeshFrame", "MeshSequence", "SurfaceLocation", "barycentric_interpolate",
    "closest_point_on_triangle", "vertex_adjacency", "TriangleIndex", "build_index",
    "closest_location", "PropagationConfig", "init_uvw", "backtrack_point",
    "bfec_corrected_location", "propagate_frame", "propagate_sequence",
    "laplacian_smooth_uvw", "quantize_half",
]

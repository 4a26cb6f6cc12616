"""Frame files (PLY in, PLY/OBJ out) and the JSON sequence manifest.

PLY vertex properties are written in the order x,y,z[,vx,vy,vz][,u,v,w] as
float32; faces use ``property list uchar int vertex_indices``. Reading
accepts any PLY 1.0 ascii or binary_little_endian file that provides x,y,z;
unknown properties are skipped with a warning and faces with more than three
corners are fan-triangulated.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import MeshError, MeshFrame

log = logging.getLogger(__name__)

FORMATS = ("ply_ascii", "ply_binary", "obj")
VELOCITY_CONVENTIONS = ("previous", "current")
MANIFEST_VERSION = 1

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    """Malformed or inconsistent PLY data; the message carries the line or byte position."""


class ManifestError(ValueError):
    """Manifest content violates the schema."""


@dataclass
class _Property:
    name: str
    dtype: str
    count_dtype: str | None = None  # set for list properties


@dataclass
class _Element:
    name: str
    count: int
    props: list[_Property]
    line: int


def _parse_header(data: bytes):
    if not data.startswith(b"ply"):
        raise PlyError("line 1: missing 'ply' magic")
    end = data.find(b"end_header")
    if end < 0:
        raise PlyError("header has no end_header line")
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements: list[_Element] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        key = parts[0]
        if key == "format":
            if len(parts) != 3 or parts[2] != "1.0":
                raise PlyError(f"line {lineno}: unsupported format line {raw.strip()!r}")
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"line {lineno}: unknown format {parts[1]!r}")
            fmt = parts[1]
        elif key == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise PlyError(f"line {lineno}: malformed element line {raw.strip()!r}")
            elements.append(_Element(parts[1], int(parts[2]), [], lineno))
        elif key == "property":
            if not elements:
                raise PlyError(f"line {lineno}: property before any element")
            if len(parts) == 5 and parts[1] == "list":
                if parts[2] not in _PLY_TYPES or parts[3] not in _PLY_TYPES:
                    raise PlyError(f"line {lineno}: unknown list types in {raw.strip()!r}")
                elements[-1].props.append(_Property(parts[4], _PLY_TYPES[parts[3]], _PLY_TYPES[parts[2]]))
            elif len(parts) == 3 and parts[1] in _PLY_TYPES:
                elements[-1].props.append(_Property(parts[2], _PLY_TYPES[parts[1]]))
            else:
                raise PlyError(f"line {lineno}: malformed property line {raw.strip()!r}")
        else:
            raise PlyError(f"line {lineno}: unexpected header keyword {key!r}")
    if fmt is None:
        raise PlyError("header has no format line")
    return fmt, elements, body_start, len(lines) + 2


def _read_binary(data: bytes, offset: int, elements: list[_Element]):
    out = {}
    for el in elements:
        if all(p.count_dtype is None for p in el.props):
            dt = np.dtype([(p.name, "<" + p.dtype) for p in el.props])
            need = dt.itemsize * el.count
            if offset + need > len(data):
                raise PlyError(
                    f"byte {len(data)}: truncated body in element {el.name!r}; "
                    f"expected {offset + need} bytes"
                )
            out[el.name] = np.frombuffer(data, dtype=dt, count=el.count, offset=offset)
            offset += need
            continue
        # fast path for the common all-triangles face layout
        if len(el.props) == 1:
            p = el.props[0]
            fixed = np.dtype([("n", "<" + p.count_dtype), ("idx", "<" + p.dtype, 3)])
            need = fixed.itemsize * el.count
            if offset + need <= len(data):
                block = np.frombuffer(data, dtype=fixed, count=el.count, offset=offset)
                if np.all(block["n"] == 3):
                    out[el.name] = {p.name: block["idx"].astype(np.int64)}
                    offset += need
                    continue
        rows = {p.name: [] for p in el.props}
        for i in range(el.count):
            for p in el.props:
                if p.count_dtype is None:
                    size = np.dtype(p.dtype).itemsize
                    if offset + size > len(data):
                        raise PlyError(f"byte {len(data)}: truncated body in element {el.name!r} row {i}; "
                                       f"expected at least {offset + size} bytes")
                    rows[p.name].append(np.frombuffer(data, "<" + p.dtype, 1, offset)[0])
                    offset += size
                else:
                    csize = np.dtype(p.count_dtype).itemsize
                    if offset + csize > len(data):
                        raise PlyError(f"byte {len(data)}: truncated body in element {el.name!r} row {i}; "
                                       f"expected at least {offset + csize} bytes")
                    n = int(np.frombuffer(data, "<" + p.count_dtype, 1, offset)[0])
                    offset += csize
                    size = np.dtype(p.dtype).itemsize * n
                    if offset + size > len(data):
                        raise PlyError(f"byte {len(data)}: truncated body in element {el.name!r} row {i}; "
                                       f"expected at least {offset + size} bytes")
                    rows[p.name].append(np.frombuffer(data, "<" + p.dtype, n, offset).astype(np.int64))
                    offset += size
        out[el.name] = rows
    if offset != len(data):
        log.warning("%d trailing bytes after PLY body ignored", len(data) - offset)
    return out


def _read_ascii(data: bytes, offset: int, elements: list[_Element], first_line: int):
    lines = data[offset:].decode("ascii", errors="replace").splitlines()
    pos = 0
    out = {}
    for el in elements:
        scalar = all(p.count_dtype is None for p in el.props)
        if scalar:
            table = []
        else:
            rows = {p.name: [] for p in el.props}
        for i in range(el.count):
            while pos < len(lines) and not lines[pos].strip():
                pos += 1
            if pos >= len(lines):
                raise PlyError(f"line {first_line + pos}: truncated body, element {el.name!r} "
                               f"has {i} of {el.count} rows")
            tokens = lines[pos].split()
            lineno = first_line + pos
            pos += 1
            try:
                if scalar:
                    if len(tokens) != len(el.props):
                        raise PlyError(f"line {lineno}: expected {len(el.props)} values, got {len(tokens)}")
                    table.append(tokens)
                    continue
                k = 0
                for p in el.props:
                    if p.count_dtype is None:
                        rows[p.name].append(float(tokens[k]))
                        k += 1
                    else:
                        n = int(tokens[k])
                        rows[p.name].append(np.array([int(t) for t in tokens[k + 1:k + 1 + n]], dtype=np.int64))
                        if len(rows[p.name][-1]) != n:
                            raise PlyError(f"line {lineno}: list announces {n} entries")
                        k += 1 + n
                if k != len(tokens):
                    raise PlyError(f"line {lineno}: {len(tokens) - k} unexpected trailing values")
            except (ValueError, IndexError) as exc:
                if isinstance(exc, PlyError):
                    raise
                raise PlyError(f"line {lineno}: cannot parse row of element {el.name!r}: {exc}") from None
        if scalar:
            dt = np.dtype([(p.name, p.dtype) for p in el.props])
            arr = np.empty(el.count, dtype=dt)
            for j, p in enumerate(el.props):
                col = [r[j] for r in table]
                try:
                    if p.dtype.startswith("f"):
                        # parse through float64; 9 significant digits round-trip float32 exactly
                        arr[p.name] = np.array(col, dtype=np.float64).astype(p.dtype)
                    else:
                        arr[p.name] = np.array(col, dtype=np.int64)
                except ValueError as exc:
                    raise PlyError(f"line {first_line}: element {el.name!r} property {p.name!r}: {exc}") from None
            out[el.name] = arr
        else:
            out[el.name] = rows
    return out


def _triangulate(faces, n_vertices: int) -> np.ndarray:
    if isinstance(faces, np.ndarray):
        bad = np.flatnonzero(np.any((faces < 0) | (faces >= n_vertices), axis=1))
        if len(bad):
            j = int(bad[0])
            raise PlyError(f"face {j}: vertex index out of range [0, {n_vertices}) in {faces[j].tolist()}")
        return faces.reshape(-1, 3)
    tris = []
    for j, face in enumerate(faces):
        face = np.asarray(face, dtype=np.int64)
        if len(face) < 3:
            raise PlyError(f"face {j}: needs at least 3 vertices, has {len(face)}")
        if np.any((face < 0) | (face >= n_vertices)):
            raise PlyError(f"face {j}: vertex index out of range [0, {n_vertices}) in {face.tolist()}")
        for k in range(1, len(face) - 1):
            tris.append((face[0], face[k], face[k + 1]))
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


def read_frame(path) -> MeshFrame:
    path = Path(path)
    data = path.read_bytes()
    fmt, elements, body_start, body_line = _parse_header(data)
    names = [e.name for e in elements]
    if "vertex" not in names:
        raise PlyError("header declares no vertex element")
    vertex_el = elements[names.index("vertex")]
    vprops = {p.name: p for p in vertex_el.props}
    for axis in "xyz":
        if axis not in vprops or vprops[axis].count_dtype is not None or not vprops[axis].dtype.startswith("f"):
            raise PlyError(f"line {vertex_el.line}: vertex element needs a float property {axis!r}")
    known = {"x", "y", "z", "vx", "vy", "vz", "u", "v", "w"}
    for p in vertex_el.props:
        if p.name not in known:
            log.warning("%s: skipping unknown vertex property %r", path, p.name)

    if fmt == "ascii":
        body = _read_ascii(data, body_start, elements, body_line)
    else:
        body = _read_binary(data, body_start, elements)
    verts = body["vertex"]

    def stack(keys):
        if not all(k in vprops for k in keys):
            if any(k in vprops for k in keys):
                log.warning("%s: partial channel %s ignored", path, "/".join(keys))
            return None
        return np.stack([np.asarray(verts[k], dtype=np.float64) for k in keys], axis=1)

    positions = stack(("x", "y", "z"))
    velocities = stack(("vx", "vy", "vz"))
    uvws = stack(("u", "v", "w"))

    if "face" in body:
        face_el = elements[names.index("face")]
        key = next((p.name for p in face_el.props if p.name in ("vertex_indices", "vertex_index")), None)
        if key is None:
            raise PlyError(f"line {face_el.line}: face element has no vertex_indices list")
        tris = _triangulate(body["face"][key], len(positions))
    else:
        tris = np.zeros((0, 3), dtype=np.int64)
    try:
        return MeshFrame(positions, tris, velocities, uvws)
    except MeshError as exc:
        raise PlyError(f"{path}: {exc}") from None


def _vertex_columns(frame: MeshFrame) -> tuple[list[str], np.ndarray]:
    names = ["x", "y", "z", "vx", "vy", "vz"]
    cols = [frame.positions, frame.velocities]
    if frame.uvws is not None:
        names += ["u", "v", "w"]
        cols.append(frame.uvws)
    return names, np.concatenate(cols, axis=1).astype(np.float32)


def _ply_header(fmt: str, names: list[str], n_verts: int, n_faces: int) -> bytes:
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {n_verts}"]
    lines += [f"property float {n}" for n in names]
    lines += [f"element face {n_faces}", "property list uchar int vertex_indices", "end_header"]
    return ("\n".join(lines) + "\n").encode("ascii")


def _fmt32(x) -> str:
    return "%.9g" % float(x)


def write_frame(frame: MeshFrame, path, format: str = "ply_binary") -> None:
    path = Path(path)
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    if format == "obj":
        _write_obj(frame, path)
        return
    names, table = _vertex_columns(frame)
    tris = frame.triangles
    with open(path, "wb") as fh:
        if format == "ply_binary":
            fh.write(_ply_header("binary_little_endian", names, len(table), len(tris)))
            fh.write(table.astype("<f4").tobytes())
            faces = np.empty(len(tris), dtype=[("n", "u1"), ("idx", "<i4", 3)])
            faces["n"] = 3
            faces["idx"] = tris
            fh.write(faces.tobytes())
        else:
            fh.write(_ply_header("ascii", names, len(table), len(tris)))
            out = [" ".join(_fmt32(x) for x in row) for row in table]
            out += ["3 %d %d %d" % tuple(t) for t in tris]
            fh.write(("\n".join(out) + ("\n" if out else "")).encode("ascii"))


def _write_obj(frame: MeshFrame, path: Path) -> None:
    # velocities are not representable in OBJ and are dropped
    pos = frame.positions.astype(np.float32)
    lines = ["v %s %s %s" % tuple(_fmt32(x) for x in p) for p in pos]
    if frame.uvws is not None:
        lines += ["vt %s %s %s" % tuple(_fmt32(x) for x in t) for t in frame.uvws.astype(np.float32)]
        lines += ["f %d/%d %d/%d %d/%d" % (a, a, b, b, c, c) for a, b, c in frame.triangles + 1]
    else:
        lines += ["f %d %d %d" % tuple(t) for t in frame.triangles + 1]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


@dataclass
class SequenceManifest:
    fps: float
    velocity_convention: str
    frames: list[str]
    version: int = MANIFEST_VERSION
    root: Path | None = None

    def __post_init__(self):
        if self.version != MANIFEST_VERSION:
            raise ManifestError(f"'version' must be {MANIFEST_VERSION}, got {self.version!r}")
        if isinstance(self.fps, bool) or not isinstance(self.fps, (int, float)) or not self.fps > 0:
            raise ManifestError(f"'fps' must be a number > 0, got {self.fps!r}")
        if self.velocity_convention not in VELOCITY_CONVENTIONS:
            raise ManifestError(f"'velocity_convention' must be one of {VELOCITY_CONVENTIONS}")
        if not isinstance(self.frames, list) or not self.frames or not all(isinstance(f, str) for f in self.frames):
            raise ManifestError("'frames' must be a non-empty list of relative paths")
        self.fps = float(self.fps)

    def frame_paths(self) -> list[Path]:
        root = self.root if self.root is not None else Path(".")
        return [root / f for f in self.frames]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "fps": self.fps,
            "velocity_convention": self.velocity_convention,
            "frames": list(self.frames),
        }

    def __eq__(self, other):
        if not isinstance(other, SequenceManifest):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def load_manifest(path) -> SequenceManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    for key in ("version", "fps", "velocity_convention", "frames"):
        if key not in data:
            raise ManifestError(f"missing key {key!r}")
    manifest = SequenceManifest(
        fps=data["fps"], velocity_convention=data["velocity_convention"],
        frames=data["frames"], version=data["version"], root=path.parent,
    )
    for p in manifest.frame_paths():
        if not p.is_file():
            raise FileNotFoundError(f"manifest frame file not found: {p}")
    return manifest


def save_manifest(manifest: SequenceManifest, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)

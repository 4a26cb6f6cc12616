"""Command-line entry point: gen, propagate, metrics, query.

Exit codes: 0 success, 1 usage error, 2 I/O or parse error, 3 validation error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import queue
import sys
import threading
import time
from pathlib import Path

import numpy as np

from . import __version__
from .advect import PropagationConfig, PropagationError, propagate_sequence
from .mesh import MeshError
from .meshio import (ManifestError, PlyError, SequenceManifest, load_manifest, read_frame,
                     save_manifest, write_frame)
from .metrics import evaluate
from .seqgen import PRESETS, GeneratorPreset, RigidGroundTruth, generate_preset
from .spatial import NoSurfaceError, build_index, closest_location

log = logging.getLogger("uvwadvect")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 1, 2, 3
MANIFEST_NAME = "seq.json"
SUMMARY_NAME = "summary.json"
GROUND_TRUTH_NAME = "ground_truth.json"
_CFG = {f.name: f.default for f in dataclasses.fields(PropagationConfig)}
_PRESET = {f.name: f.default for f in dataclasses.fields(GeneratorPreset)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _vec3(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z numbers, got {text!r}") from None
    if len(vals) != 3 or not all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"expected three finite numbers x,y,z, got {text!r}")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _unit_float(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not (np.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _fmt_vec(v) -> str:
    return ",".join(f"{x:g}" for x in v)


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if action.required or action.default is None or action.default is argparse.SUPPRESS:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = _Parser(prog="uvwadvect", description="Temporally coherent UVWs for mesh sequences.",
                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="{gen,propagate,metrics,query}")
    sub.required = True

    g = sub.add_parser("gen", help="write a synthetic sequence", formatter_class=fmt, parents=[common])
    g.add_argument("--preset", required=True, choices=PRESETS, help="generator preset")
    g.add_argument("--frames", required=True, type=_positive_int, help="number of frames")
    g.add_argument("--resolution", type=int, default=_PRESET["resolution"],
                   help="sphere segments, or grid cells along the longest axis for metaballs")
    g.add_argument("--resolution-b", type=int, default=None,
                   help="second sphere resolution for remesh_sphere (default: 3/4 of --resolution)")
    g.add_argument("--displacement", type=_vec3, default=_fmt_vec(_PRESET["displacement"]),
                   help="per-frame translation x,y,z")
    g.add_argument("--radians", type=float, default=_PRESET["radians"], help="rotation per frame")
    g.add_argument("--axis", type=_vec3, default=_fmt_vec(_PRESET["axis"]), help="rotation axis x,y,z")
    g.add_argument("--current-motion", action="store_true",
                   help="store velocities pointing to the next frame instead of from the previous one")
    g.add_argument("--fps", type=_positive_float, default=24.0, help="frame rate recorded in the manifest")
    g.add_argument("--ascii", action="store_true", help="write ascii PLY instead of binary")
    g.add_argument("--out", default="seq", help="output directory")

    p = sub.add_parser("propagate", help="generate uvws along a sequence", formatter_class=fmt, parents=[common])
    p.add_argument("--manifest", required=True, help="input sequence manifest")
    p.add_argument("--init", choices=("positional", "file"), default="positional",
                   help="frame-1 uvws: positional map or the uvws stored in the file")
    p.add_argument("--origin", type=_vec3, default=_fmt_vec(_CFG["origin"]), help="positional init origin")
    p.add_argument("--scale", type=_vec3, default=_fmt_vec(_CFG["scale"]), help="positional init scale")
    p.add_argument("--vel-scale", type=_positive_float, default=_CFG["velocity_scale"],
                   help="multiplier turning stored velocities into per-frame displacement")
    p.add_argument("--vel-convention", choices=("previous", "current"), default=None,
                   help="velocity convention (default: the manifest's value)")
    p.add_argument("--bfec", action="store_true", default=_CFG["bfec"],
                   help="backward-forward error compensation of the query point")
    p.add_argument("--smooth-iters", type=_nonneg_int, default=_CFG["smooth_iterations"],
                   help="Laplacian smoothing sweeps per frame")
    p.add_argument("--smooth-lambda", type=_unit_float, default=_CFG["smooth_lambda"],
                   help="smoothing step in [0, 1]")
    p.add_argument("--quantize", choices=("none", "half"), default=_CFG["quantize"],
                   help="round uvws to binary16 after each frame")
    p.add_argument("--max-distance", type=_positive_float, default=_CFG["max_distance"],
                   help="fall back to positional uvws beyond this query distance (default: unbounded)")
    p.add_argument("--format", choices=("ply", "obj"), default="ply",
                   help="output frame format (ply is binary little-endian)")
    p.add_argument("--threads", type=_positive_int, default=_CFG["workers"], help="query workers per frame")
    p.add_argument("--out", required=True, help="output directory")

    m = sub.add_parser("metrics", help="drift and jitter report", formatter_class=fmt, parents=[common])
    m.add_argument("--manifest", required=True, help="propagated sequence manifest")
    ref = m.add_mutually_exclusive_group()
    ref.add_argument("--reference", default=None, help="manifest of frames carrying reference uvws")
    ref.add_argument("--ground-truth", default=None, help="analytic ground-truth JSON written by gen")
    m.add_argument("--origin", type=_vec3, default=_fmt_vec(_CFG["origin"]),
                   help="positional init origin used for ground-truth uvws")
    m.add_argument("--scale", type=_vec3, default=_fmt_vec(_CFG["scale"]),
                   help="positional init scale used for ground-truth uvws")
    m.add_argument("--probes", type=_nonneg_int, default=64, help="number of jitter probes")
    m.add_argument("--seed", type=int, default=0, help="probe placement seed")
    m.add_argument("--report", required=True, help="output JSON report")
    m.add_argument("--no-plot", action="store_true", help="skip the PNG figure next to the report")

    q = sub.add_parser("query", help="closest location on a frame", formatter_class=fmt, parents=[common])
    q.add_argument("--frame", required=True, help="PLY frame")
    q.add_argument("--point", required=True, type=_vec3, help="query point x,y,z")
    return parser


def _cmd_gen(args) -> int:
    preset = GeneratorPreset(
        name=args.preset, frames=args.frames, resolution=args.resolution, resolution_b=args.resolution_b,
        displacement=args.displacement, radians=args.radians, axis=args.axis,
        current_motion=args.current_motion,
    )
    seq, gt = generate_preset(preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(seq):
        name = f"frame_{i + 1:04d}.ply"
        write_frame(frame, out / name, "ply_ascii" if args.ascii else "ply_binary")
        names.append(name)
    save_manifest(SequenceManifest(args.fps, preset.velocity_convention, names), out / MANIFEST_NAME)
    if gt is not None:
        _write_json(out / GROUND_TRUTH_NAME, gt.to_dict())
    log.info("wrote %d frames to %s", len(names), out)
    return EXIT_OK


def _prefetch(paths, bound: int = 2):
    """Read frames on a helper thread, at most ``bound`` ahead of the consumer."""
    q: queue.Queue = queue.Queue(maxsize=bound)
    stop = threading.Event()
    done = object()

    def reader():
        try:
            for p in paths:
                if stop.is_set():
                    return
                q.put((p, read_frame(p)))
        except BaseException as exc:  # handed to the consumer
            q.put((None, exc))
            return
        q.put((None, done))

    t = threading.Thread(target=reader, daemon=True)
    t.start()
    try:
        while True:
            _, item = q.get()
            if item is done:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        while t.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                t.join(0.01)


def _cmd_propagate(args) -> int:
    manifest = load_manifest(args.manifest)
    convention = args.vel_convention or manifest.velocity_convention
    try:
        cfg = PropagationConfig(
            init_strategy="from_file" if args.init == "file" else "positional",
            origin=args.origin, scale=args.scale, velocity_convention=convention,
            velocity_scale=args.vel_scale, bfec=args.bfec, smooth_iterations=args.smooth_iters,
            smooth_lambda=args.smooth_lambda, quantize=args.quantize, max_distance=args.max_distance,
            workers=args.threads,
        )
    except ValueError as exc:
        raise UsageError(f"propagate: {exc}") from None
    if cfg.bfec and cfg.velocity_convention != "current":
        log.warning("--bfec assumes current-motion velocities; convention is %r", cfg.velocity_convention)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext, fmt = (".obj", "obj") if args.format == "obj" else (".ply", "ply_binary")
    names = [Path(f).with_suffix(ext).name for f in manifest.frames]
    if len(set(names)) != len(names):
        names = [f"frame_{i + 1:04d}{ext}" for i in range(len(names))]

    def sink(i, frame):
        write_frame(frame, out / names[i], fmt)

    t0 = time.perf_counter()
    summary = propagate_sequence(_prefetch(manifest.frame_paths()), cfg, sink)
    save_manifest(SequenceManifest(manifest.fps, cfg.velocity_convention, names), out / MANIFEST_NAME)
    _write_json(out / SUMMARY_NAME, {
        "version": 1,
        "source": str(args.manifest),
        "config": cfg.to_dict(),
        "frames": summary.frames,
        "fallbacks": summary.fallbacks,
        "fallbacks_per_frame": summary.fallbacks_per_frame,
    })
    log.info("propagated %d frames in %.2fs (%d fallbacks)", summary.frames,
             time.perf_counter() - t0, summary.fallbacks)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    manifest = load_manifest(args.manifest)
    frames = [read_frame(p) for p in manifest.frame_paths()]
    reference = None
    if args.ground_truth:
        gt = RigidGroundTruth.from_dict(json.loads(Path(args.ground_truth).read_text(encoding="utf-8")))
        if len(gt.rotations) != len(frames):
            raise ManifestError(f"ground truth has {len(gt.rotations)} frames, sequence has {len(frames)}")
        origin, scale = np.asarray(args.origin), np.asarray(args.scale)
        reference = lambda i, f: (gt.material(i, f.positions) - origin) * scale
    elif args.reference:
        ref_manifest = load_manifest(args.reference)
        ref_paths = ref_manifest.frame_paths()
        if len(ref_paths) != len(frames):
            raise ManifestError(f"reference has {len(ref_paths)} frames, sequence has {len(frames)}")

        def reference(i, f):
            r = read_frame(ref_paths[i])
            if r.uvws is None:
                raise MeshError(f"reference frame {ref_paths[i]} carries no uvws")
            return r.uvws

    fallbacks = None
    summary_path = Path(args.manifest).parent / SUMMARY_NAME
    if summary_path.is_file():
        fallbacks = json.loads(summary_path.read_text(encoding="utf-8")).get("fallbacks_per_frame")
    for i, f in enumerate(frames):
        if f.uvws is None:
            raise MeshError(f"frame {manifest.frames[i]} carries no uvws; run propagate first")
    report = evaluate(frames, reference, probes=args.probes, seed=args.seed, fallbacks=fallbacks).to_dict()
    report["manifest"] = str(args.manifest)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, report)
    if not args.no_plot:
        from .plotting import plot_report

        plot_report(report, out.with_suffix(".png"), title=Path(args.manifest).parent.name)
    return EXIT_OK


def _cmd_query(args) -> int:
    frame = read_frame(args.frame)
    loc, dist = closest_location(build_index(frame), args.point)
    print(f"triangle {loc.triangle}")
    print("barycentric %.17g %.17g %.17g" % loc.bary)
    print(f"distance {dist:.17g}")
    if frame.uvws is not None:
        i, j, k = frame.triangles[loc.triangle]
        b = loc.bary
        uvw = b[0] * frame.uvws[i] + b[1] * frame.uvws[j] + b[2] * frame.uvws[k]
        print("uvw %.9g %.9g %.9g" % tuple(uvw))
    else:
        print("uvw none")
    return EXIT_OK


def _write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


COMMANDS = {"gen": _cmd_gen, "propagate": _cmd_propagate, "metrics": _cmd_metrics, "query": _cmd_query}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PropagationError as exc:
        code = EXIT_IO if isinstance(exc.cause, (OSError, PlyError)) else EXIT_VALIDATION
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (ManifestError, MeshError, NoSurfaceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(cli_main())

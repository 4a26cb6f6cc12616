"""Acceptance criteria, one test each.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""
import filecmp

import numpy as np
import pytest

from uvwadvect.advect import PropagationConfig, propagate_sequence
from uvwadvect.cli import cli_main
from uvwadvect.mesh import MeshFrame
from uvwadvect.meshio import SequenceManifest, load_manifest, read_frame, save_manifest, write_frame
from uvwadvect.metrics import evaluate, probe_jitter, sample_probes
from uvwadvect.seqgen import Ball, GeneratorPreset, generate_preset, marching_cubes, metaball_field, uv_sphere
from uvwadvect.spatial import brute_force_closest, build_index

from conftest import random_frame
from test_seqgen import edge_counts

pytestmark = pytest.mark.acceptance


def propagate(frames, **kwargs):
    out = []
    propagate_sequence(frames, PropagationConfig(**kwargs), lambda i, f: out.append(f))
    return out


def rigid_drift(preset, **kwargs):
    seq, gt = generate_preset(preset)
    out = propagate(seq, **kwargs)
    report = evaluate(out, lambda i, f: gt.material(i, f.positions), probes=0)
    return report, out, gt


def test_c1_closest_location_matches_brute_force(criterion):
    rng = np.random.default_rng(1)
    frame = random_frame(rng, 600, 1000, uvws=False)
    pts = rng.uniform(-3, 3, size=(1000, 3))
    got = build_index(frame).query(pts)
    want = brute_force_closest(frame, pts)
    same_tri = np.array_equal(got[0], want[0])
    same_bary = np.array_equal(got[1], want[1])
    same_d2 = np.array_equal(got[2], want[2])
    ok = criterion(1, same_tri and same_bary and same_d2,
                   f"1000 queries vs brute force: triangle={same_tri} bary={same_bary} distance={same_d2}")
    assert ok


def test_c2_static_sequence_identity(criterion):
    frame = MeshFrame(*uv_sphere(24))
    out = propagate([frame] * 10)
    worst = max(float(np.abs(f.uvws - out[0].uvws).max()) for f in out)
    ok = criterion(2, worst == 0.0 and np.array_equal(out[0].uvws, frame.positions),
                   f"10 static frames, max |uvw - uvw_1| = {worst:.3g} (tol 0)")
    assert ok


def test_c3_rigid_translation(criterion):
    seq, gt = generate_preset(GeneratorPreset("translate_sphere", frames=100))
    out = propagate(seq)
    final = out[-1]
    drift = float(np.abs(final.uvws - gt.material(99, final.positions)).max())
    ok = criterion(3, drift <= 1e-6, f"translate_sphere 100 frames, final max component drift {drift:.3g} (tol 1e-6)")
    assert ok


def test_c4_remesh_convergence(criterion):
    coarse, _, _ = rigid_drift(GeneratorPreset("remesh_sphere", frames=30, resolution=16, resolution_b=12))
    fine, _, _ = rigid_drift(GeneratorPreset("remesh_sphere", frames=30, resolution=64, resolution_b=48))
    c, f = coarse.aggregate()["drift_mean"], fine.aggregate()["drift_mean"]
    ok = criterion(4, f < c, f"remesh_sphere mean drift res 64/48 = {f:.4g} < res 16/12 = {c:.4g}")
    assert ok


def test_c5_bfec_not_worse(criterion):
    preset = GeneratorPreset("rotate_sphere", frames=60, current_motion=True)
    plain, _, _ = rigid_drift(preset, velocity_convention="current")
    bfec, _, _ = rigid_drift(preset, velocity_convention="current", bfec=True)
    p, b = plain.aggregate()["drift_mean"], bfec.aggregate()["drift_mean"]
    ok = criterion(5, b <= p, f"rotate_sphere 60 frames mean drift with BFEC {b:.4g} <= without {p:.4g}")
    assert ok


def test_c6_smoothing_reduces_jitter(criterion):
    seq, _ = generate_preset(GeneratorPreset("metaballs_merge", frames=20, resolution=24))
    probes = sample_probes(list(seq), 64, seed=0)
    raw = probe_jitter(propagate(seq), probes)
    smooth = probe_jitter(propagate(seq, smooth_iterations=2, smooth_lambda=0.5), probes)
    ok = criterion(6, smooth <= raw,
                   f"metaballs_merge res 24 probe jitter smoothed {smooth:.4g} <= unsmoothed {raw:.4g}")
    assert ok


def test_c7_half_precision_decay(criterion):
    preset = GeneratorPreset("translate_sphere", frames=200)
    half, _, _ = rigid_drift(preset, quantize="half")
    full, _, _ = rigid_drift(preset)
    d = {k: half.records[k - 1].drift_mean for k in (50, 100, 200)}
    increasing = d[50] < d[100] < d[200]
    final_half, final_full = d[200], full.records[-1].drift_mean
    ratio_ok = final_half > 2 * final_full
    ok = criterion(7, increasing and ratio_ok,
                   f"half drift @50/100/200 = {d[50]:.4g}/{d[100]:.4g}/{d[200]:.4g} "
                   f"(strictly increasing: {increasing}); final half {final_half:.3g} > 2x none "
                   f"{final_full:.3g}: {ratio_ok}")
    assert ok


def test_c8_io_round_trip(criterion, tmp_path):
    rng = np.random.default_rng(8)
    failures = 0
    for i in range(100):
        f = random_frame(rng, int(rng.integers(3, 200)), int(rng.integers(0, 300)), uvws=bool(i % 2))
        for fmt in ("ply_ascii", "ply_binary"):
            p = tmp_path / f"{i}_{fmt}.ply"
            write_frame(f, p, fmt)
            g = read_frame(p)
            same = (np.array_equal(g.positions, f.positions.astype(np.float32))
                    and np.array_equal(g.velocities, f.velocities.astype(np.float32))
                    and np.array_equal(g.triangles, f.triangles)
                    and (g.uvws is None if f.uvws is None else np.array_equal(g.uvws, f.uvws.astype(np.float32))))
            failures += not same
    names = [p.name for p in sorted(tmp_path.glob("*.ply"))]
    m = SequenceManifest(30.0, "current", names)
    save_manifest(m, tmp_path / "seq.json")
    manifest_ok = load_manifest(tmp_path / "seq.json") == m
    ok = criterion(8, failures == 0 and manifest_ok,
                   f"100 frames x 2 PLY formats, {failures} mismatches; manifest equality {manifest_ok}")
    assert ok


def test_c9_marching_cubes_sphere(criterion):
    radius = np.sqrt(1 - 0.5 ** (1 / 3))
    h = 2.4 / 48
    f = marching_cubes(lambda q: metaball_field(q, [Ball((0, 0, 0), 1.0)])[0],
                       (-1.2, -1.2, -1.2), h, (49, 49, 49), 0.5)
    closed = f.n_triangles > 0 and all(c == 2 for c in edge_counts(f.triangles).values())
    dev = float(np.abs(np.linalg.norm(f.positions, axis=1) - radius).max())
    ok = criterion(9, closed and dev <= np.sqrt(3) * h,
                   f"res 48 sphere: {f.n_triangles} triangles, closed={closed}, "
                   f"max radial deviation {dev:.3g} <= cell diagonal {np.sqrt(3) * h:.3g}")
    assert ok


def test_c10_thread_determinism(criterion, tmp_path):
    seq = tmp_path / "seq"
    assert cli_main(["gen", "--preset", "translate_sphere", "--frames", "100", "--out", str(seq)]) == 0
    outs = []
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}"
        assert cli_main(["propagate", "--manifest", str(seq / "seq.json"), "--threads", threads,
                         "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    match, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
    ok = criterion(10, not mismatch and not errors and len(match) == 102,
                   f"threads 1 vs 8: {len(match)} identical files, {len(mismatch)} differ")
    assert ok

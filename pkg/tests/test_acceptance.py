"""Acceptance gate: one test per acceptance criterion, at stated tolerances.

Every test prints a single [PASS] line on success (run with -s or look at
captured output); a failing criterion fails its test. The suite is
self-contained: oracles are written out here, independent of the library
paths they check.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from spaceground.benchmark import iou, success
from spaceground.cli import main as cli_main
from spaceground.errors import DegenerateHistogramError
from spaceground.objects import ObjectMaskSet, load_masks
from spaceground.raster import (
    Ellipse,
    otsu_threshold,
    quantize_levels,
    rasterize_ellipse,
)
from spaceground.refiner import (
    RefinerModel,
    TrainConfig,
    TrainSample,
    combine_logits,
    node_features,
    pseudo_logits,
    refine,
    refiner_loss,
    select_placement_point,
    train,
)
from spaceground.superpixels import SuperpixelGraph, build_graph, slic
from spaceground.raster import to_grayscale
from spaceground.synthetic import generate_dataset, gt_covering_responder
from spaceground.vlm import (
    FEEDBACK_PREFIX,
    ReasoningConfig,
    ScriptedVlmClient,
    ground,
    validate_physical,
)

GOLDEN_DIR = Path(__file__).parent / "data" / "golden_dataset"
GOLDEN_REPORT = Path(__file__).parent / "data" / "golden_report.json"


def done(name: str) -> None:
    print(f"[PASS] {name}")


def texture(w, h, seed):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    fx, fy = rng.uniform(5, 13, size=2)
    return np.clip(
        0.5 + 0.3 * np.sin(xx / fx) * np.cos(yy / fy) + 0.07 * rng.standard_normal((h, w)),
        0,
        1,
    )


# ---------------------------------------------------------------------------
# 1. ellipse rasterization vs quadratic-form oracle
# ---------------------------------------------------------------------------

def test_acceptance_ellipse_rasterization():
    rng = np.random.default_rng(101)
    ellipses = []
    for _ in range(50):
        a = rng.uniform(1.0, 45.0)
        ellipses.append(
            Ellipse(
                cx=rng.uniform(-10, 138),
                cy=rng.uniform(-10, 138),
                a=a,
                b=rng.uniform(0.5, a),
                theta=rng.uniform(-180, 180),
            )
        )
    t0 = time.perf_counter()
    masks = [rasterize_ellipse(e, 128, 128) for e in ellipses]
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0, f"rasterization took {elapsed:.2f}s"

    for e, mask in zip(ellipses, masks):
        t = np.deg2rad(e.theta)
        ct, st = np.cos(t), np.sin(t)
        oracle = np.zeros((128, 128), dtype=bool)
        for y in range(128):
            for x in range(128):
                dx, dy = x - e.cx, y - e.cy
                du = dx * ct + dy * st
                dv = -dx * st + dy * ct
                oracle[y, x] = (du / e.a) ** 2 + (dv / e.b) ** 2 <= 1.0
        assert (mask == oracle).all(), f"rasterization mismatch for {e}"
    done("ellipse rasterization: exact oracle equality on 50 random ellipses "
         f"({elapsed*1000:.0f} ms)")


# ---------------------------------------------------------------------------
# 2. Otsu vs exhaustive between-class-variance search
# ---------------------------------------------------------------------------

def test_acceptance_otsu_oracle():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    checked = 0
    for _ in range(100):
        shape = (int(rng.integers(4, 20)), int(rng.integers(4, 20)))
        if rng.random() < 0.4:
            prob = rng.choice(rng.random(int(rng.integers(2, 5))), size=shape)
        else:
            prob = rng.random(shape)
        try:
            thr, _ = otsu_threshold(prob)
        except DegenerateHistogramError:
            assert len(np.unique(quantize_levels(prob))) < 2
            continue
        returned_bin = int(thr * 255 - 0.5 + 1e-9)

        levels = quantize_levels(prob).ravel()
        best_var, best_bins = -1.0, []
        for t in range(256):
            lo, hi = levels[levels <= t], levels[levels > t]
            if len(lo) == 0 or len(hi) == 0:
                continue
            var = len(lo) * len(hi) * (lo.mean() - hi.mean()) ** 2
            if var > best_var + 1e-9:
                best_var, best_bins = var, [t]
            elif abs(var - best_var) <= 1e-9:
                best_bins.append(t)
        assert returned_bin == int(round(np.mean(best_bins))), "threshold bin differs from oracle"
        checked += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0, f"otsu acceptance took {elapsed:.2f}s"
    done(f"otsu threshold: identical bin to exhaustive oracle on {checked} random maps "
         f"({elapsed:.2f} s)")


# ---------------------------------------------------------------------------
# 3. SLIC properties on generated textures
# ---------------------------------------------------------------------------

def component_count_per_label(labels):
    """Single-pass BFS component labeling, counting components per label."""
    h, w = labels.shape
    seen = np.zeros((h, w), dtype=bool)
    counts = {}
    for sy in range(h):
        for sx in range(w):
            if seen[sy, sx]:
                continue
            lab = labels[sy, sx]
            counts[lab] = counts.get(lab, 0) + 1
            stack = [(sy, sx)]
            seen[sy, sx] = True
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and labels[ny, nx] == lab:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
    return counts


def test_acceptance_slic_properties():
    sizes = [(64, 64), (96, 80), (128, 96), (160, 120), (320, 240)]
    t0 = time.perf_counter()
    for i in range(20):
        w, h = sizes[i % len(sizes)]
        # default-density regime: cells of roughly 16 to 23 pixels across
        target = max(12, (w * h) // (256 if i % 2 == 0 else 512))
        gray = texture(w, h, seed=300 + i)
        sp = slic(gray, target_count=target, compactness=10, iterations=10, seed=i)
        hist = np.bincount(sp.labels.ravel(), minlength=sp.count)
        assert hist.sum() == w * h, "not a partition"
        assert (hist > 0).all(), "unused label"
        assert 0.7 * target <= sp.count <= 1.3 * target, (
            f"count {sp.count} outside +-30% of {target}"
        )
        counts = component_count_per_label(sp.labels)
        assert all(c == 1 for c in counts.values()), "disconnected superpixel"
        again = slic(gray, target_count=target, compactness=10, iterations=10, seed=i)
        assert (again.labels == sp.labels).all(), "nondeterministic"
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"slic acceptance took {elapsed:.2f}s"
    done(f"slic: partition/connectivity/determinism/count-tolerance on 20 textures "
         f"({elapsed:.1f} s)")


# ---------------------------------------------------------------------------
# 4. analytic gradients vs central finite differences (full refiner)
# ---------------------------------------------------------------------------

def test_acceptance_gradient_check():
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    h_step, tol = 1e-4, 1e-4
    worst = 0.0
    for trial in range(10):
        n = int(rng.integers(5, 31))
        edges = np.asarray(
            [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.25],
            dtype=np.int64,
        ).reshape(-1, 2)
        sample = TrainSample(
            graph=SuperpixelGraph(count=n, edges=edges),
            features=rng.normal(size=(n, 7)),
            pseudo=rng.normal(size=n),
            labels=(rng.random(n) > 0.5).astype(np.int64),
        )
        model = RefinerModel.initialize(hidden=8, depth=3, alpha=0.5, seed=trial)
        _, grads = refiner_loss(model, sample, gamma=2.0, balance=0.25)

        def loss():
            return refiner_loss(model, sample, gamma=2.0, balance=0.25)[0]

        flats = list(zip(model.params(), grads.params()))
        for param, grad in flats:
            p, g = param.ravel(), grad.ravel()
            for i in range(p.size):
                orig = p[i]
                p[i] = orig + h_step
                up = loss()
                p[i] = orig - h_step
                down = loss()
                p[i] = orig
                fd = (up - down) / (2 * h_step)
                err = abs(g[i] - fd) / max(abs(fd) + abs(g[i]), 1e-4)
                worst = max(worst, err)
                assert err <= tol, f"param gradient off by rel err {err:.2e}"
        orig = model.b_out
        model.b_out = orig + h_step
        up = loss()
        model.b_out = orig - h_step
        down = loss()
        model.b_out = orig
        fd = (up - down) / (2 * h_step)
        err = abs(grads.b_out - fd) / max(abs(fd) + abs(grads.b_out), 1e-4)
        worst = max(worst, err)
        assert err <= tol
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"gradient check took {elapsed:.2f}s"
    done(f"gradient check: full-refiner analytic vs central differences, worst rel err "
         f"{worst:.2e} over 10 graphs ({elapsed:.1f} s)")


# ---------------------------------------------------------------------------
# 5. blend endpoints reproduce inputs bitwise
# ---------------------------------------------------------------------------

def test_acceptance_blend_endpoints():
    rng = np.random.default_rng(505)
    pseudo = rng.normal(size=64)
    residual = rng.normal(size=64)
    assert (combine_logits(pseudo, residual, 1.0) == pseudo).all()
    assert (combine_logits(pseudo, residual, 0.0) == residual).all()
    done("blend endpoints: alpha in {0, 1} reproduces the respective input bitwise")


# ---------------------------------------------------------------------------
# 6. refiner capacity: overfit 5 synthetic samples to IoU >= 0.9
# ---------------------------------------------------------------------------

def test_acceptance_refiner_capacity(tmp_path):
    t0 = time.perf_counter()
    samples = generate_dataset(tmp_path / "capacity", n_samples=5, seed=42)
    prepared = []
    for s in samples:
        img = s.load_image()
        sp = s.load_superpixels()
        objs = load_masks(s.resolve(s.objects_path))
        client = ScriptedVlmClient(responder=gt_covering_responder(s))
        trace = ground(client, img, s.instruction, objs, ReasoningConfig())
        labels = np.zeros(sp.count, dtype=np.int64)
        labels[list(s.gt_superpixels)] = 1
        prepared.append(
            (
                s,
                sp,
                img,
                trace,
                TrainSample(
                    graph=build_graph(sp),
                    features=node_features(
                        to_grayscale(img), trace.final_region, sp, s.distance_flag or False
                    ),
                    pseudo=pseudo_logits(list(trace.final_ellipses), sp, 4.0),
                    labels=labels,
                ),
            )
        )
    cfg = TrainConfig(learning_rate=2.0, steps=2000, seed=7, alpha=0.5)
    model, curve = train([p[4] for p in prepared], cfg)
    ious = []
    for s, sp, img, trace, _ in prepared:
        _, final = refine(trace, img, sp, model, s.distance_flag or False)
        ious.append(iou(final, s.gt_mask(sp)))
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"capacity run took {elapsed:.1f}s"
    assert all(v >= 0.9 for v in ious), f"per-sample IoU below 0.9: {ious}"
    done(
        "refiner capacity: 5-sample overfit, per-sample IoU "
        f"{['%.3f' % v for v in ious]} within 2000 steps, seed 7 ({elapsed:.1f} s)"
    )


# ---------------------------------------------------------------------------
# 7. metrics: IoU oracle equality and success disjunction
# ---------------------------------------------------------------------------

def test_acceptance_metrics():
    rng = np.random.default_rng(707)
    for _ in range(100):
        shape = (int(rng.integers(2, 12)), int(rng.integers(2, 12)))
        pred = rng.random(shape) > 0.5
        gt = rng.random(shape) > 0.5
        inter = union = 0
        for y in range(shape[0]):
            for x in range(shape[1]):
                inter += pred[y, x] and gt[y, x]
                union += pred[y, x] or gt[y, x]
        expected = inter / union if union else 0.0
        assert iou(pred, gt) == expected

    # argmax inside gt, centroid outside
    gt = np.zeros((10, 10), dtype=bool)
    gt[0, 0] = True
    prob = np.zeros((10, 10))
    prob[0, 0] = 1.0
    final = np.zeros((10, 10), dtype=bool)
    final[8:, 8:] = True
    assert success(prob, final, gt) is True
    # both outside
    assert success(1 - prob, final, gt) is False
    # identity prediction (convex gt: centroid inside)
    gt2 = np.zeros((10, 10), dtype=bool)
    gt2[3:6, 4:8] = True
    assert success(gt2.astype(float), gt2, gt2) is True
    done("metrics: IoU nested-loop oracle equality (100 pairs) and success disjunction fixtures")


# ---------------------------------------------------------------------------
# 8. propose-validate loop with a scripted model
# ---------------------------------------------------------------------------

def proposal_json(cx, cy, a, b):
    return json.dumps(
        {"center_coordinates": [[cx, cy]], "semi_axes_lengths": [[a, b]], "angle": 0.0}
    )


def loop_scene():
    rng = np.random.default_rng(808)
    img = rng.integers(0, 256, size=(96, 128, 3), dtype=np.uint8)
    obstacle = rasterize_ellipse(Ellipse(cx=100, cy=70, a=10, b=8), 128, 96)
    return img, ObjectMaskSet(masks=[obstacle])


def test_acceptance_loop_early_exit():
    img, objects = loop_scene()
    client = ScriptedVlmClient(script=[proposal_json(30, 30, 10, 6), "pass"])
    trace = ground(client, img, "left of the box", objects)
    assert trace.iterations_used == 1 and len(trace.records) == 1
    done("loop (a): early exit after 1 iteration on pass-pass")


def test_acceptance_loop_feedback_verbatim():
    img, objects = loop_scene()
    reason = "The region sits below the box instead of to its left."
    client = ScriptedVlmClient(
        script=[proposal_json(30, 30, 10, 6), reason + " fail", proposal_json(60, 30, 10, 6), "pass"]
    )
    trace = ground(client, img, "left of the box", objects)
    assert trace.iterations_used == 2
    assert reason in trace.records[1].bundle.text
    assert trace.records[1].bundle.text.count(FEEDBACK_PREFIX) == 1
    done("loop (b): 2 iterations on fail-then-pass, iteration-0 reasoning verbatim in the k=1 prompt")


def test_acceptance_loop_iteration_cap():
    img, objects = loop_scene()
    client = ScriptedVlmClient(
        script=[proposal_json(30, 30, 10, 6), "fail", proposal_json(50, 40, 9, 5), "fail"]
    )
    trace = ground(client, img, "left of the box", objects)
    assert trace.iterations_used == 2
    expected = rasterize_ellipse(Ellipse(cx=50, cy=40, a=9, b=5), 128, 96)
    assert (trace.final_region == expected).all()
    done("loop (c): cap of 2 iterations honored on fail-fail, final region = last proposal")


def test_acceptance_loop_free_physical_pass():
    img, objects = loop_scene()
    region = rasterize_ellipse(Ellipse(cx=20, cy=20, a=8, b=6), 128, 96)
    joint = rasterize_ellipse(Ellipse(cx=100, cy=70, a=10, b=8), 128, 96)
    client = ScriptedVlmClient(script=[])
    verdict = validate_physical(client, region, joint, img, "left of the box")
    assert verdict.passed and client.calls == 0 and verdict.vlm_calls == 0
    done("loop (d): zero validator model calls when region and joint object mask are disjoint")


# ---------------------------------------------------------------------------
# 9. end-to-end determinism of cmd_ground without network
# ---------------------------------------------------------------------------

def test_acceptance_ground_determinism(tmp_path):
    samples = generate_dataset(tmp_path / "scene", n_samples=1, seed=3)
    sample = samples[0]
    script = tmp_path / "script.json"
    script.write_text(json.dumps([proposal_json(40, 30, 10, 7), "pass"]))
    out = tmp_path / "out"
    args = [
        "ground",
        str(sample.resolve(sample.image)),
        "left of the red block",
        "--vlm-endpoint",
        "mock:" + str(script),
        "--object-masks",
        str(sample.resolve(sample.objects_path)),
        "--transport",
        "disabled",
        "--slic-target-count",
        "96",
        "--output-dir",
        str(out),
    ]
    runner = CliRunner()
    first = runner.invoke(cli_main, args)
    assert first.exit_code == 0, first.output
    snapshot = {
        str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()
    }
    second = runner.invoke(cli_main, args)
    assert second.exit_code == 0, second.output
    after = {
        str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()
    }
    assert after == snapshot
    done("end-to-end: cmd_ground byte-identical across runs, zero network under disabled transport")


# ---------------------------------------------------------------------------
# 10. synthetic benchmark golden run
# ---------------------------------------------------------------------------

def test_acceptance_golden_run(tmp_path):
    out = tmp_path / "out"
    runner = CliRunner()
    result = runner.invoke(
        cli_main,
        [
            "evaluate",
            str(GOLDEN_DIR / "manifest.jsonl"),
            "--split",
            "test",
            "--repeats",
            "2",
            "--vlm-endpoint",
            "mock-cover-gt",
            "--alpha",
            "1.0",
            "--transport",
            "disabled",
            "--output-dir",
            str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text())
    golden = json.loads(GOLDEN_REPORT.read_text())
    assert report == golden, "report deviates from the golden file"
    assert report["total"]["success_rate"]["mean"] == 1.0
    cats = report["categories"]
    assert sorted(cats) == ["multi-hop", "single-nonunique", "single-unique"]
    for metric in ("success_rate", "iou"):
        means = [cats[c][metric]["mean"] for c in cats]
        assert report["total"][metric]["mean"] == np.mean(means)
    done("golden run: 12-sample manifest, 100% success, exact aggregation, report matches golden file")


# ---------------------------------------------------------------------------
# 11. placement point vs exhaustive sliding-window oracle
# ---------------------------------------------------------------------------

def test_acceptance_placement_oracle():
    rng = np.random.default_rng(1111)
    for _ in range(20):
        h, w = int(rng.integers(6, 16)), int(rng.integers(6, 16))
        prob = rng.random((h, w))
        final = rng.random((h, w)) > 0.45
        if not final.any():
            final[h // 2, w // 2] = True
        fh, fw = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        footprint = rng.random((fh, fw)) > 0.3
        footprint[0, 0] = True

        best_score, best = -1.0, None
        for y in range(h - fh + 1):
            for x in range(w - fw + 1):
                score = 0.0
                for dy in range(fh):
                    for dx in range(fw):
                        if footprint[dy, dx] and final[y + dy, x + dx]:
                            score += prob[y + dy, x + dx]
                if score > best_score:
                    best_score, best = score, (x + fw // 2, y + fh // 2)
        assert select_placement_point(prob, final, footprint) == best
    done("placement point: equals the exhaustive sliding-window oracle on 20 random instances")

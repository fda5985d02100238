"""Dataset schema, metrics, and the category-aware evaluation runner.

A dataset is a JSONL manifest; each line describes one sample: an image, an
instruction, its category and split, a frozen superpixel map (label PNG plus
parameters), ground-truth superpixel ids, and the object mask source. Ground
truth is stored against the frozen label map so annotations survive changes
to the segmentation code.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pngio
from .errors import SchemaError
from .superpixels import SlicParams, SuperpixelMap, project_to_pixels
from .vlm.loop import GroundingTrace

CATEGORIES = ("single-unique", "single-nonunique", "multi-hop")
SPLITS = ("train", "val", "test")
OBJECT_KINDS = ("instance_png", "mask_dir", "detector")


@dataclass(frozen=True)
class GroundingSample:
    """One benchmark sample; paths are relative to the manifest directory."""

    id: str
    image: str
    instruction: str
    category: str
    split: str
    labels_png: str
    superpixel_count: int
    slic_params: SlicParams
    gt_superpixels: tuple[int, ...]
    objects_kind: str
    objects_path: str | None
    distance_flag: bool | None
    base_dir: Path

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel

    def load_image(self) -> np.ndarray:
        return pngio.decode_image_png(self.resolve(self.image).read_bytes())

    def load_superpixels(self) -> SuperpixelMap:
        labels = pngio.decode_labels_png(self.resolve(self.labels_png).read_bytes())
        return SuperpixelMap(labels=labels, count=self.superpixel_count, params=self.slic_params)

    def gt_mask(self, sp: SuperpixelMap | None = None) -> np.ndarray:
        sp = sp or self.load_superpixels()
        values = np.zeros(sp.count)
        values[list(self.gt_superpixels)] = 1.0
        return project_to_pixels(sp, values) > 0.5


def _parse_sample(line: str, lineno: int, base_dir: Path) -> GroundingSample:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"<line {lineno}>", "json", str(exc)) from exc
    sid = doc.get("id")
    if not sid or not isinstance(sid, str):
        raise SchemaError(f"<line {lineno}>", "id", "missing or non-string id")

    def need(name):
        if name not in doc:
            raise SchemaError(sid, name, "missing field")
        return doc[name]

    category = need("category")
    if category not in CATEGORIES:
        raise SchemaError(sid, "category", f"{category!r} not in {CATEGORIES}")
    split = need("split")
    if split not in SPLITS:
        raise SchemaError(sid, "split", f"{split!r} not in {SPLITS}")

    sp_doc = need("superpixels")
    try:
        labels_png = sp_doc["labels_png"]
        count = int(sp_doc["L"])
        params = SlicParams.from_dict(sp_doc["params"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(sid, "superpixels", f"malformed: {exc}") from exc
    if count < 1:
        raise SchemaError(sid, "superpixels", f"L must be >= 1, got {count}")

    gt = need("gt_superpixels")
    if not isinstance(gt, list) or not gt:
        raise SchemaError(sid, "gt_superpixels", "a sample must have a nonempty target region")
    for g in gt:
        if not isinstance(g, int) or not 0 <= g < count:
            raise SchemaError(sid, "gt_superpixels", f"id {g} outside [0, {count})")

    obj_doc = need("objects")
    kind = obj_doc.get("kind")
    if kind not in OBJECT_KINDS:
        raise SchemaError(sid, "objects", f"kind {kind!r} not in {OBJECT_KINDS}")
    path = obj_doc.get("path")
    if kind in ("instance_png", "mask_dir") and not path:
        raise SchemaError(sid, "objects", f"kind {kind!r} requires a path")

    flag = doc.get("distance_flag")
    if flag is not None and not isinstance(flag, bool):
        raise SchemaError(sid, "distance_flag", "must be a boolean when present")

    return GroundingSample(
        id=sid,
        image=need("image"),
        instruction=need("instruction"),
        category=category,
        split=split,
        labels_png=labels_png,
        superpixel_count=count,
        slic_params=params,
        gt_superpixels=tuple(gt),
        objects_kind=kind,
        objects_path=path,
        distance_flag=flag,
        base_dir=base_dir,
    )


def load_dataset(manifest: str | Path) -> list[GroundingSample]:
    """Parse and validate every sample of a JSONL manifest."""
    manifest = Path(manifest)
    samples = []
    with manifest.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                samples.append(_parse_sample(line, lineno, manifest.parent))
    seen = set()
    for s in samples:
        if s.id in seen:
            raise SchemaError(s.id, "id", "duplicate sample id")
        seen.add(s.id)
    return samples


def split_counts(samples: list[GroundingSample]) -> dict[str, int]:
    counts = {split: 0 for split in SPLITS}
    for s in samples:
        counts[s.split] += 1
    return counts


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def success(prob: np.ndarray, final: np.ndarray, gt: np.ndarray) -> bool:
    """A prediction succeeds if the maximum-probability pixel or the rounded
    centroid of the final mask lies inside the ground truth.

    Argmax ties resolve to the smallest (y, x); the centroid disjunct is
    false for an empty prediction.
    """
    if prob.shape != gt.shape or final.shape != gt.shape:
        raise ValueError(f"shape mismatch: prob {prob.shape}, final {final.shape}, gt {gt.shape}")
    flat = int(np.argmax(prob))
    ay, ax = divmod(flat, prob.shape[1])
    if gt[ay, ax]:
        return True
    if final.any():
        ys, xs = np.nonzero(final)
        cy = int(np.floor(ys.mean() + 0.5))
        cx = int(np.floor(xs.mean() + 0.5))
        if gt[cy, cx]:
            return True
    return False


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union in pixel space; 0 when both masks are empty."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} != gt {gt.shape}")
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(pred, gt).sum() / union)


# ---------------------------------------------------------------------------
# evaluation runner
# ---------------------------------------------------------------------------

@dataclass
class PipelineOutcome:
    prob: np.ndarray
    final: np.ndarray
    trace: GroundingTrace | None = None
    vlm_calls: int = 0


@dataclass
class SampleRow:
    id: str
    category: str
    repeat: int
    success: bool
    iou: float
    vlm_calls: int
    failed: bool = False
    error: str | None = None


@dataclass
class EvalReport:
    categories: dict
    total: dict
    rows: list[SampleRow]
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "categories": self.categories,
            "total": self.total,
            "rows": [vars(r) for r in self.rows],
            "metadata": self.metadata,
        }


def _mean_std(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def evaluate(
    pipeline,
    samples: list[GroundingSample],
    repeats: int = 1,
    max_workers: int = 1,
    trace_dir: str | Path | None = None,
) -> EvalReport:
    """Run ``pipeline(sample) -> PipelineOutcome`` over all samples.

    Per-category success rate and IoU are averaged per repeat; the report
    carries mean and std over repeats, with Total the unweighted mean across
    categories. A failing sample is recorded (metrics 0, failure flag) and
    never aborts the run. With ``max_workers`` > 1 samples run concurrently;
    rows always assemble in manifest order per repeat.
    """
    if not samples:
        raise ValueError("evaluate needs at least one sample")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")

    def run_one(sample: GroundingSample, repeat: int) -> SampleRow:
        try:
            outcome = pipeline(sample)
            gt = sample.gt_mask()
            row = SampleRow(
                id=sample.id,
                category=sample.category,
                repeat=repeat,
                success=success(outcome.prob, outcome.final, gt),
                iou=iou(outcome.final, gt),
                vlm_calls=outcome.vlm_calls,
            )
            if trace_dir is not None:
                _persist_trace(Path(trace_dir), sample, repeat, outcome)
            return row
        except Exception as exc:  # isolation contract: record, never abort
            return SampleRow(
                id=sample.id,
                category=sample.category,
                repeat=repeat,
                success=False,
                iou=0.0,
                vlm_calls=0,
                failed=True,
                error=f"{type(exc).__name__}: {exc}",
            )

    rows: list[SampleRow] = []
    for repeat in range(repeats):
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                rows.extend(pool.map(lambda s: run_one(s, repeat), samples))
        else:
            rows.extend(run_one(s, repeat) for s in samples)

    present = [c for c in CATEGORIES if any(r.category == c for r in rows)]
    per_repeat: dict[str, dict[str, list[float]]] = {c: {"success": [], "iou": []} for c in present}
    total_success, total_iou = [], []
    for repeat in range(repeats):
        cat_success, cat_iou = [], []
        for cat in present:
            batch = [r for r in rows if r.repeat == repeat and r.category == cat]
            sr = float(np.mean([r.success for r in batch]))
            ji = float(np.mean([r.iou for r in batch]))
            per_repeat[cat]["success"].append(sr)
            per_repeat[cat]["iou"].append(ji)
            cat_success.append(sr)
            cat_iou.append(ji)
        total_success.append(float(np.mean(cat_success)))
        total_iou.append(float(np.mean(cat_iou)))

    categories = {
        cat: {
            "success_rate": _mean_std(per_repeat[cat]["success"]),
            "iou": _mean_std(per_repeat[cat]["iou"]),
        }
        for cat in present
    }
    # Total mean is computed from the reported category means so the
    # unweighted-mean invariant holds exactly, not just to rounding.
    total = {
        "success_rate": {
            "mean": float(np.mean([categories[c]["success_rate"]["mean"] for c in present])),
            "std": float(np.asarray(total_success).std()),
        },
        "iou": {
            "mean": float(np.mean([categories[c]["iou"]["mean"] for c in present])),
            "std": float(np.asarray(total_iou).std()),
        },
    }
    metadata = {
        "repeats": repeats,
        "n_samples": len(samples),
        "categories_present": list(present),
        "failed_rows": sum(1 for r in rows if r.failed),
        "std_convention": "std over repeats (population)",
    }
    return EvalReport(categories=categories, total=total, rows=rows, metadata=metadata)


def _persist_trace(root: Path, sample: GroundingSample, repeat: int, outcome: PipelineOutcome) -> None:
    out = root / sample.id / f"repeat{repeat}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "prob.png").write_bytes(pngio.encode_prob_png(outcome.prob))
    (out / "final_mask.png").write_bytes(pngio.encode_mask_png(outcome.final))
    if outcome.trace is None:
        return
    for record in outcome.trace.records:
        k = record.bundle.iteration
        (out / f"iter{k}_prompt.png").write_bytes(pngio.encode_image_png(record.bundle.visual))
        (out / f"iter{k}_prompt.txt").write_text(record.bundle.text)
        (out / f"iter{k}_response.txt").write_text(record.proposal.raw_text)
        verdicts = [
            {
                "kind": v.kind,
                "passed": v.passed,
                "reasoning": v.reasoning,
                "segments": [list(s) for s in v.segments],
                "vlm_calls": v.vlm_calls,
            }
            for v in record.verdicts
        ]
        (out / f"iter{k}_verdicts.json").write_text(json.dumps(verdicts, indent=1))


def report_csv(report: EvalReport) -> str:
    """Per-sample rows as CSV (header + one line per row)."""
    lines = ["id,category,repeat,success,iou,vlm_calls,failed,error"]
    for r in report.rows:
        err = (r.error or "").replace(",", ";").replace("\n", " ")
        lines.append(
            f"{r.id},{r.category},{r.repeat},{int(r.success)},{r.iou:.6f},{r.vlm_calls},{int(r.failed)},{err}"
        )
    return "\n".join(lines) + "\n"

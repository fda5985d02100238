"""Synthetic tabletop scenes for offline evaluation and training.

The authors' benchmark images are not redistributable, so this module
fabricates deterministic scenes in the same manifest format: colored blocks
on a textured background, an instruction per category, a frozen superpixel
map, and superpixel-level ground truth around a designated free-space target.
Everything derives from the seed, so datasets are reproducible byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pngio
from .benchmark import CATEGORIES, GroundingSample, load_dataset
from .raster import to_grayscale
from .superpixels import SlicParams, slic

SCENE_W, SCENE_H = 160, 120
GT_RADIUS = 14.0

_BLOCK_COLORS = {
    "red": (200, 40, 40),
    "blue": (40, 70, 200),
    "green": (40, 160, 60),
    "yellow": (210, 190, 50),
}


@dataclass(frozen=True)
class SceneSpec:
    category: str
    instruction: str
    blocks: tuple  # ((color_name, cx, cy, half_w, half_h), ...)
    target: tuple[float, float]
    distance_flag: bool


def _scene_specs(index: int, rng: np.random.Generator) -> SceneSpec:
    """One deterministic scene per (category cycle, index)."""
    category = CATEGORIES[index % len(CATEGORIES)]
    jitter = lambda lo, hi: float(rng.uniform(lo, hi))
    if category == "single-unique":
        bx, by = jitter(100, 125), jitter(45, 75)
        blocks = (("red", bx, by, 12, 10),)
        target = (bx - jitter(38, 48), by)
        instruction = "to the left of the red block"
        flag = False
    elif category == "single-nonunique":
        y1, y2 = jitter(30, 45), jitter(75, 95)
        x_shared = jitter(95, 120)
        blocks = (("blue", x_shared, y1, 10, 8), ("blue", x_shared + jitter(-6, 6), y2, 10, 8))
        top = min(y1, y2)
        target = (x_shared - jitter(35, 45), top)
        instruction = "to the left of the topmost blue block"
        flag = False
    else:  # multi-hop
        gx, gy = jitter(30, 45), jitter(50, 70)
        d = jitter(18, 24)
        blocks = (("green", gx, gy, 10, 8), ("yellow", gx + d, gy, 7, 6))
        target = (gx + 2 * d + jitter(14, 20), gy)
        instruction = (
            "to the right of the green block at twice the distance "
            "between the green block and the yellow block"
        )
        flag = True
    return SceneSpec(
        category=category,
        instruction=instruction,
        blocks=blocks,
        target=(min(max(target[0], 8), SCENE_W - 9), min(max(target[1], 8), SCENE_H - 9)),
        distance_flag=flag,
    )


def _render_scene(spec: SceneSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Image plus instance-label array (0 background, 1..N blocks).

    The target region is rendered as a darkened disk, so the ground truth is
    visually distinct and the superpixel segmentation snaps to its boundary,
    the way annotated regions align with appearance structure in real scenes.
    """
    yy, xx = np.mgrid[0:SCENE_H, 0:SCENE_W]
    base = 150 + 40 * np.sin(xx / 23.0) * np.cos(yy / 17.0) + 8 * rng.standard_normal((SCENE_H, SCENE_W))
    img = np.clip(base, 0, 255).astype(np.uint8)[..., None].repeat(3, axis=2)
    tx, ty = spec.target
    disk = (xx - tx) ** 2 + (yy - ty) ** 2 <= GT_RADIUS**2
    img[disk] = (img[disk] * 0.45).astype(np.uint8)
    instances = np.zeros((SCENE_H, SCENE_W), dtype=np.int64)
    for i, (color, cx, cy, hw, hh) in enumerate(spec.blocks, start=1):
        x0, x1 = int(cx - hw), int(cx + hw)
        y0, y1 = int(cy - hh), int(cy + hh)
        img[y0:y1, x0:x1] = _BLOCK_COLORS[color]
        instances[y0:y1, x0:x1] = i
    return img, instances


def _gt_ids(sp, target: tuple[float, float]) -> list[int]:
    """Superpixels whose centroid falls within the target radius (at least
    the one containing the target pixel)."""
    tx, ty = target
    ys, xs = np.mgrid[0 : sp.shape[0], 0 : sp.shape[1]]
    ids = []
    for lab in range(sp.count):
        members = sp.labels == lab
        cy = ys[members].mean()
        cx = xs[members].mean()
        if (cx - tx) ** 2 + (cy - ty) ** 2 <= GT_RADIUS**2:
            ids.append(lab)
    if not ids:
        ids = [int(sp.labels[int(round(ty)), int(round(tx))])]
    return ids


def generate_dataset(
    root: str | Path,
    n_samples: int = 12,
    seed: int = 0,
    split: str = "test",
    slic_params: SlicParams | None = None,
) -> list[GroundingSample]:
    """Write a synthetic dataset under ``root`` and return the loaded samples.

    Samples cycle through the three categories, so ``n_samples`` = 12 yields
    four per category.
    """
    root = Path(root)
    for sub in ("images", "superpixels", "objects"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    params = slic_params or SlicParams(target_count=96, compactness=10, iterations=10, seed=seed)

    lines = []
    for i in range(n_samples):
        rng = np.random.default_rng(seed * 100_003 + i)
        spec = _scene_specs(i, rng)
        img, instances = _render_scene(spec, rng)
        sp = slic(to_grayscale(img), params.target_count, params.compactness, params.iterations, params.seed)
        sid = f"s{i:04d}"
        (root / "images" / f"{sid}.png").write_bytes(pngio.encode_image_png(img))
        (root / "superpixels" / f"{sid}.png").write_bytes(pngio.encode_labels_png(sp.labels))
        (root / "objects" / f"{sid}.png").write_bytes(pngio.encode_labels_png(instances))
        lines.append(
            json.dumps(
                {
                    "id": sid,
                    "image": f"images/{sid}.png",
                    "instruction": spec.instruction,
                    "category": spec.category,
                    "split": split,
                    "superpixels": {
                        "labels_png": f"superpixels/{sid}.png",
                        "L": sp.count,
                        "params": params.to_dict(),
                    },
                    "gt_superpixels": _gt_ids(sp, spec.target),
                    "objects": {"kind": "instance_png", "path": f"objects/{sid}.png"},
                    "distance_flag": spec.distance_flag,
                }
            )
        )
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return load_dataset(manifest)


def gt_covering_responder(sample: GroundingSample):
    """Scripted-model responder tuned to cover one sample's ground truth.

    Proposal prompts get an ellipse centered on an interior pixel of the
    largest ground-truth superpixel and wide enough to cover the whole gt
    region; validator prompts get a "pass". Use one responder (and one
    scripted client) per sample.
    """
    sp = sample.load_superpixels()
    gt = sample.gt_mask(sp)
    largest = max(sample.gt_superpixels, key=lambda lab: int((sp.labels == lab).sum()))
    ys, xs = np.nonzero(sp.labels == largest)
    mx, my = xs.mean(), ys.mean()
    interior = int(np.argmin((xs - mx) ** 2 + (ys - my) ** 2))
    cx, cy = float(xs[interior]), float(ys[interior])
    gys, gxs = np.nonzero(gt)
    radius = float(np.sqrt((gxs - cx) ** 2 + (gys - cy) ** 2).max()) + 2.0
    proposal = json.dumps(
        {
            "center_coordinates": [[cx, cy]],
            "semi_axes_lengths": [[radius, radius]],
            "angle": 0.0,
        }
    )

    def respond(text: str, image=None) -> str:
        if "Placement Feasibility Check" in text or "Spatial Compliance" in text:
            return "The region matches the instruction. pass"
        return proposal

    return respond

"""Per-object binary masks: file ingestion or an external open-set detector.

The detector stands behind a small wire protocol (POST /detect with a base64
PNG and a text query) so any open-set segmentation service can be dropped in.
Detection runs once per scene, before the reasoning loop; the resulting mask
set is immutable.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pngio
from .errors import DimensionMismatchError, ResponseParseError
from .raster import union_masks
from .transport import RetryPolicy, Transport, call_with_retries

DETECTOR_QUERY = "object, objects"


@dataclass(frozen=True)
class ObjectMaskSet:
    """All object masks of one scene, in a stable order."""

    masks: list[np.ndarray]
    names: list[str | None] = field(default_factory=list)
    source: str = "file"

    def __post_init__(self):
        if not self.names:
            object.__setattr__(self, "names", [None] * len(self.masks))
        if len(self.names) != len(self.masks):
            raise DimensionMismatchError("names and masks must have equal length")
        shapes = {m.shape for m in self.masks}
        if len(shapes) > 1:
            raise DimensionMismatchError(f"object masks disagree on dimensions: {shapes}")

    def __len__(self) -> int:
        return len(self.masks)


def load_masks(path: str | Path) -> ObjectMaskSet:
    """Read object masks from a directory of PNGs or one instance-label PNG.

    A directory yields one mask per single-channel PNG in lexicographic
    order (masks may overlap). A single file is read as a 16-bit instance
    label image: one mask per nonzero id, ascending.
    """
    path = Path(path)
    if path.is_dir():
        masks, names = [], []
        for child in sorted(path.iterdir()):
            if child.suffix.lower() != ".png":
                continue
            masks.append(pngio.decode_mask_png(child.read_bytes()))
            names.append(child.stem)
        return ObjectMaskSet(masks=masks, names=names, source="file")

    labels = pngio.decode_labels_png(path.read_bytes())
    ids = [int(i) for i in np.unique(labels) if i != 0]
    masks = [labels == i for i in ids]
    return ObjectMaskSet(masks=masks, names=[str(i) for i in ids], source="file")


def detect_objects(
    transport: Transport,
    endpoint: str,
    img: np.ndarray,
    query: str = DETECTOR_QUERY,
    retry: RetryPolicy = RetryPolicy(),
) -> ObjectMaskSet:
    """Query the detector service for all object masks in ``img``."""
    payload = {
        "image": base64.b64encode(pngio.encode_image_png(img)).decode("ascii"),
        "query": query,
    }

    def attempt() -> dict:
        response = transport.post_json(endpoint, payload)
        try:
            encoded = response["masks"]
            names = response.get("names") or [None] * len(encoded)
            masks = [pngio.decode_mask_png(base64.b64decode(m)) for m in encoded]
        except Exception as exc:
            raise ResponseParseError(f"malformed detector response: {exc}") from exc
        return {"masks": masks, "names": list(names)}

    decoded = call_with_retries(attempt, retry)
    for m in decoded["masks"]:
        if m.shape != img.shape[:2]:
            raise DimensionMismatchError(
                f"detector mask shape {m.shape} != image {img.shape[:2]}"
            )
    return ObjectMaskSet(masks=decoded["masks"], names=decoded["names"], source="detector")


def joint_mask(objects: ObjectMaskSet, w: int, h: int) -> np.ndarray:
    """Union of all object masks; all-zero when the scene is empty."""
    return union_masks(objects.masks, shape=(h, w))

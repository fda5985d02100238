"""PNG serialization for the package's raster types.

Wire/file formats:

* RGB images            -> standard 8-bit RGB PNG
* binary masks          -> 8-bit single-channel PNG, 0 / 255
* probability maps      -> 16-bit single-channel PNG, value * 65535
* superpixel label maps -> 16-bit single-channel PNG of raw label ids
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError

PROB_SCALE = 65535


def encode_image_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_image_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def encode_mask_png(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L")) > 0


def encode_prob_png(prob: np.ndarray) -> bytes:
    prob = np.asarray(prob, dtype=np.float64)
    if prob.min() < 0 or prob.max() > 1:
        raise DimensionMismatchError("probability values must lie in [0, 1]")
    buf = io.BytesIO()
    arr = np.round(prob * PROB_SCALE).astype(np.uint16)
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def decode_prob_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im, dtype=np.float64) / PROB_SCALE


def encode_labels_png(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > np.iinfo(np.uint16).max:
        raise DimensionMismatchError("label ids must fit in uint16")
    buf = io.BytesIO()
    Image.fromarray(labels.astype(np.uint16)).save(buf, format="PNG")
    return buf.getvalue()


def decode_labels_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im, dtype=np.int64)


def write_bytes(path: str | Path, data: bytes) -> None:
    Path(path).write_bytes(data)


def read_bytes(path: str | Path) -> bytes:
    return Path(path).read_bytes()

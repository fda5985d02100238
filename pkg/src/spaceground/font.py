"""Embedded 5x7 bitmap font for grid tick values and axis labels.

Covers exactly the characters the grid renderer emits: digits plus the
letters of "x axis" / "y axis". Each glyph is 7 rows of 5 cells; set cells
are drawn as foreground pixels. No external font files are involved.
"""

from __future__ import annotations

import numpy as np

GLYPH_WIDTH = 5
GLYPH_HEIGHT = 7
GLYPH_ADVANCE = 6  # 5 columns + 1 column spacing

_GLYPHS = {
    "0": (
        "01110",
        "10001",
        "10011",
        "10101",
        "11001",
        "10001",
        "01110",
    ),
    "1": (
        "00100",
        "01100",
        "00100",
        "00100",
        "00100",
        "00100",
        "01110",
    ),
    "2": (
        "01110",
        "10001",
        "00001",
        "00010",
        "00100",
        "01000",
        "11111",
    ),
    "3": (
        "11111",
        "00010",
        "00100",
        "00010",
        "00001",
        "10001",
        "01110",
    ),
    "4": (
        "00010",
        "00110",
        "01010",
        "10010",
        "11111",
        "00010",
        "00010",
    ),
    "5": (
        "11111",
        "10000",
        "11110",
        "00001",
        "00001",
        "10001",
        "01110",
    ),
    "6": (
        "00110",
        "01000",
        "10000",
        "11110",
        "10001",
        "10001",
        "01110",
    ),
    "7": (
        "11111",
        "00001",
        "00010",
        "00100",
        "01000",
        "01000",
        "01000",
    ),
    "8": (
        "01110",
        "10001",
        "10001",
        "01110",
        "10001",
        "10001",
        "01110",
    ),
    "9": (
        "01110",
        "10001",
        "10001",
        "01111",
        "00001",
        "00010",
        "01100",
    ),
    "a": (
        "00000",
        "00000",
        "01110",
        "00001",
        "01111",
        "10001",
        "01111",
    ),
    "i": (
        "00100",
        "00000",
        "01100",
        "00100",
        "00100",
        "00100",
        "01110",
    ),
    "s": (
        "00000",
        "00000",
        "01111",
        "10000",
        "01110",
        "00001",
        "11110",
    ),
    "x": (
        "00000",
        "00000",
        "10001",
        "01010",
        "00100",
        "01010",
        "10001",
    ),
    "y": (
        "00000",
        "00000",
        "10001",
        "10001",
        "01111",
        "00001",
        "01110",
    ),
    " ": (
        "00000",
        "00000",
        "00000",
        "00000",
        "00000",
        "00000",
        "00000",
    ),
}


def text_pixels(text: str, x0: int, y0: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates covered by ``text`` with its top-left corner at (x0, y0).

    Returns parallel (xs, ys) int arrays. Characters without a glyph are
    skipped (they advance the cursor but draw nothing).
    """
    xs: list[int] = []
    ys: list[int] = []
    cursor = x0
    for ch in text:
        glyph = _GLYPHS.get(ch)
        if glyph is not None:
            for row, bits in enumerate(glyph):
                for col, bit in enumerate(bits):
                    if bit == "1":
                        xs.append(cursor + col)
                        ys.append(y0 + row)
        cursor += GLYPH_ADVANCE
    return np.asarray(xs, dtype=np.int64), np.asarray(ys, dtype=np.int64)


def text_width(text: str) -> int:
    """Advance width of ``text`` in pixels."""
    return GLYPH_ADVANCE * len(text)

"""Prompt construction: grid-overlaid visual prompts and templated text prompts.

Templates live as versioned text assets next to this module. The region
overlay is drawn in opaque red and the grid is always composited last so
gridline pixels stay black in every iteration.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..errors import PromptContractError
from ..raster import RED, mask_layer, overlay, render_grid

FEEDBACK_PREFIX = "Previous attempt failed because:"


def load_template(name: str) -> str:
    return (resources.files("spaceground.vlm") / "templates" / f"{name}.txt").read_text()


def make_visual_prompt(
    img: np.ndarray,
    region: np.ndarray | None,
    k: int,
    grid_interval: int = 100,
) -> np.ndarray:
    """Image with the coordinate grid on top; k > 0 adds the latest region in red.

    The region must be present exactly when k > 0.
    """
    if (region is None) == (k > 0):
        raise PromptContractError(f"iteration {k} {'requires' if k > 0 else 'forbids'} a region overlay")
    h, w = img.shape[:2]
    layers = []
    if region is not None:
        if region.shape != (h, w):
            raise PromptContractError(f"region shape {region.shape} != image {(h, w)}")
        layers.append(mask_layer(region, RED))
    layers.append(render_grid(w, h, grid_interval))
    return overlay(img, layers)


def compose_feedback(verdicts) -> str:
    """Concatenated reasoning of every failed verdict, behind a fixed prefix."""
    blocks = [f"[{v.kind}] {v.reasoning}" for v in verdicts if not v.passed]
    return FEEDBACK_PREFIX + "\n" + "\n".join(blocks)


def make_text_prompt(
    instruction: str,
    k: int,
    feedback: str | None = None,
    *,
    width: int | None = None,
    height: int | None = None,
    grid_interval: int = 100,
    max_ellipses: int = 4,
    guidance_body: str | None = None,
) -> str:
    """Region-proposal text prompt for iteration ``k``.

    Iterations after the first must carry nonempty validator feedback, which
    is appended verbatim. ``guidance_body`` optionally replaces the static
    guidance section with text produced by a prompt-generation model; the
    output format contract and the feedback section always stay fixed.
    """
    if not instruction:
        raise PromptContractError("instruction must be nonempty")
    if k == 0 and feedback:
        raise PromptContractError("iteration 0 cannot carry feedback")
    if k > 0 and not feedback:
        raise PromptContractError(f"iteration {k} requires validator feedback")

    feedback_section = f"\n{feedback}\n" if feedback else ""
    size_note = (
        f" The image is {width}x{height} pixels."
        if width is not None and height is not None
        else ""
    )
    text = load_template("propose").format(
        instruction=instruction,
        grid_interval=grid_interval,
        image_size_note=size_note,
        max_ellipses=max_ellipses,
        feedback_section=feedback_section,
    )
    if guidance_body:
        head, _, tail = text.partition("# Guidance")
        _, _, rest = tail.partition("# Steps")
        text = head + "# Guidance\n" + guidance_body.strip() + "\n\n# Steps" + rest
    return text


def make_validation_prompt(kind: str, instruction: str) -> str:
    """Text prompt for the physical or semantic validator."""
    if kind not in ("physical", "semantic"):
        raise PromptContractError(f"unknown validator kind {kind!r}")
    return load_template(kind).format(instruction=instruction)


def make_distance_prompt(instruction: str) -> str:
    return load_template("distance").format(instruction=instruction)

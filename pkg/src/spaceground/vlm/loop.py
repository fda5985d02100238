"""The grid-guided propose-validate loop.

Each iteration proposes a union-of-ellipses region, then runs two
validators. The physical check is free when the region avoids every object
mask; otherwise it costs one model query, as does the semantic check. A
both-pass returns immediately; a failure folds the validators' reasoning
into the next iteration's prompt. After the iteration cap the last proposal
is returned as-is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import PromptContractError, ResponseParseError
from ..objects import ObjectMaskSet, joint_mask
from ..raster import Ellipse, rasterize_ellipse, union_masks
from ..transport import RetryPolicy, call_with_retries
from .client import VlmClient
from .parsing import parse_ellipses, parse_verdict
from .prompts import compose_feedback, make_text_prompt, make_validation_prompt, make_visual_prompt

DEFAULT_MAX_ITERATIONS = 2
DEFAULT_MAX_ELLIPSES = 4


@dataclass(frozen=True)
class ReasoningConfig:
    grid_interval: int = 100
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    max_ellipses: int = DEFAULT_MAX_ELLIPSES
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    prompt_client: VlmClient | None = None


@dataclass(frozen=True)
class PromptBundle:
    """One iteration's prompt pair: composited visual plus templated text."""

    visual: np.ndarray
    text: str
    iteration: int
    feedback: str | None = None

    def __post_init__(self):
        if self.iteration == 0 and self.feedback:
            raise PromptContractError("iteration 0 cannot carry feedback")
        if self.iteration > 0 and not self.feedback:
            raise PromptContractError("later iterations require feedback")


@dataclass(frozen=True)
class ProposalResponse:
    ellipses: tuple[Ellipse, ...]
    raw_text: str


@dataclass(frozen=True)
class Verdict:
    kind: str  # "physical" | "semantic"
    passed: bool
    reasoning: str
    segments: tuple[tuple[str, bool], ...] = ()
    vlm_calls: int = 0


@dataclass(frozen=True)
class IterationRecord:
    bundle: PromptBundle
    proposal: ProposalResponse
    region: np.ndarray
    verdicts: tuple[Verdict, ...]


@dataclass(frozen=True)
class GroundingTrace:
    records: tuple[IterationRecord, ...]
    final_region: np.ndarray
    iterations_used: int
    vlm_calls: int

    @property
    def final_ellipses(self) -> tuple[Ellipse, ...]:
        return self.records[-1].proposal.ellipses


def propose_region(
    client: VlmClient, bundle: PromptBundle, config: ReasoningConfig = ReasoningConfig()
) -> tuple[ProposalResponse, np.ndarray]:
    """One proposal query: send the bundle, parse ellipses, union their masks.

    Transport failures and unparseable replies are retried up to the budget.
    """
    h, w = bundle.visual.shape[:2]

    def attempt() -> dict:
        raw = client.complete(bundle.text, bundle.visual)
        ellipses = parse_ellipses(raw)
        if len(ellipses) > config.max_ellipses:
            raise ResponseParseError(
                f"proposal contains {len(ellipses)} ellipses, limit is {config.max_ellipses}"
            )
        return {"raw": raw, "ellipses": ellipses}

    result = call_with_retries(attempt, config.retry)
    region = union_masks(
        [rasterize_ellipse(e, w, h) for e in result["ellipses"]], shape=(h, w)
    )
    return ProposalResponse(ellipses=tuple(result["ellipses"]), raw_text=result["raw"]), region


def validate_physical(
    client: VlmClient,
    region: np.ndarray,
    joint: np.ndarray,
    img: np.ndarray,
    instruction: str,
    config: ReasoningConfig = ReasoningConfig(),
) -> Verdict:
    """Placement feasibility: free pass when the region avoids all objects,
    otherwise one model query on the region-overlaid grid prompt."""
    if region.shape != joint.shape:
        raise PromptContractError(f"region shape {region.shape} != joint mask {joint.shape}")
    if not np.logical_and(region, joint).any():
        return Verdict(
            kind="physical",
            passed=True,
            reasoning="The region does not intersect any object mask, so placement is unobstructed.",
            vlm_calls=0,
        )
    visual = make_visual_prompt(img, region, k=1, grid_interval=config.grid_interval)
    text = make_validation_prompt("physical", instruction)
    before = client.calls

    def attempt() -> dict:
        raw = client.complete(text, visual)
        passed, _ = parse_verdict(raw)
        return {"raw": raw, "passed": passed}

    result = call_with_retries(attempt, config.retry)
    return Verdict(
        kind="physical",
        passed=result["passed"],
        reasoning=result["raw"],
        vlm_calls=client.calls - before,
    )


def validate_semantic(
    client: VlmClient,
    region: np.ndarray,
    img: np.ndarray,
    instruction: str,
    config: ReasoningConfig = ReasoningConfig(),
) -> Verdict:
    """Instruction compliance, with compositional instructions decomposed into
    segments that are judged individually. Reuses the physical visual prompt."""
    if not region.any():
        raise PromptContractError("semantic validation requires a nonempty region")
    visual = make_visual_prompt(img, region, k=1, grid_interval=config.grid_interval)
    text = make_validation_prompt("semantic", instruction)
    before = client.calls

    def attempt() -> dict:
        raw = client.complete(text, visual)
        passed, segments = parse_verdict(raw)
        return {"raw": raw, "passed": passed, "segments": segments}

    result = call_with_retries(attempt, config.retry)
    return Verdict(
        kind="semantic",
        passed=result["passed"],
        reasoning=result["raw"],
        segments=result["segments"],
        vlm_calls=client.calls - before,
    )


def _guidance_body(config: ReasoningConfig, instruction: str) -> str | None:
    """Optional dynamic guidance from a prompt-generation model."""
    if config.prompt_client is None:
        return None
    request = (
        "Write concise guidance (object guidance, region guidance, placement "
        "feasibility guidance) for locating the region described by this "
        f"spatial instruction in an overhead image: {instruction}"
    )
    return config.prompt_client.complete(request)


def ground(
    client: VlmClient,
    img: np.ndarray,
    instruction: str,
    objects: ObjectMaskSet,
    config: ReasoningConfig = ReasoningConfig(),
) -> GroundingTrace:
    """Run the full propose-validate loop for one instruction.

    Validator failures are not errors; only exhausted retries propagate.
    """
    h, w = img.shape[:2]
    joint = joint_mask(objects, w, h)
    guidance = _guidance_body(config, instruction)

    calls_before = client.calls
    feedback: str | None = None
    region: np.ndarray | None = None
    records: list[IterationRecord] = []

    for k in range(config.max_iterations):
        visual = make_visual_prompt(img, region if k > 0 else None, k, config.grid_interval)
        text = make_text_prompt(
            instruction,
            k,
            feedback,
            width=w,
            height=h,
            grid_interval=config.grid_interval,
            max_ellipses=config.max_ellipses,
            guidance_body=guidance,
        )
        bundle = PromptBundle(visual=visual, text=text, iteration=k, feedback=feedback)
        proposal, region = propose_region(client, bundle, config)

        if region.any():
            # two-stage validation: the semantic check presumes placement
            # feasibility, so it only runs once the physical check passes
            physical = validate_physical(client, region, joint, img, instruction, config)
            if physical.passed:
                verdicts = (
                    physical,
                    validate_semantic(client, region, img, instruction, config),
                )
            else:
                verdicts = (physical,)
        else:
            # ellipses rasterized to nothing (fully outside the image):
            # fail without spending model calls
            verdicts = (
                Verdict(
                    kind="physical",
                    passed=False,
                    reasoning="The proposed region lies entirely outside the image bounds.",
                    vlm_calls=0,
                ),
            )
        records.append(IterationRecord(bundle=bundle, proposal=proposal, region=region, verdicts=verdicts))
        if all(v.passed for v in verdicts):
            break
        feedback = compose_feedback(verdicts)

    return GroundingTrace(
        records=tuple(records),
        final_region=records[-1].region,
        iterations_used=len(records),
        vlm_calls=client.calls - calls_before,
    )

from .client import DEFAULT_MODEL, HttpVlmClient, ScriptedVlmClient, VlmClient
from .loop import (
    GroundingTrace,
    IterationRecord,
    PromptBundle,
    ProposalResponse,
    ReasoningConfig,
    Verdict,
    ground,
    propose_region,
    validate_physical,
    validate_semantic,
)
from .parsing import parse_ellipses, parse_verdict, parse_yes_no
from .prompts import (
    FEEDBACK_PREFIX,
    compose_feedback,
    make_distance_prompt,
    make_text_prompt,
    make_validation_prompt,
    make_visual_prompt,
)

__all__ = [
    "DEFAULT_MODEL",
    "FEEDBACK_PREFIX",
    "GroundingTrace",
    "HttpVlmClient",
    "IterationRecord",
    "PromptBundle",
    "ProposalResponse",
    "ReasoningConfig",
    "ScriptedVlmClient",
    "Verdict",
    "VlmClient",
    "compose_feedback",
    "ground",
    "make_distance_prompt",
    "make_text_prompt",
    "make_validation_prompt",
    "make_visual_prompt",
    "parse_ellipses",
    "parse_verdict",
    "parse_yes_no",
    "propose_region",
    "validate_physical",
    "validate_semantic",
]

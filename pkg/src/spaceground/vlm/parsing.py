"""Parsers for model responses: structured ellipses and pass/fail verdicts."""

from __future__ import annotations

import json
import re

from ..errors import GeometryError, ResponseParseError
from ..raster import Ellipse

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)
_JUDGMENT = re.compile(r"\b(pass|fail)\b", re.IGNORECASE)
_SEGMENT_LINE = re.compile(r"^\s*segment\s+(.*?)\s*[:\-]\s*(pass|fail)\b\s*$", re.IGNORECASE)


def extract_json_object(raw: str) -> dict:
    """First JSON object found in ``raw``, preferring fenced blocks."""
    candidates = [m.group(1) for m in _FENCE.finditer(raw)]
    candidates.append(raw)
    decoder = json.JSONDecoder()
    for text in candidates:
        for start in (i for i, ch in enumerate(text) if ch == "{"):
            try:
                obj, _ = decoder.raw_decode(text[start:])
            except ValueError:
                continue
            if isinstance(obj, dict):
                return obj
    raise ResponseParseError("no JSON object found in response")


def parse_ellipses(raw: str) -> list[Ellipse]:
    """Ellipses from the structured proposal response.

    Expects fields ``center_coordinates`` = [[x, y], ...],
    ``semi_axes_lengths`` = [[a, b], ...] and ``angle`` (scalar broadcast to
    all ellipses, or one angle per ellipse). Axis pairs given as a < b are
    normalized by swapping and rotating by 90 degrees.
    """
    obj = extract_json_object(raw)
    try:
        centers = obj["center_coordinates"]
        axes = obj["semi_axes_lengths"]
        angle = obj.get("angle", 0.0)
    except (KeyError, TypeError) as exc:
        raise ResponseParseError(f"proposal missing required field: {exc}") from exc

    if not isinstance(centers, list) or not isinstance(axes, list):
        raise ResponseParseError("center_coordinates and semi_axes_lengths must be lists")
    if len(centers) == 0:
        raise ResponseParseError("proposal contains zero ellipses")
    if len(centers) != len(axes):
        raise ResponseParseError(
            f"{len(centers)} centers but {len(axes)} axis pairs in proposal"
        )
    if isinstance(angle, (int, float)):
        angles = [float(angle)] * len(centers)
    elif isinstance(angle, list) and len(angle) == len(centers):
        angles = [float(a) for a in angle]
    else:
        raise ResponseParseError("angle must be a scalar or one entry per ellipse")

    ellipses = []
    for center, pair, theta in zip(centers, axes, angles):
        try:
            cx, cy = (float(v) for v in center)
            a, b = (float(v) for v in pair)
        except (TypeError, ValueError) as exc:
            raise ResponseParseError(f"malformed ellipse entry: {exc}") from exc
        if a < b:
            a, b = b, a
            theta += 90.0
        try:
            ellipses.append(Ellipse(cx=cx, cy=cy, a=a, b=b, theta=theta))
        except GeometryError as exc:
            raise ResponseParseError(f"invalid ellipse geometry: {exc}") from exc
    return ellipses


def parse_verdict(raw: str) -> tuple[bool, tuple[tuple[str, bool], ...]]:
    """Overall judgment plus per-segment judgments from a validator response.

    Every standalone "pass"/"fail" token is an extracted judgment; the
    verdict passes iff all of them are "pass". Lines of the form
    "segment <text>: pass|fail" are captured individually. A response with
    no judgment token at all is a parse failure (and triggers a retry
    upstream).
    """
    tokens = _JUDGMENT.findall(raw)
    if not tokens:
        raise ResponseParseError("validator response contains no pass/fail judgment")
    passed = all(t.lower() == "pass" for t in tokens)
    segments = []
    for line in raw.splitlines():
        m = _SEGMENT_LINE.match(line)
        if m:
            segments.append((m.group(1), m.group(2).lower() == "pass"))
    return passed, tuple(segments)


def parse_yes_no(raw: str) -> bool:
    """Strict yes/no extraction; raises when neither or both appear."""
    yes = re.search(r"\byes\b", raw, re.IGNORECASE) is not None
    no = re.search(r"\bno\b", raw, re.IGNORECASE) is not None
    if yes == no:
        raise ResponseParseError(f"expected a yes or no answer, got: {raw[:80]!r}")
    return yes

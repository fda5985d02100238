"""Model clients: the chat-completion HTTP client and the scripted stand-in.

Wire protocol (chat-completion style): POST to the configured endpoint with

    {"model": ..., "temperature": ...,
     "messages": [{"role": "user", "content": [
         {"type": "text", "text": ...},
         {"type": "image", "data": <base64 PNG>}]}]}

and the raw text handed to the parsers is the first choice's message content.
Temperature stays at 0 for reproducibility wherever the endpoint honors it.
"""

from __future__ import annotations

import base64
from typing import Callable, Protocol

import numpy as np

from .. import pngio
from ..errors import ResponseParseError
from ..transport import RequestsTransport, Transport

DEFAULT_MODEL = "o4-mini-2025-04-16"


class VlmClient(Protocol):
    calls: int

    def complete(self, text: str, image: np.ndarray | None = None) -> str: ...


class HttpVlmClient:
    """Client for a live chat-completion endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str = DEFAULT_MODEL,
        temperature: float = 0.0,
        auth_token: str | None = None,
        transport: Transport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        if transport is None:
            headers = {"Authorization": f"Bearer {auth_token}"} if auth_token else {}
            transport = RequestsTransport(headers=headers)
        self.transport = transport
        self.calls = 0

    def complete(self, text: str, image: np.ndarray | None = None) -> str:
        content: list[dict] = [{"type": "text", "text": text}]
        if image is not None:
            data = base64.b64encode(pngio.encode_image_png(image)).decode("ascii")
            content.append({"type": "image", "data": data})
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": content}],
        }
        self.calls += 1
        response = self.transport.post_json(self.endpoint, payload)
        try:
            return response["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ResponseParseError(f"chat response missing message content: {exc}") from exc


class ScriptedVlmClient:
    """Deterministic in-process stand-in for tests and offline runs.

    Replies come either from ``script`` (a list consumed in call order;
    Exception entries are raised instead of returned, which exercises retry
    paths) or from ``responder``, a function of (text, image). Every call is
    recorded in ``requests``.
    """

    def __init__(
        self,
        script: list | None = None,
        responder: Callable[[str, np.ndarray | None], str] | None = None,
    ):
        if (script is None) == (responder is None):
            raise ValueError("provide exactly one of script or responder")
        self._script = list(script) if script is not None else None
        self._responder = responder
        self.calls = 0
        self.requests: list[tuple[str, np.ndarray | None]] = []

    def complete(self, text: str, image: np.ndarray | None = None) -> str:
        self.calls += 1
        self.requests.append((text, image))
        if self._responder is not None:
            return self._responder(text, image)
        if not self._script:
            raise ResponseParseError("scripted client ran out of responses")
        item = self._script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

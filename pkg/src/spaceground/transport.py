"""HTTP transport shared by the VLM and detector clients.

One small surface: ``post_json(url, payload) -> dict``. The real
implementation rides on requests; tests inject scripted transports, and the
recording transport proves that offline configurations send no traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

from .errors import ResponseParseError, RetryExhaustedError, TransportError


@dataclass(frozen=True)
class RetryPolicy:
    """Bounded automatic retries for transport failures and unparseable
    responses (e.g. a model reply with no extractable structure)."""

    attempts: int = 3


class Transport(Protocol):
    def post_json(self, url: str, payload: dict) -> dict: ...


class RequestsTransport:
    """Live HTTP transport. ``timeout`` is per call, in seconds."""

    def __init__(self, timeout: float = 120.0, headers: dict | None = None):
        self.timeout = timeout
        self.headers = headers or {}

    def post_json(self, url: str, payload: dict) -> dict:
        import requests

        try:
            resp = requests.post(url, json=payload, timeout=self.timeout, headers=self.headers)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        except ValueError as exc:
            raise ResponseParseError(f"POST {url} returned invalid JSON: {exc}") from exc


class RecordingTransport:
    """Records every attempted call; with no inner transport it refuses them.

    Used to verify that offline configurations (file masks plus a scripted
    model client) never reach the network.
    """

    def __init__(self, inner: Transport | None = None):
        self.inner = inner
        self.calls: list[tuple[str, dict]] = []

    def post_json(self, url: str, payload: dict) -> dict:
        self.calls.append((url, payload))
        if self.inner is None:
            raise TransportError(f"network disabled; attempted POST {url}")
        return self.inner.post_json(url, payload)


def call_with_retries(fn: Callable[[], dict], retry: RetryPolicy) -> dict:
    """Run ``fn`` up to ``retry.attempts`` times, retrying transport and
    parse failures; re-raises the last error wrapped in RetryExhaustedError."""
    last: Exception | None = None
    for _ in range(max(1, retry.attempts)):
        try:
            return fn()
        except (TransportError, ResponseParseError) as exc:
            last = exc
    raise RetryExhaustedError(f"gave up after {retry.attempts} attempts: {last}") from last

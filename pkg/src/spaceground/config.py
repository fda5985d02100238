"""Run configuration shared by the CLI commands.

Precedence: an explicitly passed flag wins, then an environment variable
(SPACEGROUND_<FIELD>), then a value from the optional JSON config file, then
the field default. The resolved configuration is hashed (auth token
excluded) and the hash is recorded in every report and trace directory.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .vlm.client import DEFAULT_MODEL

ENV_PREFIX = "SPACEGROUND_"

MOCK_SCHEME = "mock:"
MOCK_COVER_GT = "mock-cover-gt"


@dataclass
class RunConfig:
    vlm_endpoint: str = ""
    vlm_model: str = DEFAULT_MODEL
    vlm_auth_token: str | None = None
    detector_endpoint: str | None = None
    object_masks: str | None = None
    grid_interval: int = 100
    max_iterations: int = 2
    max_ellipses: int = 4
    retry_attempts: int = 3
    slic_target_count: int = 600
    slic_compactness: float = 10.0
    slic_iterations: int = 10
    slic_seed: int = 0
    alpha: float = 0.5
    scale: float = 4.0
    checkpoint: str | None = None
    concurrency: int = 4
    seed: int = 7
    transport: str = "requests"  # "requests" | "disabled"
    footprint_radius: int = 0
    output_dir: str = "out"

    def is_live_vlm(self) -> bool:
        return self.vlm_endpoint.startswith("http://") or self.vlm_endpoint.startswith("https://")

    def validate(self) -> None:
        if self.is_live_vlm() and not self.vlm_auth_token:
            raise ConfigError(
                "a live VLM endpoint requires an auth token "
                f"(flag --vlm-auth-token or {ENV_PREFIX}VLM_AUTH_TOKEN)"
            )
        if self.transport not in ("requests", "disabled"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")

    def redacted_dict(self) -> dict:
        doc = asdict(self)
        if doc.get("vlm_auth_token"):
            doc["vlm_auth_token"] = "<redacted>"
        return doc

    def config_hash(self) -> str:
        """Hash of the result-relevant configuration: the auth token (secret)
        and the output directory (location, not behavior) are excluded."""
        doc = asdict(self)
        doc.pop("vlm_auth_token", None)
        doc.pop("output_dir", None)
        canonical = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


_FIELD_TYPES = {f.name: str(f.type) for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    target = _FIELD_TYPES[name]
    if "int" in target:
        return int(raw)
    if "float" in target:
        return float(raw)
    return raw


def resolve_config(
    cli_values: dict | None = None,
    explicit: set[str] | None = None,
    config_file: str | Path | None = None,
    env: dict | None = None,
) -> tuple[RunConfig, set[str]]:
    """Merge flag values, environment, and config file into a RunConfig.

    ``cli_values`` holds every flag's value and ``explicit`` the names the
    user actually passed. Returns the config and the set of field names that
    were explicitly provided through any channel (used e.g. to decide whether
    --alpha overrides a checkpoint's stored alpha).
    """
    cli_values = cli_values or {}
    explicit = set(explicit or ())
    env = os.environ if env is None else env

    values: dict = {}
    provided: set[str] = set()

    if config_file is not None:
        try:
            doc = json.loads(Path(config_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {config_file}: {exc}") from exc
        for key, value in doc.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config field {key!r} in {config_file}")
            values[key] = value
            provided.add(key)

    for name in _FIELD_TYPES:
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            values[name] = _coerce(name, env[env_key])
            provided.add(name)

    for name in explicit:
        if name in _FIELD_TYPES:
            values[name] = cli_values[name]
            provided.add(name)

    cfg = RunConfig(**values)
    cfg.validate()
    return cfg, provided

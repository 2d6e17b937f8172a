"""Model configuration and the key=value config file loader."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

from .protocol import DEFAULT_MAX_HTLCS, PROTOCOL_MAX_HTLCS

DEFAULT_CSV_DELAY = 1081
MIN_CSV_DELAY = 144
DEFAULT_CLTV_EXPIRY = 40


@dataclass(frozen=True)
class ModelConfig:
    max_htlcs: int = DEFAULT_MAX_HTLCS
    buffer_capacity: int = 1
    csv_delay: int = DEFAULT_CSV_DELAY
    cltv_expiry: int = DEFAULT_CLTV_EXPIRY
    state_cap: Optional[int] = None

    def __post_init__(self) -> None:
        if not 1 <= self.max_htlcs <= PROTOCOL_MAX_HTLCS:
            raise ValueError(f"max_htlcs must be in 1..{PROTOCOL_MAX_HTLCS}, got {self.max_htlcs}")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be positive")
        if self.csv_delay < 1:
            raise ValueError("csv_delay must be positive")
        if self.cltv_expiry < 1:
            raise ValueError("cltv_expiry must be positive")
        if self.state_cap is not None and self.state_cap < 1:
            raise ValueError("state_cap must be positive")

    def with_overrides(self, **overrides: Any) -> "ModelConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def load_config(path: Path | str, base: Optional[ModelConfig] = None) -> ModelConfig:
    """Read a flat ``key = value`` file; keys are ModelConfig field names.

    Blank lines and ``#`` comments are allowed. Unknown keys are an error.
    """
    parser = configparser.ConfigParser()
    text = Path(path).read_text()
    parser.read_string("[model]\n" + text)
    known = {f.name for f in fields(ModelConfig)}
    values: dict[str, Any] = {}
    for key, raw in parser["model"].items():
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        raw = raw.strip()
        values[key] = None if raw.lower() in ("", "none", "unlimited") else int(raw)
    base = base or ModelConfig()
    return replace(base, **values)

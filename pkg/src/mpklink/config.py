"""Dotted configuration keys (``protection.backend``, ``mpk.*``) as a dataclass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from .mpk_channel import DEFAULT_CHUNK_CAPACITY, RightsPolicy

_BACKENDS = ("auto", "hardware", "emulated")


def _flag(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("on", "true", "1", "yes"):
        return True
    if s in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"expected on|off, got {v!r}")


@dataclass(frozen=True)
class Settings:
    backend: str = "auto"
    policy: RightsPolicy = RightsPolicy.STRICT
    chunk_capacity: int = DEFAULT_CHUNK_CAPACITY
    trace: bool = False

    def __post_init__(self):
        if self.backend not in _BACKENDS:
            raise ValueError(f"protection.backend must be one of {'|'.join(_BACKENDS)}")
        if self.chunk_capacity <= 0:
            raise ValueError("mpk.chunk_capacity must be positive")

    @classmethod
    def from_mapping(cls, m: Mapping[str, Any]) -> "Settings":
        known = {"protection.backend", "mpk.policy", "mpk.chunk_capacity", "mpk.trace"}
        unknown = set(m) - known
        if unknown:
            raise ValueError(f"unknown settings: {', '.join(sorted(unknown))}")
        d = cls()
        return cls(
            backend=str(m.get("protection.backend", d.backend)).lower(),
            policy=RightsPolicy.parse(m.get("mpk.policy", d.policy)),
            chunk_capacity=int(m.get("mpk.chunk_capacity", d.chunk_capacity)),
            trace=_flag(m.get("mpk.trace", d.trace)),
        )

    def mpk_options(self) -> dict:
        return {"policy": self.policy, "backend": self.backend,
                "chunk_capacity": self.chunk_capacity, "trace": self.trace}

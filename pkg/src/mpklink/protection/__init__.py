"""Memory protection keys with a hardware (Intel MPK) and an emulated backend.

Backend selection follows the ``protection.backend`` setting:

* ``hardware`` - real protection keys; :class:`BackendUnavailable` if the CPU or
  kernel lacks them.
* ``emulated`` - a software rights table enforced by the region accessors.
* ``auto`` - hardware when available, emulated otherwise.
"""

from __future__ import annotations

import threading

from ..errors import BackendUnavailable
from .domain import EmulatedDomain, ProtectedRegion, ProtectionDomain, RegisterSlot
from .hardware import HardwareDomain, hardware_domain, hardware_supported
from .rights import (
    DEFAULT_KEY,
    MAX_ALLOCATABLE,
    NUM_KEYS,
    SLOT_SENTINEL,
    AccessRegister,
    AccessRights,
    Backend,
    KeyHandle,
    ProbeMode,
    ProbeResult,
    permits,
    predict,
)

__all__ = [
    "DEFAULT_KEY", "MAX_ALLOCATABLE", "NUM_KEYS", "SLOT_SENTINEL",
    "AccessRegister", "AccessRights", "Backend", "KeyHandle", "ProbeMode", "ProbeResult",
    "EmulatedDomain", "HardwareDomain", "ProtectedRegion", "ProtectionDomain", "RegisterSlot",
    "get_domain", "hardware_domain", "hardware_supported", "permits", "predict",
]

_emulated: EmulatedDomain | None = None
_emulated_lock = threading.Lock()


def default_emulated_domain() -> EmulatedDomain:
    global _emulated
    with _emulated_lock:
        if _emulated is None:
            _emulated = EmulatedDomain()
        return _emulated


def get_domain(backend: "str | Backend | ProtectionDomain" = "auto") -> ProtectionDomain:
    """Resolve a backend choice to a domain; domain objects pass through."""
    if isinstance(backend, ProtectionDomain):
        return backend
    name = backend.value if isinstance(backend, Backend) else str(backend).lower()
    if name == "emulated":
        return default_emulated_domain()
    if name == "hardware":
        return hardware_domain()
    if name == "auto":
        try:
            return hardware_domain()
        except BackendUnavailable:
            return default_emulated_domain()
    raise ValueError(f"unknown protection backend {backend!r} (auto|hardware|emulated)")

"""Intel MPK backend: pkey_alloc / pkey_mprotect / PKRU writes via glibc."""

from __future__ import annotations

import ctypes
import errno
import mmap
import os
import threading

from .. import _native
from ..errors import BackendUnavailable, KeysExhausted, ProtectionError
from ..memory import PageBuffer
from .domain import ProtectedRegion, ProtectionDomain
from .rights import NUM_KEYS, AccessRegister, AccessRights, Backend, KeyHandle, ProbeMode, ProbeResult

_PROT_RW = mmap.PROT_READ | mmap.PROT_WRITE


def _libc():
    libc = ctypes.CDLL(None, use_errno=True)
    for name in ("pkey_alloc", "pkey_free", "pkey_mprotect", "pkey_set"):
        if not hasattr(libc, name):
            raise BackendUnavailable(f"libc lacks {name}")
    libc.pkey_alloc.argtypes = [ctypes.c_uint, ctypes.c_uint]
    libc.pkey_free.argtypes = [ctypes.c_int]
    libc.pkey_mprotect.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int, ctypes.c_int]
    libc.pkey_set.argtypes = [ctypes.c_int, ctypes.c_uint]
    return libc


def hardware_supported() -> tuple[bool, str]:
    """Probe for usable protection keys; returns (ok, reason)."""
    try:
        libc = _libc()
    except (OSError, BackendUnavailable) as exc:
        return False, str(exc)
    lib = _native.load()
    if lib is None or not lib.mpkl_has_pkru():
        return False, "native PKRU helper unavailable on this platform"
    k = libc.pkey_alloc(0, 0)
    if k < 0:
        err = ctypes.get_errno()
        if err == errno.ENOSPC:
            return True, "supported (no free keys right now)"
        return False, f"pkey_alloc failed: {os.strerror(err)}"
    libc.pkey_free(k)
    return True, "supported"


class HardwareDomain(ProtectionDomain):
    """Process-wide: protection keys are a per-process resource."""

    backend = Backend.HARDWARE

    def __init__(self):
        ok, reason = hardware_supported()
        if not ok:
            raise BackendUnavailable(f"hardware protection keys unavailable: {reason}")
        super().__init__()
        self._libc = _libc()
        self._lib = _native.load()
        if self._lib.mpkl_install_probe_handler() != 0:
            raise BackendUnavailable("could not install the probe fault handler")

    def _alloc_id(self) -> int:
        k = self._libc.pkey_alloc(0, 0)
        if k < 0:
            err = ctypes.get_errno()
            if err == errno.ENOSPC:
                raise KeysExhausted("kernel has no free protection keys")
            raise ProtectionError(f"pkey_alloc: {os.strerror(err)}")
        return k

    def _free_id(self, key_id: int) -> None:
        self._libc.pkey_free(key_id)

    def _tag(self, buffer: PageBuffer, length: int, key_id: int) -> None:
        if self._libc.pkey_mprotect(buffer.address, length, _PROT_RW, key_id) != 0:
            raise ProtectionError(f"pkey_mprotect: {os.strerror(ctypes.get_errno())}")

    def _untag(self, region: ProtectedRegion) -> None:
        if not region.buffer.closed:
            self._libc.pkey_mprotect(region.address, region.length, _PROT_RW, 0)

    def _apply(self, key_id: int, rights: AccessRights) -> None:
        self._libc.pkey_set(key_id, rights.bits)

    def _hw_probe(self, address: int, mode: ProbeMode) -> ProbeResult:
        faulted = self._lib.mpkl_probe(address, 1 if mode is ProbeMode.WRITE else 0)
        return ProbeResult.ACCESS_VIOLATION if faulted else ProbeResult.ALLOWED

    def _access(self, key: KeyHandle, mode: ProbeMode) -> None:
        # The CPU enforces; a missing right faults the process by design.
        self._grants()

    def read_register(self) -> AccessRegister:
        # live keys are read back from the CPU, not from the bookkeeping
        self._grants()
        value = self.pkru()
        live = set(self._live)
        return AccessRegister(tuple(
            AccessRights.from_bits((value >> (2 * k)) & 0b11) if k in live else AccessRights.READ_WRITE
            for k in range(NUM_KEYS)
        ))

    def pkru(self) -> int:
        """Raw PKRU value of the calling thread."""
        return self._lib.mpkl_rdpkru()

    def hardware_rights(self, key: KeyHandle) -> AccessRights:
        """Rights for ``key`` as the CPU currently sees them (not the bookkeeping)."""
        self._grants()
        return AccessRights.from_bits((self.pkru() >> (2 * key.key_id)) & 0b11)


_instance: HardwareDomain | None = None
_instance_lock = threading.Lock()


def hardware_domain() -> HardwareDomain:
    global _instance
    with _instance_lock:
        if _instance is None:
            _instance = HardwareDomain()
        return _instance

"""Protection domains: key allocation, region tagging and per-thread rights.

A domain tracks which keys are live and, per thread, which rights that thread
has been granted on each live key.  A thread that has never been granted rights
on a live key holds NoAccess on it; keys that are not live read as ReadWrite
because they guard no memory.  Both backends share this bookkeeping; the
hardware backend additionally mirrors every change into the real PKRU register,
so enforcement comes from the CPU rather than from the bookkeeping.
"""

from __future__ import annotations

import itertools
import threading
from typing import Iterable

from ..errors import (
    AccessViolationError,
    BadAlignment,
    DeadKey,
    KeysExhausted,
    OffsetOutOfRange,
    UninitializedSlot,
)
from ..memory import PAGE_SIZE, PageBuffer
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


class RegisterSlot:
    """A shared 32-bit cell through which one thread hands its rights to another."""

    def __init__(self, buffer: PageBuffer, offset: int = 0):
        if offset % 4:
            raise ValueError("slot offset must be 4-byte aligned")
        self._buf = buffer
        self._off = offset

    @classmethod
    def create(cls, buffer: PageBuffer | None = None, offset: int = 0) -> "RegisterSlot":
        slot = cls(buffer if buffer is not None else PageBuffer.anonymous(PAGE_SIZE), offset)
        slot.store(SLOT_SENTINEL)
        return slot

    def load(self) -> int:
        return self._buf.load_acquire(self._off)

    def store(self, value: int) -> None:
        self._buf.store_release(self._off, value)


class ProtectedRegion:
    """Pages of a mapping tagged with one protection key."""

    def __init__(self, domain: "ProtectionDomain", buffer: PageBuffer, length: int, key: KeyHandle):
        self.domain = domain
        self.buffer = buffer
        self.length = length
        self.key = key
        self._released = False

    @property
    def address(self) -> int:
        return self.buffer.address

    def read(self, offset: int, n: int) -> bytes:
        self._bounds(offset, n)
        self.domain._access(self.key, ProbeMode.READ)
        return self.buffer.read(offset, n)

    def write(self, offset: int, data: bytes, start: int = 0, n: int | None = None) -> None:
        if n is None:
            n = len(data) - start
        self._bounds(offset, n)
        self.domain._access(self.key, ProbeMode.WRITE)
        self.buffer.write(offset, data, start, n)

    def probe(self, offset: int, mode: ProbeMode) -> ProbeResult:
        return self.domain.probe(self, offset, mode)

    def release(self) -> None:
        """Return the pages to the default key (the mapping itself stays open)."""
        if not self._released:
            self.domain._untag(self)
            self._released = True

    def _bounds(self, offset: int, n: int) -> None:
        if offset < 0 or n < 0 or offset + n > self.length:
            raise OffsetOutOfRange(f"[{offset}, {offset + n}) outside region of {self.length} bytes")


class ProtectionDomain:
    """Base class; see :class:`EmulatedDomain` and :class:`HardwareDomain`."""

    backend: Backend

    def __init__(self):
        self._lock = threading.Lock()
        self._live: dict[int, int] = {}  # key_id -> generation
        self._generations = itertools.count(1)
        self._epoch = 0
        self._local = threading.local()

    # backend hooks -----------------------------------------------------------
    def _alloc_id(self) -> int:
        raise NotImplementedError

    def _free_id(self, key_id: int) -> None:
        raise NotImplementedError

    def _tag(self, buffer: PageBuffer, length: int, key_id: int) -> None:
        raise NotImplementedError

    def _untag(self, region: ProtectedRegion) -> None:
        raise NotImplementedError

    def _apply(self, key_id: int, rights: AccessRights) -> None:
        """Make ``rights`` effective for the calling thread."""

    def _hw_probe(self, address: int, mode: ProbeMode) -> ProbeResult | None:
        return None

    # thread state ------------------------------------------------------------
    def _grants(self) -> dict[int, tuple[int, AccessRights]]:
        local = self._local
        grants = getattr(local, "grants", None)
        if grants is None:
            grants = local.grants = {}
            local.epoch = -1
        if local.epoch != self._epoch:
            self._sync(grants)
        return grants

    def _sync(self, grants: dict[int, tuple[int, AccessRights]]) -> None:
        # called when keys were allocated or freed since this thread last looked
        with self._lock:
            live = dict(self._live)
            epoch = self._epoch
        for k in list(grants):
            if live.get(k) != grants[k][0]:
                del grants[k]
        for k in live:
            if k not in grants:
                self._apply(k, AccessRights.NO_ACCESS)
        self._local.epoch = epoch

    def _rights(self, key_id: int, generation: int, grants) -> AccessRights:
        g = grants.get(key_id)
        if g is not None and g[0] == generation:
            return g[1]
        return AccessRights.NO_ACCESS

    def _live_handle(self, key: KeyHandle) -> int:
        if key.domain is not None and key.domain is not self:
            raise DeadKey(f"key {key.key_id} belongs to another domain")
        gen = self._live.get(key.key_id)
        if gen is None or gen != key.generation:
            raise DeadKey(f"key {key.key_id} (generation {key.generation}) is not live")
        return gen

    # public API ----------------------------------------------------------------
    @property
    def live_keys(self) -> int:
        return len(self._live)

    def allocate_key(self) -> KeyHandle:
        with self._lock:
            if len(self._live) >= MAX_ALLOCATABLE:
                raise KeysExhausted(f"all {MAX_ALLOCATABLE} allocatable keys are live")
            key_id = self._alloc_id()
            gen = next(self._generations)
            self._live[key_id] = gen
            self._epoch += 1
        grants = self._grants()
        grants[key_id] = (gen, AccessRights.READ_WRITE)
        self._apply(key_id, AccessRights.READ_WRITE)
        return KeyHandle(key_id, self.backend, gen, self)

    def free_key(self, key: KeyHandle) -> None:
        with self._lock:
            self._live_handle(key)
            del self._live[key.key_id]
            self._free_id(key.key_id)
            self._epoch += 1
        self._apply(key.key_id, AccessRights.NO_ACCESS)
        self._grants()

    def tag_region(self, buffer: PageBuffer, length: int, key: KeyHandle) -> ProtectedRegion:
        if length <= 0 or length % PAGE_SIZE or buffer.address % PAGE_SIZE:
            raise BadAlignment(f"length {length} / address {buffer.address:#x} not page-aligned")
        if length > buffer.size:
            raise BadAlignment(f"length {length} exceeds mapping of {buffer.size} bytes")
        self._live_handle(key)
        self._tag(buffer, length, key.key_id)
        return ProtectedRegion(self, buffer, length, key)

    def set_rights(self, key: KeyHandle, rights: AccessRights) -> AccessRegister:
        """Change the calling thread's rights on ``key``; returns its new register."""
        self.grant(key, rights)
        return self.read_register()

    def grant(self, key: KeyHandle, rights: AccessRights) -> None:
        """:meth:`set_rights` without building the register snapshot (hot path)."""
        gen = self._live_handle(key)
        rights = AccessRights(rights)
        self._grants()[key.key_id] = (gen, rights)
        self._apply(key.key_id, rights)

    def rights_of(self, key: KeyHandle) -> AccessRights:
        gen = self._live_handle(key)
        return self._rights(key.key_id, gen, self._grants())

    def read_register(self) -> AccessRegister:
        grants = self._grants()
        live = dict(self._live)
        return AccessRegister(tuple(
            self._rights(k, live[k], grants) if k in live else AccessRights.READ_WRITE
            for k in range(NUM_KEYS)
        ))

    def publish_register(self, reg: AccessRegister, slot: RegisterSlot) -> None:
        slot.store(reg.encode())

    def adopt_register(self, slot: RegisterSlot, keys: Iterable[KeyHandle] | None = None) -> AccessRegister:
        """Apply a published register to the calling thread.

        Only live keys are applied (optionally restricted to ``keys``); entries
        for other keys are ignored since they guard no memory.
        """
        value = slot.load()
        if value == SLOT_SENTINEL:
            raise UninitializedSlot("no register has been published to this slot")
        reg = AccessRegister.decode(value)
        grants = self._grants()
        with self._lock:
            live = dict(self._live)
        if keys is None:
            targets = live.items()
        else:
            targets = [(k.key_id, self._live_handle(k)) for k in keys]
        for key_id, gen in targets:
            if key_id == DEFAULT_KEY:
                continue
            grants[key_id] = (gen, reg[key_id])
            self._apply(key_id, reg[key_id])
        return self.read_register()

    def probe(self, region: ProtectedRegion, offset: int, mode: ProbeMode) -> ProbeResult:
        if not 0 <= offset < region.length:
            raise OffsetOutOfRange(f"offset {offset} outside region of {region.length} bytes")
        gen = self._live_handle(region.key)
        grants = self._grants()
        hw = self._hw_probe(region.address + offset, mode)
        if hw is not None:
            return hw
        return predict(self._rights(region.key.key_id, gen, grants), mode)

    def _access(self, key: KeyHandle, mode: ProbeMode) -> None:
        """Gate for ordinary region access (overridden by backends)."""
        raise NotImplementedError


class EmulatedDomain(ProtectionDomain):
    """Software rights table; region accessors enforce it."""

    backend = Backend.EMULATED

    def __init__(self):
        super().__init__()
        self._free = set(range(1, NUM_KEYS))

    def _alloc_id(self) -> int:
        k = min(self._free)
        self._free.remove(k)
        return k

    def _free_id(self, key_id: int) -> None:
        self._free.add(key_id)

    def _tag(self, buffer: PageBuffer, length: int, key_id: int) -> None:
        pass

    def _untag(self, region: ProtectedRegion) -> None:
        pass

    def _access(self, key: KeyHandle, mode: ProbeMode) -> None:
        gen = self._live_handle(key)
        rights = self._rights(key.key_id, gen, self._grants())
        if not permits(rights, mode):
            raise AccessViolationError(
                f"{mode.value} on key {key.key_id} denied (thread holds {rights.name})")

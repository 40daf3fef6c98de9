"""Access rights, the 32-bit rights register, and key handles."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

NUM_KEYS = 16
DEFAULT_KEY = 0
MAX_ALLOCATABLE = NUM_KEYS - 1

# per-key bits: access-disable at 2k, write-disable at 2k + 1
AD = 0b01
WD = 0b10

# Never produced by AccessRegister.encode (AD without WD on every key), so a slot
# holding it has not been published to yet.
SLOT_SENTINEL = 0x55555555


class AccessRights(enum.IntEnum):
    """Ordered by permissiveness: NO_ACCESS < READ_ONLY < READ_WRITE."""

    NO_ACCESS = 0
    READ_ONLY = 1
    READ_WRITE = 2

    @property
    def bits(self) -> int:
        return _BITS[self]

    @classmethod
    def from_bits(cls, bits: int) -> "AccessRights":
        # hardware treats AD as "no data access" regardless of WD
        if bits & AD:
            return cls.NO_ACCESS
        if bits & WD:
            return cls.READ_ONLY
        return cls.READ_WRITE


_BITS = {
    AccessRights.READ_WRITE: 0,
    AccessRights.READ_ONLY: WD,
    AccessRights.NO_ACCESS: AD | WD,
}


class Backend(enum.Enum):
    HARDWARE = "hardware"
    EMULATED = "emulated"


class ProbeMode(enum.Enum):
    READ = "read"
    WRITE = "write"


class ProbeResult(enum.Enum):
    ALLOWED = "allowed"
    ACCESS_VIOLATION = "access_violation"


def permits(rights: AccessRights, mode: ProbeMode) -> bool:
    """Whether ``rights`` admit an access of kind ``mode``."""
    if mode is ProbeMode.READ:
        return rights >= AccessRights.READ_ONLY
    return rights is AccessRights.READ_WRITE


def predict(rights: AccessRights, mode: ProbeMode) -> ProbeResult:
    return ProbeResult.ALLOWED if permits(rights, mode) else ProbeResult.ACCESS_VIOLATION


@dataclass(frozen=True)
class AccessRegister:
    """Rights for all 16 keys, mirroring the layout of the x86 PKRU register."""

    rights: tuple[AccessRights, ...] = (AccessRights.READ_WRITE,) * NUM_KEYS

    def __post_init__(self):
        if len(self.rights) != NUM_KEYS:
            raise ValueError(f"register holds exactly {NUM_KEYS} entries")

    @classmethod
    def all_read_write(cls) -> "AccessRegister":
        return cls()

    @classmethod
    def from_mapping(cls, m: Mapping[int, AccessRights]) -> "AccessRegister":
        r = [AccessRights.READ_WRITE] * NUM_KEYS
        for k, v in m.items():
            r[_check_key(k)] = AccessRights(v)
        return cls(tuple(r))

    def __getitem__(self, key_id: int) -> AccessRights:
        return self.rights[_check_key(key_id)]

    def with_rights(self, key_id: int, r: AccessRights) -> "AccessRegister":
        lst = list(self.rights)
        lst[_check_key(key_id)] = AccessRights(r)
        return AccessRegister(tuple(lst))

    def encode(self) -> int:
        value = 0
        for k, r in enumerate(self.rights):
            value |= r.bits << (2 * k)
        return value

    @classmethod
    def decode(cls, value: int) -> "AccessRegister":
        if not 0 <= value < 2**32:
            raise ValueError("register encoding is a 32-bit value")
        return cls(tuple(AccessRights.from_bits((value >> (2 * k)) & 0b11) for k in range(NUM_KEYS)))

    def restricted(self) -> dict[int, AccessRights]:
        """Keys whose rights are not ReadWrite."""
        return {k: r for k, r in enumerate(self.rights) if r is not AccessRights.READ_WRITE}


def _check_key(k: int) -> int:
    if not 0 <= k < NUM_KEYS:
        raise ValueError(f"key id {k} outside [0, {NUM_KEYS})")
    return k


@dataclass(frozen=True)
class KeyHandle:
    key_id: int
    backend: Backend
    generation: int = 0
    domain: object = field(default=None, compare=False, repr=False)

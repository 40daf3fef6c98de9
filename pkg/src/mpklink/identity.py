"""Service identities, the in-process CA registry, and envelope signatures.

Signatures are Ed25519 (32-byte public keys, 64-byte signatures) over
:meth:`Envelope.signing_bytes`.  The registry can be persisted as text, one
record per line::

    <hex service_id> <hex public_key> <name>
    ! <hex service_id>                        # revocation
"""

from __future__ import annotations

import enum
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .codec import SENDER_ID_SIZE, SIGNATURE_SIZE, Envelope
from .errors import DuplicateServiceId, SenderMismatch

PUBLIC_KEY_SIZE = 32


@dataclass(frozen=True)
class ServiceIdentity:
    service_id: bytes
    public_key: bytes
    name: str = ""
    _private: Ed25519PrivateKey = field(default=None, repr=False, compare=False)

    def sign(self, data: bytes) -> bytes:
        return self._private.sign(data)


class InvalidReason(enum.Enum):
    UNSIGNED = "unsigned"
    UNKNOWN_SENDER = "unknown_sender"
    REVOKED = "revoked"
    BAD_SIGNATURE = "bad_signature"


@dataclass(frozen=True)
class Verdict:
    reason: Optional[InvalidReason] = None

    @property
    def valid(self) -> bool:
        return self.reason is None

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        return "Valid" if self.valid else f"Invalid({self.reason.value})"


VALID = Verdict()


@dataclass(frozen=True)
class _Snapshot:
    keys: Mapping[bytes, bytes]
    names: Mapping[bytes, str]
    revoked: frozenset


class CaRegistry:
    """Maps service ids to public keys; readers see immutable snapshots."""

    def __init__(self):
        self._lock = threading.Lock()
        self._snap = _Snapshot(MappingProxyType({}), MappingProxyType({}), frozenset())

    def snapshot(self) -> _Snapshot:
        return self._snap

    def __len__(self) -> int:
        return len(self._snap.keys)

    def __contains__(self, service_id: bytes) -> bool:
        return bytes(service_id) in self._snap.keys

    def add(self, service_id: bytes, public_key: bytes, name: str = "") -> None:
        """Record a public key; the first registration of an id wins."""
        service_id, public_key = bytes(service_id), bytes(public_key)
        if len(service_id) != SENDER_ID_SIZE:
            raise ValueError(f"service_id must be {SENDER_ID_SIZE} bytes")
        if len(public_key) != PUBLIC_KEY_SIZE:
            raise ValueError(f"public key must be {PUBLIC_KEY_SIZE} bytes")
        if any(c in name for c in "\r\n"):
            raise ValueError("name must be a single line")
        with self._lock:
            old = self._snap
            if service_id in old.keys:
                raise DuplicateServiceId(f"service id {service_id.hex()} already registered")
            keys = dict(old.keys)
            names = dict(old.names)
            keys[service_id] = public_key
            names[service_id] = name
            self._snap = _Snapshot(MappingProxyType(keys), MappingProxyType(names), old.revoked)

    def lookup(self, service_id: bytes) -> Optional[bytes]:
        return self._snap.keys.get(bytes(service_id))

    def name_of(self, service_id: bytes) -> Optional[str]:
        return self._snap.names.get(bytes(service_id))

    def revoke(self, service_id: bytes) -> None:
        with self._lock:
            old = self._snap
            self._snap = _Snapshot(old.keys, old.names, old.revoked | {bytes(service_id)})

    def is_revoked(self, service_id: bytes) -> bool:
        return bytes(service_id) in self._snap.revoked

    # persistence -------------------------------------------------------------
    def dump(self) -> str:
        snap = self._snap
        lines = [f"{sid.hex()} {pk.hex()} {snap.names[sid]}".rstrip() for sid, pk in snap.keys.items()]
        lines += [f"! {sid.hex()}" for sid in sorted(snap.revoked)]
        return "".join(line + "\n" for line in lines)

    def save(self, path: "str | os.PathLike") -> None:
        Path(path).write_text(self.dump(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "CaRegistry":
        reg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                if line.startswith("! "):
                    reg.revoke(bytes.fromhex(line[2:].strip()))
                    continue
                parts = line.split(" ", 2)
                name = parts[2] if len(parts) == 3 else ""
                reg.add(bytes.fromhex(parts[0]), bytes.fromhex(parts[1]), name)
            except (ValueError, IndexError) as exc:
                raise ValueError(f"registry line {lineno}: {exc}") from exc
        return reg

    @classmethod
    def load(cls, path: "str | os.PathLike") -> "CaRegistry":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def register(reg: CaRegistry, name: str = "") -> ServiceIdentity:
    """Create a keypair and a fresh random service id, and record the public key."""
    priv = Ed25519PrivateKey.generate()
    pub = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    while True:
        sid = os.urandom(SENDER_ID_SIZE)
        try:
            reg.add(sid, pub, name)
            break
        except DuplicateServiceId:
            continue
    return ServiceIdentity(sid, pub, name, priv)


def sign_envelope(identity: ServiceIdentity, e: Envelope) -> Envelope:
    if bytes(e.sender_id) != identity.service_id:
        raise SenderMismatch(
            f"envelope sender {bytes(e.sender_id).hex()} is not {identity.service_id.hex()}")
    return e.with_signature(identity.sign(e.signing_bytes()))


def verify_envelope(reg: CaRegistry, e: Envelope) -> Verdict:
    if e.signature is None:
        return Verdict(InvalidReason.UNSIGNED)
    snap = reg.snapshot()
    sid = bytes(e.sender_id)
    pub = snap.keys.get(sid)
    if pub is None:
        return Verdict(InvalidReason.UNKNOWN_SENDER)
    if sid in snap.revoked:
        return Verdict(InvalidReason.REVOKED)
    if len(e.signature) != SIGNATURE_SIZE:
        return Verdict(InvalidReason.BAD_SIGNATURE)
    try:
        Ed25519PublicKey.from_public_bytes(pub).verify(bytes(e.signature), e.signing_bytes())
    except InvalidSignature:
        return Verdict(InvalidReason.BAD_SIGNATURE)
    return VALID

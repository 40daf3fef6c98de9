"""Envelope and payload wire format.

Frame layout (all integers big-endian)::

    u32 total_length            # bytes that follow this field
    u8  version                 # always 1
    16B sender_id
    u64 sequence
    u8  signature_present       # 0 or 1
    64B signature               # only when signature_present == 1
    u32 payload_length
    ... payload bytes

The payload itself is a tagged union, see :func:`encode_payload`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Union

from .errors import BadVersion, Malformed, PayloadTooLarge, Truncated

VERSION = 1
SENDER_ID_SIZE = 16
SIGNATURE_SIZE = 64
LENGTH_PREFIX = 4

_HEAD = struct.Struct(">B16sQB")  # version, sender, sequence, signature flag
_SIGNED_HEAD = struct.Struct(">B16sQ")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

MAX_PAYLOAD = 2**32 - 1
# fixed bytes after the length prefix, excluding signature and payload
_FIXED_BODY = _HEAD.size + _U32.size  # 30


@dataclass(frozen=True)
class Envelope:
    sender_id: bytes
    sequence: int
    payload: bytes = b""
    signature: Optional[bytes] = None
    version: int = VERSION

    def signing_bytes(self) -> bytes:
        """Canonical bytes covered by the signature: version, sender, sequence, payload."""
        return _SIGNED_HEAD.pack(self.version, bytes(self.sender_id), self.sequence) + bytes(self.payload)

    def with_signature(self, signature: Optional[bytes]) -> "Envelope":
        return Envelope(self.sender_id, self.sequence, self.payload, signature, self.version)


def encoded_size(e: Envelope) -> int:
    """Size of ``encode(e)`` without building it."""
    sig = SIGNATURE_SIZE if e.signature is not None else 0
    return LENGTH_PREFIX + _FIXED_BODY + sig + len(e.payload)


def encode(e: Envelope) -> bytes:
    if e.version != VERSION:
        raise BadVersion(f"cannot encode version {e.version}")
    if len(e.sender_id) != SENDER_ID_SIZE:
        raise ValueError(f"sender_id must be {SENDER_ID_SIZE} bytes")
    if not 0 <= e.sequence < 2**64:
        raise ValueError("sequence out of u64 range")
    if e.signature is not None and len(e.signature) != SIGNATURE_SIZE:
        raise ValueError(f"signature must be {SIGNATURE_SIZE} bytes")
    n = len(e.payload)
    if n > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {n} bytes exceeds {MAX_PAYLOAD}")
    sig = e.signature or b""
    total = _FIXED_BODY + len(sig) + n
    if total > MAX_PAYLOAD:
        raise PayloadTooLarge(f"frame of {total} bytes does not fit a u32 length")
    flag = 1 if e.signature is not None else 0
    return b"".join((
        _U32.pack(total),
        _HEAD.pack(e.version, bytes(e.sender_id), e.sequence, flag),
        sig,
        _U32.pack(n),
        bytes(e.payload),
    ))


def frame_length(prefix: bytes) -> int:
    """Body length declared by a 4-byte frame prefix."""
    if len(prefix) < LENGTH_PREFIX:
        raise Truncated("length prefix incomplete")
    return _U32.unpack_from(prefix)[0]


def decode_prefix(b) -> tuple[Envelope, int]:
    """Decode one frame from the front of ``b``; return it and the bytes consumed.

    Never looks past ``4 + total_length``.
    """
    mv = memoryview(b)
    if len(mv) < LENGTH_PREFIX:
        raise Truncated("need at least 4 bytes for the length prefix")
    total = _U32.unpack_from(mv)[0]
    end = LENGTH_PREFIX + total
    if end > len(mv):
        raise Truncated(f"frame declares {total} bytes, {len(mv) - LENGTH_PREFIX} available")
    body = mv[LENGTH_PREFIX:end]
    if total < _FIXED_BODY:
        raise Malformed(f"frame body of {total} bytes is shorter than the fixed header")
    version, sender, sequence, flag = _HEAD.unpack_from(body)
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    pos = _HEAD.size
    if flag == 1:
        if total < _FIXED_BODY + SIGNATURE_SIZE:
            raise Malformed("signature flag set but frame too short for a signature")
        signature = bytes(body[pos:pos + SIGNATURE_SIZE])
        pos += SIGNATURE_SIZE
    elif flag == 0:
        signature = None
    else:
        raise Malformed(f"signature flag must be 0 or 1, got {flag}")
    n = _U32.unpack_from(body, pos)[0]
    pos += _U32.size
    if pos + n != total:
        raise Malformed(f"payload length {n} inconsistent with frame length {total}")
    payload = bytes(body[pos:])
    return Envelope(sender, sequence, payload, signature, version), end


def decode(b) -> Envelope:
    e, used = decode_prefix(b)
    if used != len(b):
        raise Malformed(f"{len(b) - used} trailing bytes after frame")
    return e


# payloads ------------------------------------------------------------------

TAG_COUNT_REQUEST = 1
TAG_COUNT_RESPONSE = 2
TAG_RAW = 3


@dataclass(frozen=True)
class CountRequest:
    text: bytes


@dataclass(frozen=True)
class CountResponse:
    count: int

    def __post_init__(self):
        if not 0 <= self.count < 2**64:
            raise ValueError("count must fit an unsigned 64-bit integer")


@dataclass(frozen=True)
class Raw:
    data: bytes


Payload = Union[CountRequest, CountResponse, Raw]


def encode_payload(p: Payload) -> bytes:
    if isinstance(p, CountRequest):
        return bytes((TAG_COUNT_REQUEST,)) + bytes(p.text)
    if isinstance(p, CountResponse):
        return bytes((TAG_COUNT_RESPONSE,)) + _U64.pack(p.count)
    if isinstance(p, Raw):
        return bytes((TAG_RAW,)) + bytes(p.data)
    raise TypeError(f"not a payload: {type(p).__name__}")


def decode_payload(b) -> Payload:
    mv = memoryview(b)
    if not mv:
        raise Truncated("empty payload")
    tag = mv[0]
    if tag == TAG_COUNT_REQUEST:
        return CountRequest(bytes(mv[1:]))
    if tag == TAG_COUNT_RESPONSE:
        if len(mv) != 1 + _U64.size:
            raise Malformed("count response must carry exactly 8 bytes")
        return CountResponse(_U64.unpack_from(mv, 1)[0])
    if tag == TAG_RAW:
        return Raw(bytes(mv[1:]))
    raise Malformed(f"unknown payload tag {tag}")

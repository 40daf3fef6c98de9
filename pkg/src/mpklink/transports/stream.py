"""Frame I/O over byte streams (pipes and stream sockets)."""

from __future__ import annotations

from typing import Callable

from ..codec import LENGTH_PREFIX, Envelope, decode, frame_length
from ..errors import MessageTooLarge, PeerClosed

ReadInto = Callable[[memoryview], int]


def read_exact(readinto: ReadInto, buf: memoryview) -> int:
    """Fill ``buf``; return bytes read (short only at end of stream)."""
    got = 0
    n = len(buf)
    while got < n:
        k = readinto(buf[got:])
        if not k:
            break
        got += k
    return got


def recv_frame(readinto: ReadInto, max_message: int) -> Envelope:
    prefix = bytearray(LENGTH_PREFIX)
    got = read_exact(readinto, memoryview(prefix))
    if got == 0:
        raise PeerClosed("peer closed the stream")
    if got < LENGTH_PREFIX:
        raise PeerClosed("stream ended inside a frame header")
    total = frame_length(prefix)
    if LENGTH_PREFIX + total > max_message:
        raise MessageTooLarge(f"incoming frame of {LENGTH_PREFIX + total} bytes exceeds {max_message}")
    frame = bytearray(LENGTH_PREFIX + total)
    frame[:LENGTH_PREFIX] = prefix
    if read_exact(readinto, memoryview(frame)[LENGTH_PREFIX:]) < total:
        raise PeerClosed("stream ended inside a frame body")
    return decode(frame)

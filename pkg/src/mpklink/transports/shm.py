"""Polled shared memory: one single-slot mailbox region per direction.

Region layout::

    0  u32 status         native-endian, accessed atomically
    4  u32 length         big-endian, bytes of the framed envelope
    8  ...                framed envelope

Status values: 0 = Empty, 1 = Ready.  Bit 31 marks the writer as closed and
bit 30 the reader, so a blocked peer can tell a departed endpoint from a slow one.
The writer publishes with a release RMW after filling the slot; the reader polls
with acquire loads and clears Ready once it has copied the message out.
"""

from __future__ import annotations

import os
import struct

from ..codec import Envelope, decode, encode
from ..errors import Malformed, MessageTooLarge, NameUnavailable, PeerClosed
from ..memory import PageBuffer
from .base import Channel, ChannelConfig, Poller, Role, Transport

EMPTY = 0
READY = 1
WRITER_CLOSED = 1 << 31
READER_CLOSED = 1 << 30
HEADER = 8

_LEN = struct.Struct(">I")


def region_paths(base: str) -> tuple[str, str]:
    """Backing files for the c2s and s2c regions; bare names live in /dev/shm."""
    root = base if "/" in base else os.path.join("/dev/shm", base)
    return root + ".c2s.shm", root + ".s2c.shm"


class ShmChannel(Channel):
    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        self.capacity = cfg.buffer_capacity
        self._is_server = cfg.role is Role.SERVER
        self._paths = region_paths(cfg.path)
        self._poll = Poller(cfg.poll_interval)
        self._closed = False
        regions = []
        try:
            for p in self._paths:
                regions.append(self._map(p))
        except BaseException:
            for r in regions:
                r.close()
            raise
        c2s, s2c = regions
        self._out, self._in = (s2c, c2s) if self._is_server else (c2s, s2c)

    def _map(self, path: str) -> PageBuffer:
        try:
            if self._is_server:
                if os.path.lexists(path):
                    os.unlink(path)
                buf = PageBuffer.from_file(path, self.capacity, create=True)
                buf.store_release(0, EMPTY)
                return buf
            buf = PageBuffer.from_file(path, self.capacity, create=False)
        except OSError as exc:
            raise NameUnavailable(f"shared region {path}: {exc}") from exc
        if buf.size != self.capacity:
            buf.close()
            raise NameUnavailable(f"{path} has {buf.size} bytes, expected {self.capacity}")
        return buf

    @property
    def max_frame(self) -> int:
        return self.capacity - HEADER

    def send(self, e: Envelope) -> None:
        data = encode(e)
        if len(data) > self.max_frame:
            raise MessageTooLarge(
                f"framed envelope of {len(data)} bytes exceeds slot capacity {self.max_frame}")
        out = self._out
        self._poll.reset()
        while True:
            if self._closed:
                raise PeerClosed("channel closed")
            status = out.load_acquire(0)
            if status & READER_CLOSED:
                raise PeerClosed("reader closed its end")
            if not status & READY:
                break
            self._poll.wait()
        out.write(4, _LEN.pack(len(data)))
        out.write(HEADER, data)
        out.fetch_or(0, READY)

    def recv(self) -> Envelope:
        inb = self._in
        self._poll.reset()
        while True:
            if self._closed:
                raise PeerClosed("channel closed")
            status = inb.load_acquire(0)
            if status & READY:
                break
            if status & WRITER_CLOSED:
                raise PeerClosed("writer closed its end")
            self._poll.wait()
        (n,) = _LEN.unpack(inb.read(4, 4))
        if n > self.max_frame:
            inb.fetch_and(0, ~READY & 0xFFFFFFFF)
            raise Malformed(f"slot declares {n} bytes, capacity is {self.max_frame}")
        data = inb.read(HEADER, n)
        inb.fetch_and(0, ~READY & 0xFFFFFFFF)
        return decode(data)

    def abort(self) -> None:
        if not self._closed and not self._out.closed:
            self._closed = True

    def close(self) -> None:
        if self._out.closed:
            return
        self._closed = True
        self._out.fetch_or(0, WRITER_CLOSED)
        self._in.fetch_or(0, READER_CLOSED)
        self._out.close()
        self._in.close()
        if self._is_server:
            for p in self._paths:
                try:
                    os.unlink(p)
                except FileNotFoundError:
                    pass


def open_shm(cfg: ChannelConfig) -> ShmChannel:
    if cfg.transport is not Transport.SHM:
        raise ValueError(f"config is for {cfg.transport.value}, not shm")
    return ShmChannel(cfg)

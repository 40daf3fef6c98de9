"""Two named pipes, one per direction (``<path>.c2s`` and ``<path>.s2c``)."""

from __future__ import annotations

import io
import os
import stat

from ..codec import Envelope, encode
from ..errors import MessageTooLarge, PathUnavailable, PeerClosed
from .base import Channel, ChannelConfig, Role, Transport
from .stream import recv_frame


def fifo_paths(base: str) -> tuple[str, str]:
    return base + ".c2s", base + ".s2c"


class FifoChannel(Channel):
    """Blocking FIFO pair.

    The server creates both FIFOs at construction; pipes are opened on first
    use (server) or at construction (client), always c2s before s2c so the two
    sides never wait on each other in opposite orders.
    """

    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        self._c2s, self._s2c = fifo_paths(cfg.path)
        self._is_server = cfg.role is Role.SERVER
        self._rd: io.FileIO | None = None
        self._wr: io.FileIO | None = None
        self._closed = False
        if self._is_server:
            for p in (self._c2s, self._s2c):
                try:
                    if os.path.lexists(p):
                        os.unlink(p)
                    os.mkfifo(p, 0o600)
                except OSError as exc:
                    raise PathUnavailable(f"cannot create FIFO {p}: {exc}") from exc
        else:
            for p in (self._c2s, self._s2c):
                try:
                    if not stat.S_ISFIFO(os.stat(p).st_mode):
                        raise PathUnavailable(f"{p} is not a FIFO")
                except FileNotFoundError as exc:
                    raise PathUnavailable(f"FIFO {p} does not exist") from exc
            self._open()

    def _open(self) -> None:
        if self._rd is not None:
            return
        try:
            if self._is_server:
                self._rd = io.FileIO(self._c2s, "rb")
                self._wr = io.FileIO(self._s2c, "wb")
            else:
                self._wr = io.FileIO(self._c2s, "wb")
                self._rd = io.FileIO(self._s2c, "rb")
        except OSError as exc:
            raise PathUnavailable(f"cannot open FIFO pair {self.cfg.path}: {exc}") from exc

    def send(self, e: Envelope) -> None:
        if self._closed:
            raise PeerClosed("channel closed")
        data = encode(e)
        if len(data) > self.cfg.max_message:
            raise MessageTooLarge(f"frame of {len(data)} bytes exceeds {self.cfg.max_message}")
        self._open()
        mv = memoryview(data)
        try:
            while mv:
                n = self._wr.write(mv)
                mv = mv[n:]
        except (BrokenPipeError, ValueError) as exc:
            raise PeerClosed("reader end of the pipe is gone") from exc

    def recv(self) -> Envelope:
        if self._closed:
            raise PeerClosed("channel closed")
        self._open()
        try:
            return recv_frame(self._rd.readinto, self.cfg.max_message)
        except ValueError as exc:  # file closed underneath us
            raise PeerClosed("channel closed") from exc

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for f in (self._wr, self._rd):
            if f is not None:
                try:
                    f.close()
                except OSError:
                    pass
        if self._is_server:
            for p in (self._c2s, self._s2c):
                try:
                    os.unlink(p)
                except FileNotFoundError:
                    pass


def open_fifo_pair(cfg: ChannelConfig) -> FifoChannel:
    if cfg.transport is not Transport.FIFO:
        raise ValueError(f"config is for {cfg.transport.value}, not fifo")
    return FifoChannel(cfg)

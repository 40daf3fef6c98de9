"""One bidirectional Unix stream socket at ``<path>.sock``."""

from __future__ import annotations

import os
import socket

from ..codec import Envelope, encode
from ..errors import ConnectRefused, MessageTooLarge, PathUnavailable, PeerClosed
from .base import Channel, ChannelConfig, Role, Transport
from .stream import recv_frame


def socket_path(base: str) -> str:
    return base + ".sock"


class UdsChannel(Channel):
    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        self.path = socket_path(cfg.path)
        self._is_server = cfg.role is Role.SERVER
        self._listener: socket.socket | None = None
        self._sock: socket.socket | None = None
        self._closed = False
        if self._is_server:
            self._listen()
        else:
            self._connect()

    def _listen(self) -> None:
        try:
            if os.path.lexists(self.path):
                os.unlink(self.path)  # stale socket file from an earlier run
            s = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            try:
                s.bind(self.path)
                s.listen(1)
            except OSError:
                s.close()
                raise
        except OSError as exc:
            raise PathUnavailable(f"cannot bind {self.path}: {exc}") from exc
        self._listener = s

    def _connect(self) -> None:
        s = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        try:
            s.connect(self.path)
        except (FileNotFoundError, ConnectionRefusedError) as exc:
            s.close()
            raise ConnectRefused(f"no listener at {self.path}") from exc
        except OSError as exc:
            s.close()
            raise PathUnavailable(f"cannot connect to {self.path}: {exc}") from exc
        self._sock = s

    def _connected(self) -> socket.socket:
        if self._closed:
            raise PeerClosed("channel closed")
        if self._sock is None:
            try:
                self._sock, _ = self._listener.accept()
            except OSError as exc:
                raise PeerClosed("listener closed before a client connected") from exc
        return self._sock

    def send(self, e: Envelope) -> None:
        data = encode(e)
        if len(data) > self.cfg.max_message:
            raise MessageTooLarge(f"frame of {len(data)} bytes exceeds {self.cfg.max_message}")
        s = self._connected()
        try:
            s.sendall(data)
        except OSError as exc:
            raise PeerClosed(f"send failed: {exc}") from exc

    def recv(self) -> Envelope:
        s = self._connected()
        try:
            return recv_frame(s.recv_into, self.cfg.max_message)
        except ConnectionError as exc:
            raise PeerClosed(f"connection lost: {exc}") from exc
        except OSError as exc:
            if self._closed:
                raise PeerClosed("channel closed") from exc
            raise

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for s in (self._sock, self._listener):
            if s is None:
                continue
            try:
                s.shutdown(socket.SHUT_RDWR)  # wakes a thread blocked in recv/accept
            except OSError:
                pass
            s.close()
        if self._is_server:
            try:
                os.unlink(self.path)
            except FileNotFoundError:
                pass


def open_uds(cfg: ChannelConfig) -> UdsChannel:
    if cfg.transport is not Transport.UDS:
        raise ValueError(f"config is for {cfg.transport.value}, not uds")
    return UdsChannel(cfg)

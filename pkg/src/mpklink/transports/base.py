from __future__ import annotations

import abc
import enum
import os
import time
from dataclasses import dataclass

from ..codec import Envelope
from ..memory import PAGE_SIZE

DEFAULT_BUFFER_CAPACITY = 1 << 20
DEFAULT_POLL_INTERVAL_US = 50
DEFAULT_MAX_MESSAGE = (1 << 32) - 1


class Transport(enum.Enum):
    FIFO = "fifo"
    UDS = "uds"
    SHM = "shm"
    MPK = "mpk"

    @classmethod
    def parse(cls, s: "str | Transport") -> "Transport":
        return s if isinstance(s, cls) else cls(str(s).lower())


class Role(enum.Enum):
    CLIENT = "client"
    SERVER = "server"


@dataclass(frozen=True)
class ChannelConfig:
    transport: Transport
    role: Role
    path: str
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY
    poll_interval: int = DEFAULT_POLL_INTERVAL_US  # microseconds
    max_message: int = DEFAULT_MAX_MESSAGE

    def __post_init__(self):
        if self.buffer_capacity < 4096 or self.buffer_capacity % PAGE_SIZE:
            raise ValueError(f"buffer_capacity must be >= 4096 and a multiple of {PAGE_SIZE}")
        if self.poll_interval < 1:
            raise ValueError("poll_interval must be at least 1 microsecond")
        if self.max_message < 1:
            raise ValueError("max_message must be positive")


class Channel(abc.ABC):
    """Bidirectional, blocking, in-order envelope endpoint."""

    @abc.abstractmethod
    def send(self, e: Envelope) -> None: ...

    @abc.abstractmethod
    def recv(self) -> Envelope: ...

    @abc.abstractmethod
    def close(self) -> None: ...

    def abort(self) -> None:
        """Unblock a peer or owner thread stuck in send/recv; safe from any thread.

        Unlike :meth:`close`, this never releases memory another thread may be
        touching.  Call :meth:`close` once the owner has returned.
        """
        self.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# sched_yield releases the GIL and hands the CPU to a runnable peer, which
# matters most when both sides share one CPU; sleep(0) only releases the GIL.
_yield = getattr(os, "sched_yield", None) or (lambda: time.sleep(0))


class Poller:
    """Spin briefly (yielding the CPU), then sleep ``interval_us`` between checks."""

    SPINS = 64

    def __init__(self, interval_us: int):
        self.interval = interval_us / 1e6
        self.n = 0

    def reset(self) -> None:
        self.n = 0

    def wait(self) -> None:
        self.n += 1
        if self.n <= self.SPINS:
            _yield()
        else:
            time.sleep(self.interval)

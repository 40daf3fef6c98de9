"""Protection-key guarded shared-memory channel between two threads.

Each direction ("lane") owns a data buffer tagged with its own protection key and
a control cell on an untagged page: status word, chunk length, last-chunk flag
and a register slot.  Messages are framed by :mod:`mpklink.codec` and streamed
through the data buffer in chunks of at most ``chunk_capacity`` bytes, so a
message may be far larger than the buffer.

Rights policies:

* ``STRICT`` - a thread holds rights on a data buffer only while copying a chunk
  in or out (ReadWrite to write, ReadOnly to read) and NoAccess otherwise.
* ``RELAXED`` - rights are granted once when the session opens: ReadWrite on the
  outbound buffer, ReadOnly on the inbound one.

The creating thread publishes each endpoint's session register into its lane's
register slot; the endpoint thread adopts it on first use.
"""

from __future__ import annotations

import enum
import os
import threading
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .codec import Envelope, decode, encode
from .errors import (
    BadAlignment,
    CrossProcessError,
    Malformed,
    OwnershipError,
    PeerGone,
    TracingDisabled,
)
from .memory import PAGE_SIZE, PageBuffer
from .protection import (
    AccessRegister,
    AccessRights,
    KeyHandle,
    ProtectedRegion,
    ProtectionDomain,
    RegisterSlot,
    get_domain,
)
from .transports.base import DEFAULT_POLL_INTERVAL_US, Channel, Poller

DEFAULT_BUFFER_BYTES = 1 << 20
DEFAULT_CHUNK_CAPACITY = 256 * 1024

EMPTY = 0
READY = 1
WRITER_CLOSED = 1 << 31
READER_CLOSED = 1 << 30

# control cell layout, one 64-byte cell per lane on the control page
_STATUS, _LENGTH, _LAST, _SLOT = 0, 4, 8, 12
_CELL = 64


class RightsPolicy(enum.Enum):
    STRICT = "strict"
    RELAXED = "relaxed"

    @classmethod
    def parse(cls, s: "str | RightsPolicy") -> "RightsPolicy":
        return s if isinstance(s, cls) else cls(str(s).lower())


class TraceEvent(NamedTuple):
    event: str  # "raise" or "lower"
    key_id: int
    rights: AccessRights


# (lane name, chunk index, region, chunk length); runs on the writer thread with
# its write rights still held, after the chunk is in the buffer.
TamperHook = Callable[[str, int, ProtectedRegion, int], None]


@dataclass
class _Lane:
    name: str
    key: KeyHandle
    buffer: PageBuffer
    region: ProtectedRegion
    ctl: PageBuffer
    base: int
    slot: RegisterSlot

    def status(self) -> int:
        return self.ctl.load_acquire(self.base + _STATUS)


class MpkChannelPair:
    """Shared state behind the two endpoints returned by :func:`create_pair`."""

    def __init__(self, domain: ProtectionDomain, buffer_bytes: int, chunk_capacity: int,
                 policy: RightsPolicy, trace: bool, poll_interval: int):
        self.domain = domain
        self.buffer_bytes = buffer_bytes
        self.chunk_capacity = chunk_capacity
        self.policy = policy
        self.trace = trace
        self.poll_interval = poll_interval
        self.pid = os.getpid()
        self.tamper: TamperHook | None = None
        self._lock = threading.Lock()
        self._open = 2
        self._released = False
        self.lanes: dict[str, _Lane] = {}

        keys: list[KeyHandle] = []
        buffers: list[PageBuffer] = []
        try:
            for _ in range(2):
                keys.append(domain.allocate_key())
            self.ctl = PageBuffer.anonymous(PAGE_SIZE)
            for i, (name, key) in enumerate(zip(("c2s", "s2c"), keys)):
                buf = PageBuffer.anonymous(buffer_bytes)
                buffers.append(buf)
                region = domain.tag_region(buf, buffer_bytes, key)
                base = i * _CELL
                self.ctl.store_release(base + _STATUS, EMPTY)
                slot = RegisterSlot.create(self.ctl, base + _SLOT)
                self.lanes[name] = _Lane(name, key, buf, region, self.ctl, base, slot)
        except BaseException:
            for lane in self.lanes.values():
                lane.region.release()
            for buf in buffers:
                buf.close()
            for k in keys:
                domain.free_key(k)
            raise

        c2s, s2c = self.lanes["c2s"], self.lanes["s2c"]
        for out, inb in ((c2s, s2c), (s2c, c2s)):
            domain.publish_register(self._session_register(out, inb), out.slot)
        # the creator orchestrates; it keeps no access to either buffer
        for lane in (c2s, s2c):
            domain.grant(lane.key, AccessRights.NO_ACCESS)

    def _session_register(self, out: _Lane, inb: _Lane) -> AccessRegister:
        if self.policy is RightsPolicy.RELAXED:
            out_r, in_r = AccessRights.READ_WRITE, AccessRights.READ_ONLY
        else:
            out_r = in_r = AccessRights.NO_ACCESS
        return (AccessRegister.all_read_write()
                .with_rights(out.key.key_id, out_r)
                .with_rights(inb.key.key_id, in_r))

    @property
    def released(self) -> bool:
        return self._released

    def _endpoint_closed(self) -> None:
        with self._lock:
            self._open -= 1
            if self._open > 0 or self._released:
                return
            self._released = True
        for lane in self.lanes.values():
            lane.region.release()
            lane.buffer.close()
            self.domain.free_key(lane.key)
        # the control page stays mapped until garbage collection: a late poller
        # on an aborted endpoint may still read its status word


class MpkEndpoint(Channel):
    def __init__(self, pair: MpkChannelPair, role: str, out: _Lane, inb: _Lane):
        self.pair = pair
        self.role = role
        self._out = out
        self._in = inb
        self._owner: int | None = None
        self._session = False
        self._closed = False
        self._released = False
        self._trace: list[TraceEvent] | None = [] if pair.trace else None
        self._poll = Poller(pair.poll_interval)
        self.chunks_sent = 0

    # ownership / session -------------------------------------------------------
    def _enter(self) -> None:
        if os.getpid() != self.pair.pid:
            raise CrossProcessError("MPK endpoints cannot be used from another process")
        me = threading.get_ident()
        if self._owner is None:
            self._owner = me
        elif self._owner != me:
            raise OwnershipError(f"{self.role} endpoint is owned by another thread")
        if self._closed:
            raise PeerGone("endpoint closed")
        if not self._session:
            self.pair.domain.adopt_register(self._out.slot, keys=(self._out.key, self._in.key))
            self._session = True

    def _set(self, event: str, key: KeyHandle, rights: AccessRights) -> None:
        self.pair.domain.grant(key, rights)
        if self._trace is not None:
            self._trace.append(TraceEvent(event, key.key_id, rights))

    def _wait(self, lane: _Lane, ready: bool, gone_bit: int) -> int:
        self._poll.reset()
        while True:
            if self._closed:
                raise PeerGone("endpoint aborted")
            status = lane.status()
            # a departed reader makes sending pointless even if the slot is free;
            # a departed writer may still have left one chunk for us
            if not ready and status & gone_bit:
                raise PeerGone(f"peer left lane {lane.name}")
            if bool(status & READY) == ready:
                return status
            if status & gone_bit:
                raise PeerGone(f"peer left lane {lane.name}")
            self._poll.wait()

    # channel API ---------------------------------------------------------------
    def send(self, e: Envelope) -> None:
        self._enter()
        data = encode(e)
        cap = self.pair.chunk_capacity
        strict = self.pair.policy is RightsPolicy.STRICT
        lane = self._out
        total = len(data)
        n_chunks = -(-total // cap)
        for i in range(n_chunks):
            start = i * cap
            n = min(cap, total - start)
            last = i == n_chunks - 1
            self._wait(lane, ready=False, gone_bit=READER_CLOSED)
            if strict:
                self._set("raise", lane.key, AccessRights.READ_WRITE)
            lane.region.write(0, data, start, n)
            if self.pair.tamper is not None:
                self.pair.tamper(lane.name, i, lane.region, n)
            if strict:
                self._set("lower", lane.key, AccessRights.NO_ACCESS)
            lane.ctl.store_release(lane.base + _LENGTH, n)
            lane.ctl.store_release(lane.base + _LAST, 1 if last else 0)
            lane.ctl.fetch_or(lane.base + _STATUS, READY)
            self.chunks_sent += 1

    def recv(self) -> Envelope:
        self._enter()
        cap = self.pair.chunk_capacity
        strict = self.pair.policy is RightsPolicy.STRICT
        lane = self._in
        parts: list[bytes] = []
        while True:
            self._wait(lane, ready=True, gone_bit=WRITER_CLOSED)
            n = lane.ctl.load_acquire(lane.base + _LENGTH)
            last = lane.ctl.load_acquire(lane.base + _LAST)
            if n > cap:
                lane.ctl.fetch_and(lane.base + _STATUS, ~READY & 0xFFFFFFFF)
                raise Malformed(f"chunk of {n} bytes exceeds capacity {cap}")
            if strict:
                self._set("raise", lane.key, AccessRights.READ_ONLY)
            parts.append(lane.region.read(0, n))
            if strict:
                self._set("lower", lane.key, AccessRights.NO_ACCESS)
            lane.ctl.fetch_and(lane.base + _STATUS, ~READY & 0xFFFFFFFF)
            if last:
                break
        return decode(parts[0] if len(parts) == 1 else b"".join(parts))

    def abort(self) -> None:
        """Make this endpoint's pending and future calls fail with PeerGone; any thread."""
        if self._closed:
            return
        self._closed = True
        if not self.pair.released:
            self._out.ctl.fetch_or(self._out.base + _STATUS, WRITER_CLOSED)
            self._in.ctl.fetch_or(self._in.base + _STATUS, READER_CLOSED)

    def close(self) -> None:
        if self._released:
            return
        self.abort()
        if self._session and self._owner == threading.get_ident() and not self.pair.released:
            for lane in (self._out, self._in):
                self.pair.domain.grant(lane.key, AccessRights.NO_ACCESS)
        self._released = True
        self.pair._endpoint_closed()

    # observability -----------------------------------------------------------
    def rights_trace(self) -> list[TraceEvent]:
        if self._trace is None:
            raise TracingDisabled("create the pair with trace=True")
        return list(self._trace)

    def clear_trace(self) -> None:
        if self._trace is not None:
            self._trace.clear()

    @property
    def outbound_region(self) -> ProtectedRegion:
        return self._out.region

    @property
    def inbound_region(self) -> ProtectedRegion:
        return self._in.region


def rights_trace(ep: MpkEndpoint) -> list[TraceEvent]:
    return ep.rights_trace()


def chunk_count(encoded_size: int, chunk_capacity: int) -> int:
    return -(-encoded_size // chunk_capacity)


def create_pair(buffer_bytes: int = DEFAULT_BUFFER_BYTES,
                policy: "RightsPolicy | str" = RightsPolicy.STRICT,
                backend: "str | ProtectionDomain" = "auto",
                *,
                chunk_capacity: int | None = None,
                trace: bool = False,
                poll_interval: int = DEFAULT_POLL_INTERVAL_US) -> tuple[MpkEndpoint, MpkEndpoint]:
    """Allocate two keyed lanes and return ``(client, server)`` endpoints.

    Endpoints bind to the first thread that uses them.
    """
    if buffer_bytes <= 0 or buffer_bytes % PAGE_SIZE:
        raise BadAlignment(f"buffer_bytes must be a positive multiple of {PAGE_SIZE}")
    if chunk_capacity is None:
        chunk_capacity = min(DEFAULT_CHUNK_CAPACITY, buffer_bytes)
    if not 0 < chunk_capacity <= buffer_bytes:
        raise ValueError(f"chunk_capacity must be in (0, {buffer_bytes}]")
    if poll_interval < 1:
        raise ValueError("poll_interval must be at least 1 microsecond")
    pair = MpkChannelPair(get_domain(backend), buffer_bytes, chunk_capacity,
                          RightsPolicy.parse(policy), trace, poll_interval)
    c2s, s2c = pair.lanes["c2s"], pair.lanes["s2c"]
    return MpkEndpoint(pair, "client", c2s, s2c), MpkEndpoint(pair, "server", s2c, c2s)


def bit_flipper(bit: int) -> TamperHook:
    """Tamper hook flipping one bit of the framed message, counted from its first byte."""
    byte, mask = divmod(bit, 8)
    state = {"offset": 0}

    def hook(lane: str, index: int, region: ProtectedRegion, n: int) -> None:
        if index == 0:
            state["offset"] = 0
        lo = state["offset"]
        state["offset"] += n
        if lo <= byte < lo + n:
            b = region.read(byte - lo, 1)[0]
            region.write(byte - lo, bytes([b ^ (1 << mask)]))

    return hook


# named rendezvous so MPK can be opened through a ChannelConfig like the others
_pending: dict[str, dict[str, MpkEndpoint]] = {}
_pending_lock = threading.Lock()


def open_mpk(cfg, policy: "RightsPolicy | str" = RightsPolicy.STRICT,
             backend: "str | ProtectionDomain" = "auto", chunk_capacity: int | None = None,
             trace: bool = False) -> MpkEndpoint:
    """Take this role's endpoint of the pair named ``cfg.path``, creating it if needed."""
    role = cfg.role.value
    with _pending_lock:
        eps = _pending.get(cfg.path)
        if eps is None:
            client, server = create_pair(cfg.buffer_capacity, policy, backend,
                                         chunk_capacity=chunk_capacity, trace=trace,
                                         poll_interval=cfg.poll_interval)
            eps = _pending[cfg.path] = {"client": client, "server": server}
        ep = eps.pop(role, None)
        if ep is None:
            raise OwnershipError(f"{role} endpoint of {cfg.path!r} already taken")
        if not eps:
            del _pending[cfg.path]
        return ep

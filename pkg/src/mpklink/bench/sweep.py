"""Run the word-count request across transports and payload sizes, timing each request."""

from __future__ import annotations

import gc
import itertools
import logging
import multiprocessing as mp
import os
import shutil
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from ..errors import MessageTooLarge, MpkLinkError
from ..identity import CaRegistry, register
from ..mpk_channel import DEFAULT_BUFFER_BYTES, RightsPolicy, create_pair
from ..transports import ChannelConfig, Role, Transport, open_channel
from ..transports.base import DEFAULT_BUFFER_CAPACITY, DEFAULT_POLL_INTERVAL_US
from ..wordcount import generate_corpus, read_document, request_count, run_server

log = logging.getLogger(__name__)

TABLE_COUNTS = (100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000, 100_000_000)
DESK_LIMIT = 1_000_000  # larger counts need ``full=True``

OK = "Ok"


def error_outcome(kind: str) -> str:
    return f"Error({kind})"


@dataclass(frozen=True)
class BenchRecord:
    transport: str
    n_words: int
    trial: int
    signed: bool
    policy: str  # "" for transports other than mpk
    elapsed_s: float
    outcome: str = OK

    @property
    def ok(self) -> bool:
        return self.outcome == OK

    @property
    def key(self) -> tuple:
        return (self.transport, self.n_words, self.trial, self.signed, self.policy)


@dataclass
class SweepPlan:
    counts: Sequence[int] = TABLE_COUNTS
    transports: Sequence[str] = ("fifo", "uds", "shm", "mpk")
    trials: int = 5
    seed: int = 42
    deadline_s: float = 120.0
    signed: Sequence[bool] = (False,)
    policies: Sequence[str] = ("strict",)
    backend: str = "auto"
    warmup: int = 1
    full: bool = False
    shm_capacity: int = DEFAULT_BUFFER_CAPACITY
    mpk_buffer: int = DEFAULT_BUFFER_BYTES
    poll_interval: int = DEFAULT_POLL_INTERVAL_US
    corpus_dir: Optional[str] = None

    def __post_init__(self):
        self.counts = tuple(int(n) for n in self.counts)
        self.transports = tuple(Transport.parse(t).value for t in self.transports)
        self.policies = tuple(RightsPolicy.parse(p).value for p in self.policies)
        self.signed = tuple(bool(s) for s in self.signed)
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.warmup < 0:
            raise ValueError("warmup must be non-negative")
        if not self.counts or any(b <= a for a, b in zip(self.counts, self.counts[1:])):
            raise ValueError("counts must be non-empty and strictly increasing")
        if self.counts[0] < 0:
            raise ValueError("counts must be non-negative")
        if self.deadline_s <= 0:
            raise ValueError("deadline must be positive")

    def effective_counts(self) -> tuple[int, ...]:
        if self.full:
            return self.counts
        return tuple(n for n in self.counts if n <= DESK_LIMIT)

    def cells(self) -> list[tuple[str, bool, str]]:
        """(transport, signed, policy) combinations, in sweep order."""
        out = []
        for t, s in itertools.product(self.transports, self.signed):
            for p in (self.policies if t == "mpk" else ("",)):
                out.append((t, s, p))
        return out


# server process (fifo / uds / shm) -------------------------------------------

def _serve(transport: str, path: str, capacity: int, poll: int, signed: bool,
           registry_path: Optional[str], ready) -> None:
    gc.disable()  # the process serves a single request
    reg = CaRegistry.load(registry_path) if registry_path else None
    cfg = ChannelConfig(Transport(transport), Role.SERVER, path, capacity, poll)
    ch = open_channel(cfg)
    ready.set()
    try:
        run_server(ch, reg, signed)
    finally:
        ch.close()


@dataclass
class _Trial:
    count: Optional[int] = None
    elapsed: float = 0.0
    error: Optional[BaseException] = None
    channel: object = None
    open_fn: Optional[Callable] = None


def _client(trial: _Trial, open_fn: Callable, identity, doc: bytes, signed: bool) -> None:
    try:
        ch = trial.channel = open_fn()
        try:
            t0 = time.perf_counter()
            count = request_count(ch, identity, doc, signed)
            trial.elapsed = time.perf_counter() - t0
            trial.count = count
        finally:
            ch.close()
    except BaseException as exc:
        trial.error = exc


class _Harness:
    def __init__(self, plan: SweepPlan, workdir: Path):
        self.plan = plan
        self.workdir = workdir
        self.ctx = mp.get_context("spawn")
        self.registry = CaRegistry()
        self.identity = register(self.registry, "bench-client")
        self.registry_path = workdir / "registry.txt"
        self.registry.save(self.registry_path)
        self._docs: dict[int, bytes] = {}

    def document(self, n: int) -> bytes:
        doc = self._docs.get(n)
        if doc is None:
            corpus_dir = Path(self.plan.corpus_dir) if self.plan.corpus_dir else self.workdir
            corpus_dir.mkdir(parents=True, exist_ok=True)
            path = corpus_dir / f"corpus-{n}-{self.plan.seed}.txt"
            if not path.exists():
                tmp = path.with_suffix(f".{uuid.uuid4().hex}.tmp")
                generate_corpus(n, self.plan.seed, tmp)
                os.replace(tmp, path)
            self._docs.clear()  # keep only one large document in memory
            doc = self._docs[n] = read_document(path)
        return doc

    def run(self, transport: str, n: int, signed: bool, policy: str) -> tuple[str, float]:
        doc = self.document(n)
        trial = _Trial()
        if transport == "mpk":
            stop = self._start_mpk(trial, policy, signed)
        else:
            stop = self._start_process(trial, transport, signed)
            if stop is None:
                return error_outcome("ServerStartup"), 0.0
        # as timeit does: no collector pauses inside a timed request
        gc_was_enabled = gc.isenabled()
        gc.collect()
        gc.disable()
        try:
            client = threading.Thread(target=_client, daemon=True,
                                      args=(trial, trial.open_fn, self.identity, doc, signed))
            client.start()
            client.join(self.plan.deadline_s)
            if client.is_alive():
                if trial.channel is not None:
                    trial.channel.abort()
                stop(kill=True)
                client.join(5.0)
                return error_outcome("Deadline"), 0.0
        finally:
            stop(kill=False)
            if gc_was_enabled:
                gc.enable()
        return self._outcome(trial, n)

    @staticmethod
    def _outcome(trial: _Trial, n: int) -> tuple[str, float]:
        if trial.error is not None:
            err = trial.error
            if isinstance(err, MessageTooLarge):
                return error_outcome("MessageTooLarge"), 0.0
            if isinstance(err, MpkLinkError):
                return error_outcome(type(err).__name__), 0.0
            raise err  # harness fault
        if trial.count != n:
            return error_outcome(f"WrongCount {trial.count}"), 0.0
        return OK, trial.elapsed

    def _start_process(self, trial: _Trial, transport: str, signed: bool):
        plan = self.plan
        base = str(self.workdir / f"{transport}-{uuid.uuid4().hex[:12]}")
        if transport == "shm":
            base = f"mpklink-bench-{uuid.uuid4().hex[:12]}"
        capacity = plan.shm_capacity if transport == "shm" else DEFAULT_BUFFER_CAPACITY
        ready = self.ctx.Event()
        proc = self.ctx.Process(
            target=_serve, daemon=True,
            args=(transport, base, capacity, plan.poll_interval, signed,
                  str(self.registry_path) if signed else None, ready))
        proc.start()
        if not ready.wait(max(plan.deadline_s, 30.0)):
            proc.kill()
            proc.join()
            return None
        cfg = ChannelConfig(Transport(transport), Role.CLIENT, base, capacity, plan.poll_interval)
        trial.open_fn = lambda: open_channel(cfg)

        def stop(kill: bool) -> None:
            if kill:
                proc.kill()
            proc.join(10.0)
            if proc.is_alive():
                proc.kill()
                proc.join()
        return stop

    def _start_mpk(self, trial: _Trial, policy: str, signed: bool):
        plan = self.plan
        client_ep, server_ep = create_pair(plan.mpk_buffer, policy, plan.backend,
                                           poll_interval=plan.poll_interval)

        def serve() -> None:
            try:
                run_server(server_ep, self.registry, signed)
            finally:
                server_ep.close()

        server = threading.Thread(target=serve, daemon=True)
        server.start()
        trial.open_fn = lambda: client_ep

        def stop(kill: bool) -> None:
            if kill:
                server_ep.abort()
                client_ep.abort()
            server.join(10.0)
        return stop


def run_sweep(plan: SweepPlan, progress: Optional[Callable[[BenchRecord], None]] = None) -> list[BenchRecord]:
    """Time one complete count request per (cell, n_words, trial).

    Warm-up repetitions run first and are not recorded.  Within each word
    count the cells are interleaved trial by trial so slow drift in machine
    load affects every transport alike.
    """
    workdir = Path(tempfile.mkdtemp(prefix="mpklink-bench-"))
    try:
        h = _Harness(plan, workdir)
        records: list[BenchRecord] = []
        cells = plan.cells()
        for n in plan.effective_counts():
            for rep in range(plan.warmup + plan.trials):
                trial = rep - plan.warmup
                for transport, signed, policy in cells:
                    outcome, elapsed = h.run(transport, n, signed, policy)
                    if trial < 0:
                        continue
                    rec = BenchRecord(transport, n, trial, signed, policy, elapsed, outcome)
                    records.append(rec)
                    if progress is not None:
                        progress(rec)
        order = {c: i for i, c in enumerate(cells)}
        records.sort(key=lambda r: (order[(r.transport, r.signed, r.policy)], r.n_words, r.trial))
        return records
    finally:
        shutil.rmtree(workdir, ignore_errors=True)

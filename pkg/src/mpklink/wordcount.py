"""Word-count request/response services and the benchmark corpus generator."""

from __future__ import annotations

import codecs
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .codec import (
    SENDER_ID_SIZE,
    CountRequest,
    CountResponse,
    Envelope,
    decode_payload,
    encode_payload,
)
from .errors import DecodeError, FileUnreadable, InvalidUtf8, Malformed, PeerClosed
from .identity import CaRegistry, ServiceIdentity, sign_envelope, verify_envelope
from .transports.base import Channel

log = logging.getLogger(__name__)

# Unicode White_Space property
WHITESPACE = (
    "\t\n\x0b\x0c\r \x85\xa0\u1680"
    + "".join(chr(c) for c in range(0x2000, 0x200B))
    + "\u2028\u2029\u202f\u205f\u3000"
)
_WORD = re.compile("[^" + re.escape(WHITESPACE) + "]+")

# small enough that the numpy temporaries stay in cache
_BLOCK = 256 * 1024


class WordCounter:
    """Incremental counter of maximal non-whitespace runs in UTF-8 input."""

    def __init__(self):
        self.count = 0
        self._in_word = False
        self._decoder = codecs.getincrementaldecoder("utf-8")("strict")

    def feed(self, data) -> None:
        mv = memoryview(data).cast("B")
        for i in range(0, len(mv), _BLOCK):
            self._feed_block(mv[i:i + _BLOCK])

    def _feed_block(self, block: memoryview) -> None:
        arr = np.frombuffer(block, dtype=np.uint8)
        if not arr.size:
            return
        pending = self._decoder.getstate()[0]
        if not pending and int(arr.max()) < 0x80:
            ws = (arr == 0x20) | ((arr - 0x09) <= 0x04)  # space, \t \n \v \f \r
            starts = int(np.count_nonzero(~ws[1:] & ws[:-1]))
            if not ws[0] and not self._in_word:
                starts += 1
            self.count += starts
            self._in_word = not ws[-1]
            return
        try:
            text = self._decoder.decode(block)
        except UnicodeDecodeError as exc:
            raise InvalidUtf8(str(exc)) from exc
        self._count_text(text)

    def _count_text(self, text: str) -> None:
        if not text:
            return
        n = 0
        first = True
        for m in _WORD.finditer(text):
            if first and m.start() == 0 and self._in_word:
                pass  # continues the word from the previous block
            else:
                n += 1
            first = False
        self.count += n
        self._in_word = text[-1] not in WHITESPACE

    def finish(self) -> int:
        try:
            self._count_text(self._decoder.decode(b"", final=True))
        except UnicodeDecodeError as exc:
            raise InvalidUtf8(str(exc)) from exc
        return self.count


def count_words(doc) -> int:
    """Number of maximal runs of non-whitespace characters in a UTF-8 document."""
    if isinstance(doc, str):
        doc = doc.encode("utf-8")
    c = WordCounter()
    c.feed(doc)
    return c.finish()


def count_file(path: "str | os.PathLike") -> int:
    c = WordCounter()
    try:
        with open(path, "rb") as f:
            while chunk := f.read(32 * _BLOCK):
                c.feed(chunk)
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc}") from exc
    return c.finish()


def validate_utf8(data: bytes) -> None:
    arr = np.frombuffer(data, dtype=np.uint8)
    if arr.size and int(arr.max()) >= 0x80:
        try:
            codecs.decode(data, "utf-8", "strict")
        except UnicodeDecodeError as exc:
            raise InvalidUtf8(str(exc)) from exc


# corpus ---------------------------------------------------------------------

WORDS_PER_LINE = 20
_GEN_BLOCK = 1 << 20  # words per block; part of the output definition


def generate_corpus(n_words: int, seed: int, path: "str | os.PathLike") -> None:
    """Write ``n_words`` random lowercase words (1-12 letters), 20 per line."""
    if n_words < 0:
        raise ValueError("n_words must be non-negative")
    rng = np.random.default_rng(seed)
    with open(path, "wb") as f:
        for lo in range(0, n_words, _GEN_BLOCK):
            m = min(_GEN_BLOCK, n_words - lo)
            lengths = rng.integers(1, 13, size=m)
            letters = rng.integers(ord("a"), ord("z") + 1, size=int(lengths.sum()), dtype=np.uint8)
            seps = np.cumsum(lengths + 1) - 1
            out = np.empty(int(seps[-1]) + 1, dtype=np.uint8)
            is_letter = np.ones(out.size, dtype=bool)
            is_letter[seps] = False
            out[is_letter] = letters
            index = np.arange(lo + 1, lo + m + 1)
            out[seps] = np.where(index % WORDS_PER_LINE == 0, ord("\n"), ord(" "))
            if lo + m == n_words:
                out[seps[-1]] = ord("\n")
            f.write(out.tobytes())


# services -------------------------------------------------------------------

@dataclass(frozen=True)
class AuditRecord:
    sender_id: bytes
    sequence: int
    reason: str


class AuditLog:
    """Thread-safe record of dropped requests."""

    def __init__(self):
        self._lock = threading.Lock()
        self.records: list[AuditRecord] = []

    def add(self, rec: AuditRecord) -> None:
        log.warning("dropped request seq=%d from %s: %s", rec.sequence, rec.sender_id.hex(), rec.reason)
        with self._lock:
            self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class ServerStats:
    processed: int = 0
    rejected: int = 0
    audit: AuditLog = field(default_factory=AuditLog)


ANONYMOUS = bytes(SENDER_ID_SIZE)


def run_server(ch: Channel, reg: Optional[CaRegistry] = None, signed: bool = False,
               identity: Optional[ServiceIdentity] = None,
               audit: Optional[AuditLog] = None) -> ServerStats:
    """Answer CountRequests until the peer goes away.

    In signed mode requests that fail verification, replay an old sequence
    number, or cannot be decoded are dropped without a reply and audited.
    """
    if signed and reg is None:
        raise ValueError("signed mode needs a registry")
    stats = ServerStats(audit=audit if audit is not None else AuditLog())
    last_seq: dict[bytes, int] = {}
    sender = identity.service_id if identity is not None else ANONYMOUS

    def drop(e: Optional[Envelope], reason: str) -> None:
        stats.rejected += 1
        stats.audit.add(AuditRecord(bytes(e.sender_id) if e else ANONYMOUS,
                                    e.sequence if e else -1, reason))

    while True:
        try:
            e = ch.recv()
        except PeerClosed:
            return stats
        except DecodeError as exc:
            drop(None, f"malformed: {exc}")
            continue
        if signed:
            verdict = verify_envelope(reg, e)
            if not verdict:
                drop(e, str(verdict))
                continue
        sid = bytes(e.sender_id)
        if sid in last_seq and e.sequence <= last_seq[sid]:
            drop(e, "replay")
            continue
        try:
            req = decode_payload(e.payload)
            if not isinstance(req, CountRequest):
                raise Malformed(f"expected CountRequest, got {type(req).__name__}")
            n = count_words(req.text)
        except (DecodeError, InvalidUtf8) as exc:
            drop(e, f"bad request: {exc}")
            continue
        last_seq[sid] = e.sequence
        reply = Envelope(sender, e.sequence, encode_payload(CountResponse(n)))
        if signed and identity is not None:
            reply = sign_envelope(identity, reply)
        try:
            ch.send(reply)
        except PeerClosed:
            return stats
        stats.processed += 1


def request_count(ch: Channel, identity: ServiceIdentity, text: bytes, signed: bool,
                  sequence: int = 0) -> int:
    """Send one CountRequest and wait for its answer."""
    e = Envelope(identity.service_id, sequence, encode_payload(CountRequest(text)))
    if signed:
        e = sign_envelope(identity, e)
    ch.send(e)
    reply = ch.recv()
    resp = decode_payload(reply.payload)
    if not isinstance(resp, CountResponse):
        raise Malformed(f"expected CountResponse, got {type(resp).__name__}")
    if reply.sequence != sequence:
        raise Malformed(f"response for sequence {reply.sequence}, expected {sequence}")
    return resp.count


def read_document(path: "str | os.PathLike") -> bytes:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc}") from exc
    validate_utf8(data)
    return data


def run_client(ch: Channel, identity: ServiceIdentity, path: "str | os.PathLike",
               signed: bool = False, sequence: int = 0) -> int:
    return request_count(ch, identity, read_document(path), signed, sequence)

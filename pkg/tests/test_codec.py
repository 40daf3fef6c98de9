from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from mpklink.codec import (
    MAX_PAYLOAD,
    CountRequest,
    CountResponse,
    Envelope,
    Raw,
    decode,
    decode_payload,
    decode_prefix,
    encode,
    encode_payload,
    encoded_size,
    frame_length,
)
from mpklink.errors import BadVersion, DecodeError, Malformed, Truncated

envelopes = st.builds(
    Envelope,
    sender_id=st.binary(min_size=16, max_size=16),
    sequence=st.integers(0, 2**64 - 1),
    payload=st.binary(max_size=2048),
    signature=st.none() | st.binary(min_size=64, max_size=64),
)
payloads = st.one_of(
    st.builds(CountRequest, st.binary(max_size=512)),
    st.builds(CountResponse, st.integers(0, 2**64 - 1)),
    st.builds(Raw, st.binary(max_size=512)),
)


def test_empty_envelope_total_length():
    b = encode(Envelope(bytes(16), 0))
    assert b[:4] == (30).to_bytes(4, "big")
    assert len(b) == 34


def test_field_layout():
    b = encode(Envelope(bytes(16), 7, b"hi"))
    assert b[21:29] == bytes([0, 0, 0, 0, 0, 0, 0, 7])
    assert b[30:34] == bytes([0, 0, 0, 2])
    assert b[34:] == b"hi"


def test_signature_layout():
    sig = bytes(range(64))
    b = encode(Envelope(b"s" * 16, 1, b"x", sig))
    assert b[29] == 1
    assert b[30:94] == sig
    assert frame_length(b) == 30 + 64 + 1


@given(envelopes)
def test_roundtrip(e):
    b = encode(e)
    assert len(b) == encoded_size(e)
    assert decode(b) == e
    assert encode(decode(b)) == b


@given(envelopes, envelopes)
def test_injective(a, b):
    if a != b:
        assert encode(a) != encode(b)


@given(payloads)
def test_payload_roundtrip(p):
    assert decode_payload(encode_payload(p)) == p


def test_empty_input_truncated():
    with pytest.raises(Truncated):
        decode(b"")


def test_bad_version():
    b = bytearray(encode(Envelope(bytes(16), 3, b"abc")))
    b[4] = 2
    with pytest.raises(BadVersion):
        decode(bytes(b))
    with pytest.raises(BadVersion):
        encode(Envelope(bytes(16), 0, version=2))


def test_truncated_frame():
    b = encode(Envelope(bytes(16), 3, b"abcdef"))
    for cut in range(len(b)):
        with pytest.raises(DecodeError):
            decode(b[:cut])


def test_trailing_bytes_rejected():
    b = encode(Envelope(bytes(16), 3))
    with pytest.raises(Malformed):
        decode(b + b"\0")
    e, used = decode_prefix(b + b"\0")
    assert used == len(b)


def test_bad_signature_flag():
    b = bytearray(encode(Envelope(bytes(16), 3)))
    b[29] = 7
    with pytest.raises(Malformed):
        decode(bytes(b))


def test_inconsistent_payload_length():
    b = bytearray(encode(Envelope(bytes(16), 3, b"abcd")))
    b[33] = 9
    with pytest.raises(Malformed):
        decode(bytes(b))


def test_encode_validation():
    with pytest.raises(ValueError):
        encode(Envelope(bytes(15), 0))
    with pytest.raises(ValueError):
        encode(Envelope(bytes(16), -1))
    with pytest.raises(ValueError):
        encode(Envelope(bytes(16), 0, signature=b"short"))


def test_payload_errors():
    with pytest.raises(Truncated):
        decode_payload(b"")
    with pytest.raises(Malformed):
        decode_payload(b"\x09abc")
    with pytest.raises(Malformed):
        decode_payload(b"\x02\x00")
    with pytest.raises(ValueError):
        CountResponse(-1)
    assert MAX_PAYLOAD == 2**32 - 1


def test_fuzz_never_reads_past_declared_length():
    # decode_prefix only sees a memoryview of the declared frame, so we check
    # that bytes past 4 + total_length cannot influence the outcome.
    rng = random.Random(1234)
    for _ in range(5000):
        n = rng.randrange(0, 140)
        data = bytearray(rng.getrandbits(8) for _ in range(n))
        if n >= 4 and rng.random() < 0.7:
            data[0:4] = rng.randrange(0, n).to_bytes(4, "big")
        if n >= 5 and rng.random() < 0.8:
            data[4] = 1
        outcomes = []
        for tail in (b"", b"\xff" * 200, bytes(200)):
            try:
                e, used = decode_prefix(bytes(data) + tail)
                outcomes.append(("ok", e, used))
            except DecodeError as exc:
                outcomes.append(("err", type(exc)))
        declared = int.from_bytes(data[:4], "big") + 4 if n >= 4 else None
        if declared is not None and declared <= n:
            # the whole frame was present: the tail must be irrelevant
            assert outcomes[0] == outcomes[1] == outcomes[2]
            if outcomes[0][0] == "ok":
                assert outcomes[0][2] == declared


@settings(max_examples=300)
@given(st.binary(max_size=300))
def test_random_bytes_only_raise_decode_errors(b):
    try:
        e, used = decode_prefix(b)
    except DecodeError:
        return
    assert used == 4 + int.from_bytes(b[:4], "big") <= len(b)

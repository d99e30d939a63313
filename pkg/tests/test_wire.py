import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lossyrand import wire
from lossyrand.wire import (Challenge, EqResp, FrameError, GenResp, Image, Instance, Reason, Tag, Verdict,
                            decode, encode)

Q_MAX = 2**63 - 1


def random_message(tag: Tag, rng: np.random.Generator):
    q = int(rng.choice([2, 5, 251, 65537, 67108859, Q_MAX]))
    rows, cols = int(rng.integers(1, 30)), int(rng.integers(1, 8))
    vec = lambda k: rng.integers(0, q, size=k, dtype=np.int64)  # noqa: E731
    if tag == Tag.INSTANCE:
        return Instance(rng.integers(0, q, size=(rows, cols), dtype=np.int64), vec(rows))
    if tag == Tag.IMAGE:
        return Image(vec(rows))
    if tag == Tag.CHALLENGE:
        return Challenge("GT"[int(rng.integers(2))])
    if tag == Tag.GEN_RESP:
        return GenResp(int(rng.integers(2)), vec(cols))
    if tag == Tag.EQ_RESP:
        return EqResp(int(rng.integers(2)), rng.integers(0, 2, size=int(rng.integers(1, 300))).astype(np.uint8))
    return Verdict(bool(rng.integers(2)), Reason(int(rng.choice([r.value for r in Reason]))))


@pytest.mark.parametrize("tag", list(Tag))
def test_round_trip_1000_per_tag(tag):
    rng = np.random.default_rng(int(tag))
    for _ in range(1000):
        msg = random_message(tag, rng)
        frame = encode(msg)
        assert frame[:4] == b"CRND" and frame[4] == 0x01 and frame[5] == tag
        assert struct.unpack(">I", frame[6:10])[0] == len(frame) - 10
        assert decode(frame) == msg


def test_scalar_and_matrix_layout():
    frame = encode(Image(np.array([1, 258])))
    payload = frame[10:]
    assert payload[:8] == struct.pack(">II", 2, 1)
    assert payload[8:16] == (1).to_bytes(8, "little")
    assert payload[16:24] == (258).to_bytes(8, "little")


def test_bits_are_lsb_first():
    payload = encode(EqResp(1, np.array([1, 0, 0, 0, 0, 0, 0, 0, 1], dtype=np.uint8)))[10:]
    assert payload == bytes([1]) + struct.pack(">I", 9) + bytes([0b00000001, 0b00000001])


def test_padding_bits_must_be_zero():
    frame = bytearray(encode(EqResp(0, np.array([1, 1, 0], dtype=np.uint8))))
    frame[-1] |= 0x80
    with pytest.raises(FrameError):
        decode(bytes(frame))


def test_verdict_layout():
    assert encode(Verdict(False, Reason.TRAPDOOR_DECODE))[10:] == bytes([0, 0x00, 0x13])


def test_truncated_frame_is_rejected():
    frame = encode(Instance(np.eye(3, dtype=np.int64), np.array([1, 2, 3])))
    for cut in (3, 9, 10, 20, len(frame) - 1):
        with pytest.raises(FrameError) as exc:
            decode(frame[:cut])
        assert exc.value.reason == Reason.MALFORMED


def test_wrong_version_gives_reason_0002():
    frame = bytearray(encode(Challenge("G")))
    frame[4] = 0x02
    with pytest.raises(FrameError) as exc:
        decode(bytes(frame))
    assert exc.value.reason == Reason.BAD_VERSION == 0x0002


def test_bad_magic_and_tag():
    frame = encode(Challenge("T"))
    with pytest.raises(FrameError) as exc:
        decode(b"XRND" + frame[4:])
    assert exc.value.reason == Reason.BAD_MAGIC
    with pytest.raises(FrameError) as exc:
        decode(frame[:5] + bytes([0x7F]) + frame[6:])
    assert exc.value.reason == Reason.MALFORMED


@settings(max_examples=300)
@given(st.binary(max_size=64))
def test_garbage_never_crashes(blob):
    try:
        decode(blob)
    except FrameError:
        pass


@settings(max_examples=500)
@given(st.binary(max_size=40))
def test_arbitrary_payload_for_each_tag(blob):
    for tag in Tag:
        frame = wire.HEADER.pack(wire.MAGIC, wire.VERSION, tag, len(blob)) + blob
        try:
            msg = decode(frame)
        except FrameError:
            continue
        assert encode(msg) == frame


def test_read_frame_from_chunks():
    frames = encode(Challenge("G")) + encode(Verdict(True))
    pos = 0

    def read(n):
        nonlocal pos
        chunk = frames[pos:pos + n]
        pos += len(chunk)
        return chunk

    assert wire.read_frame(read) == Challenge("G")
    assert wire.read_frame(read) == Verdict(True)
    with pytest.raises(FrameError):
        wire.read_frame(read)

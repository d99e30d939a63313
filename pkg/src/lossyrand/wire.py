"""Message types and their binary framing.

Frame layout::

    b"CRND" | version (1 byte, 0x01) | tag (1 byte) | payload length (u32 BE) | payload

Scalars of Z_q are 8-byte little-endian unsigned.  A matrix is
u32 rows, u32 cols (BE) followed by row-major scalars; a vector is encoded
as a one-column matrix.  Bit strings are a u32 BE bit count followed by the
bits packed LSB-first.  Verdicts carry an accept byte and a u16 BE reason.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"CRND"
VERSION = 0x01
HEADER = struct.Struct(">4sBBI")
MAX_PAYLOAD = 1 << 26


class Tag(enum.IntEnum):
    INSTANCE = 0x01
    IMAGE = 0x02
    CHALLENGE = 0x03
    GEN_RESP = 0x04
    EQ_RESP = 0x05
    VERDICT = 0x06


class Reason(enum.IntEnum):
    OK = 0x0000
    BAD_MAGIC = 0x0001
    BAD_VERSION = 0x0002
    MALFORMED = 0x0003
    OUT_OF_ORDER = 0x0004
    TIMEOUT = 0x0005
    GEN_BOUND = 0x0010
    D_ZERO = 0x0011
    EQUATION = 0x0012
    TRAPDOOR_DECODE = 0x0013
    TRANSPORT = 0x0020


class FrameError(ValueError):
    """A frame could not be decoded; ``reason`` says why."""

    def __init__(self, reason: Reason, detail: str = ""):
        super().__init__(f"{reason.name}: {detail}" if detail else reason.name)
        self.reason = reason


def _eq(a, b) -> bool:
    return np.array_equal(np.asarray(a), np.asarray(b))


@dataclass(frozen=True, eq=False)
class Instance:
    matrix: np.ndarray
    u: np.ndarray

    def __eq__(self, other):
        return isinstance(other, Instance) and _eq(self.matrix, other.matrix) and _eq(self.u, other.u)


@dataclass(frozen=True, eq=False)
class Image:
    y: np.ndarray

    def __eq__(self, other):
        return isinstance(other, Image) and _eq(self.y, other.y)


@dataclass(frozen=True)
class Challenge:
    C: str  # "G" or "T"

    def __post_init__(self):
        if self.C not in ("G", "T"):
            raise ValueError(f"challenge must be G or T, got {self.C!r}")


@dataclass(frozen=True, eq=False)
class GenResp:
    b: int
    x: np.ndarray

    def __eq__(self, other):
        return isinstance(other, GenResp) and self.b == other.b and _eq(self.x, other.x)


@dataclass(frozen=True, eq=False)
class EqResp:
    c: int
    d: np.ndarray

    def __eq__(self, other):
        return isinstance(other, EqResp) and self.c == other.c and _eq(self.d, other.d)


@dataclass(frozen=True)
class Verdict:
    accept: bool
    reason: Reason = Reason.OK


Message = Instance | Image | Challenge | GenResp | EqResp | Verdict

_TAGS = {Instance: Tag.INSTANCE, Image: Tag.IMAGE, Challenge: Tag.CHALLENGE,
         GenResp: Tag.GEN_RESP, EqResp: Tag.EQ_RESP, Verdict: Tag.VERDICT}


# --- field codecs ---------------------------------------------------------------

def _enc_matrix(M) -> bytes:
    M = np.asarray(M, dtype=np.uint64)
    rows, cols = M.shape
    return struct.pack(">II", rows, cols) + M.astype("<u8").tobytes()


def _enc_vector(v) -> bytes:
    return _enc_matrix(np.asarray(v).reshape(-1, 1))


def _enc_bits(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    return struct.pack(">I", bits.size) + np.packbits(bits, bitorder="little").tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FrameError(Reason.MALFORMED, "payload too short")
        chunk = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def matrix(self) -> np.ndarray:
        rows, cols = struct.unpack(">II", self.take(8))
        if rows * cols * 8 > len(self.data):
            raise FrameError(Reason.MALFORMED, "matrix dimensions exceed payload")
        raw = np.frombuffer(self.take(8 * rows * cols), dtype="<u8")
        return raw.astype(np.int64).reshape(rows, cols)

    def vector(self) -> np.ndarray:
        M = self.matrix()
        if M.shape[1] != 1:
            raise FrameError(Reason.MALFORMED, "vector must have one column")
        return M[:, 0]

    def bits(self) -> np.ndarray:
        (count,) = struct.unpack(">I", self.take(4))
        raw = np.frombuffer(self.take((count + 7) // 8), dtype=np.uint8)
        if count % 8 and raw[-1] >> (count % 8):
            raise FrameError(Reason.MALFORMED, "nonzero padding bits")
        return np.unpackbits(raw, count=count, bitorder="little")

    def bit(self) -> int:
        v = self.u8()
        if v > 1:
            raise FrameError(Reason.MALFORMED, f"expected a bit, got {v}")
        return v

    def done(self):
        if self.pos != len(self.data):
            raise FrameError(Reason.MALFORMED, "trailing bytes in payload")


def encode_payload(msg: Message) -> bytes:
    if isinstance(msg, Instance):
        return _enc_matrix(msg.matrix) + _enc_vector(msg.u)
    if isinstance(msg, Image):
        return _enc_vector(msg.y)
    if isinstance(msg, Challenge):
        return bytes([0 if msg.C == "G" else 1])
    if isinstance(msg, GenResp):
        return bytes([msg.b]) + _enc_vector(msg.x)
    if isinstance(msg, EqResp):
        return bytes([msg.c]) + _enc_bits(msg.d)
    if isinstance(msg, Verdict):
        return struct.pack(">BH", int(msg.accept), int(msg.reason))
    raise TypeError(f"not a protocol message: {msg!r}")


def decode_payload(tag: Tag, payload: bytes) -> Message:
    r = _Reader(payload)
    if tag == Tag.INSTANCE:
        msg = Instance(r.matrix(), r.vector())
    elif tag == Tag.IMAGE:
        msg = Image(r.vector())
    elif tag == Tag.CHALLENGE:
        msg = Challenge("GT"[r.bit()])
    elif tag == Tag.GEN_RESP:
        msg = GenResp(r.bit(), r.vector())
    elif tag == Tag.EQ_RESP:
        msg = EqResp(r.bit(), r.bits())
    else:
        accept = r.bit()
        (code,) = struct.unpack(">H", r.take(2))
        try:
            reason = Reason(code)
        except ValueError:
            raise FrameError(Reason.MALFORMED, f"unknown reason code {code:#06x}") from None
        msg = Verdict(bool(accept), reason)
    r.done()
    return msg


def encode(msg: Message) -> bytes:
    payload = encode_payload(msg)
    return HEADER.pack(MAGIC, VERSION, _TAGS[type(msg)], len(payload)) + payload


def parse_header(header: bytes) -> tuple[Tag, int]:
    if len(header) < HEADER.size:
        raise FrameError(Reason.MALFORMED, "truncated header")
    magic, version, tag, length = HEADER.unpack(header[:HEADER.size])
    if magic != MAGIC:
        raise FrameError(Reason.BAD_MAGIC, repr(magic))
    if version != VERSION:
        raise FrameError(Reason.BAD_VERSION, f"version {version:#04x}")
    try:
        tag = Tag(tag)
    except ValueError:
        raise FrameError(Reason.MALFORMED, f"unknown tag {tag:#04x}") from None
    if length > MAX_PAYLOAD:
        raise FrameError(Reason.MALFORMED, f"payload length {length} too large")
    return tag, length


def decode(frame: bytes) -> Message:
    """Decode exactly one complete frame."""
    tag, length = parse_header(frame)
    body = frame[HEADER.size:]
    if len(body) != length:
        raise FrameError(Reason.MALFORMED, f"expected {length} payload bytes, got {len(body)}")
    return decode_payload(tag, body)


def read_frame(read_exact) -> Message:
    """Read one frame using ``read_exact(n) -> bytes`` (which may return short on EOF)."""
    header = read_exact(HEADER.size)
    tag, length = parse_header(header)
    body = read_exact(length)
    if len(body) != length:
        raise FrameError(Reason.MALFORMED, "truncated frame")
    return decode_payload(tag, body)

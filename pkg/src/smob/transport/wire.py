"""Byte layouts: FHE object blobs and the framed message format.

Object blob (little-endian)::

    n            u16
    prime count  u8
    poly count   u8
    level        u8
    domain       u8   (0 coefficient, 1 NTT)
    scale        f64  (CKKS; 0.0 otherwise)
    residues     u64 x poly count x prime count x n, in (poly, prime, coeff) order

Frame::

    "FHSM" | version u8 | msg_type u8 | scheme u8 | category u8 | txid 16B |
    payload_len u32 | payload
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from smob.errors import FrameError, ParameterMismatchError, SerializationError
from smob.fhe.ciphertext import Ciphertext
from smob.fhe.context import Context
from smob.fhe.keys import PublicKey, RelinKey, SecretKey
from smob.fhe.params import Scheme
from smob.privacy import DataCategory, PartyRole
from smob.ring import RingElement, ntt_inverse
from smob.transport.message import MsgType, TaggedMessage

BLOB_HEADER = struct.Struct("<HBBBBd")
BLOB_HEADER_SIZE = BLOB_HEADER.size  # 14

MAGIC = b"FHSM"
VERSION = 1
FRAME_HEADER = struct.Struct("<4sBBBB16sI")
FRAME_HEADER_SIZE = FRAME_HEADER.size  # 28
MAX_FRAME_BYTES = 64 * 1024 * 1024
TXID_BYTES = 16


def blob_size(n: int, primes: int, polys: int) -> int:
    """Closed-form length of an object blob."""
    return BLOB_HEADER_SIZE + polys * primes * n * 8


# --------------------------------------------------------------------------
# polynomial blobs


def _pack(polys: list[RingElement], level: int, scale: float) -> bytes:
    if not polys:
        raise SerializationError("nothing to serialize")
    n = polys[0].n
    k = len(polys[0].moduli)
    if n >= 1 << 16 or k > 255 or len(polys) > 255:
        raise SerializationError("object exceeds the blob header ranges")
    domain = 1 if polys[0].ntt else 0
    head = BLOB_HEADER.pack(n, k, len(polys), level, domain, float(scale))
    body = np.stack([p.data for p in polys]).astype("<u8", copy=False).tobytes()
    return head + body


@dataclass(frozen=True)
class _Blob:
    n: int
    primes: int
    polys: int
    level: int
    ntt: bool
    scale: float
    residues: np.ndarray  # (polys, primes, n) int64


def _unpack(buf, ctx: Context) -> tuple[_Blob, int]:
    """Parse one blob at the start of ``buf``; returns the blob and bytes consumed."""
    view = memoryview(buf)
    if len(view) < BLOB_HEADER_SIZE:
        raise SerializationError("truncated buffer: incomplete header")
    n, k, count, level, domain, scale = BLOB_HEADER.unpack_from(view)
    if n != ctx.n:
        raise ParameterMismatchError(f"blob has n={n}, context has n={ctx.n}")
    if domain not in (0, 1):
        raise SerializationError(f"bad domain flag {domain}")
    if count == 0:
        raise SerializationError("blob holds no polynomials")
    if level > ctx.top_level or k != level + 1:
        raise ParameterMismatchError(f"blob level {level} with {k} primes does not fit the chain")
    size = blob_size(n, k, count)
    if len(view) < size:
        raise SerializationError(f"truncated buffer: need {size} bytes, have {len(view)}")
    raw = np.frombuffer(view[BLOB_HEADER_SIZE:size], dtype="<u8").reshape(count, k, n)
    q = np.asarray(ctx.moduli(level), dtype=np.uint64).reshape(1, k, 1)
    if np.any(raw >= q):
        raise SerializationError("residue out of range for its prime")
    return _Blob(n, k, count, level, bool(domain), scale, raw.astype(np.int64)), size


def _polys(blob: _Blob, ctx: Context) -> list[RingElement]:
    moduli = ctx.moduli(blob.level)
    return [RingElement(blob.residues[i].copy(), moduli, blob.ntt) for i in range(blob.polys)]


def _exact(buf, ctx: Context) -> _Blob:
    blob, used = _unpack(buf, ctx)
    if used != len(buf):
        raise SerializationError(f"{len(buf) - used} trailing bytes after the blob")
    return blob


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    return _pack(ct.polys, ct.level, ct.scale if ct.scheme is Scheme.CKKS else 0.0)


def deserialize_ciphertext(buf, ctx: Context) -> Ciphertext:
    blob = _exact(buf, ctx)
    if ctx.scheme is not Scheme.CKKS and blob.scale != 0.0:
        raise ParameterMismatchError("non-CKKS ciphertext carries a scale")
    if ctx.scheme is Scheme.CKKS and not blob.scale > 0.0:
        raise ParameterMismatchError("CKKS ciphertext without a positive scale")
    return Ciphertext(ctx.scheme, _polys(blob, ctx), blob.level, blob.scale)


def serialize_public_key(pk: PublicKey) -> bytes:
    return _pack([pk.b, pk.a], len(pk.b.moduli) - 1, 0.0)


def deserialize_public_key(buf, ctx: Context) -> PublicKey:
    blob = _exact(buf, ctx)
    if blob.polys != 2 or blob.level != ctx.top_level:
        raise ParameterMismatchError("public key must be two polynomials over the full chain")
    b, a = _polys(blob, ctx)
    return PublicKey(b, a)


def serialize_secret_key(sk: SecretKey) -> bytes:
    return _pack([sk.poly], len(sk.poly.moduli) - 1, 0.0)


def deserialize_secret_key(buf, ctx: Context) -> SecretKey:
    blob = _exact(buf, ctx)
    if blob.polys != 1 or blob.level != ctx.top_level or not blob.ntt:
        raise ParameterMismatchError("secret key must be one NTT-domain polynomial")
    (poly,) = _polys(blob, ctx)
    coeffs = ntt_inverse(poly).centered().astype(np.int64)
    return SecretKey(coeffs, poly)


def serialize_relin_key(rk: RelinKey) -> bytes:
    if rk.digits > 255:
        raise SerializationError("too many relinearization digits")
    parts = [bytes([rk.digits])]
    for b, a in rk.pairs:
        parts.append(_pack([b, a], len(b.moduli) - 1, 0.0))
    return b"".join(parts)


def deserialize_relin_key(buf, ctx: Context) -> RelinKey:
    view = memoryview(buf)
    if len(view) < 1:
        raise SerializationError("truncated buffer: missing digit count")
    digits = view[0]
    if digits != ctx.params.relin_digit_count():
        raise ParameterMismatchError(
            f"relin key has {digits} digits, parameters need {ctx.params.relin_digit_count()}")
    pos = 1
    pairs = []
    for _ in range(digits):
        blob, used = _unpack(view[pos:], ctx)
        if blob.polys != 2:
            raise SerializationError("relin key digit must hold two polynomials")
        b, a = _polys(blob, ctx)
        pairs.append((b, a))
        pos += used
    if pos != len(view):
        raise SerializationError(f"{len(view) - pos} trailing bytes after the relin key")
    return RelinKey(pairs, ctx.params.relin_base_bits)


def encode_plain_result(value, scheme: Scheme) -> bytes:
    if Scheme(scheme) is Scheme.CKKS:
        return struct.pack("<d", float(value))
    return struct.pack("<q", int(value))


def decode_plain_result(buf, scheme: Scheme):
    if len(buf) != 8:
        raise SerializationError("plain result must be 8 bytes")
    if Scheme(scheme) is Scheme.CKKS:
        return struct.unpack("<d", buf)[0]
    return struct.unpack("<q", buf)[0]


# --------------------------------------------------------------------------
# frames


@dataclass(frozen=True)
class FrameHeader:
    msg_type: MsgType
    scheme: Scheme
    category: DataCategory
    txid: bytes
    payload_len: int


def encode_frame(msg: TaggedMessage) -> bytes:
    if len(msg.txid) != TXID_BYTES:
        raise FrameError(f"transaction id must be {TXID_BYTES} bytes")
    if FRAME_HEADER_SIZE + len(msg.payload) > MAX_FRAME_BYTES:
        raise FrameError("frame exceeds the 64 MiB cap")
    head = FRAME_HEADER.pack(MAGIC, VERSION, int(msg.msg_type), int(msg.scheme),
                             int(msg.category), msg.txid, len(msg.payload))
    return head + msg.payload


def parse_frame_header(buf) -> FrameHeader:
    if len(buf) < FRAME_HEADER_SIZE:
        raise FrameError("truncated frame header")
    magic, version, mtype, scheme, cat, txid, length = FRAME_HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported frame version {version}")
    try:
        header = FrameHeader(MsgType(mtype), Scheme(scheme), DataCategory(cat), txid, length)
    except ValueError as exc:
        raise FrameError(str(exc)) from None
    if FRAME_HEADER_SIZE + length > MAX_FRAME_BYTES:
        raise FrameError("frame exceeds the 64 MiB cap")
    return header


def decode_frame(buf, sender_role: PartyRole | None, sender_id: str,
                 receiver_role: PartyRole, receiver_id: str) -> TaggedMessage:
    header = parse_frame_header(buf)
    if len(buf) != FRAME_HEADER_SIZE + header.payload_len:
        raise FrameError(
            f"payload length {len(buf) - FRAME_HEADER_SIZE} does not match header "
            f"{header.payload_len}")
    return TaggedMessage(header.txid, sender_role, sender_id, receiver_role, receiver_id,
                         header.msg_type, header.category, bytes(buf[FRAME_HEADER_SIZE:]),
                         header.scheme)


def malformed_record(buf, sender_role, sender_id, receiver_role, receiver_id) -> TaggedMessage:
    """Trace entry standing in for a frame that failed validation."""
    txid = bytes(buf[8:24]) if len(buf) >= 24 else bytes(TXID_BYTES)
    return TaggedMessage(txid, sender_role, sender_id, receiver_role, receiver_id,
                         MsgType.CONTROL, DataCategory.INSENSITIVE, bytes(buf), malformed=True)

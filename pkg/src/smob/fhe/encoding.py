"""Plaintext encodings.

Integer schemes pack up to ``n`` values into the slots of ``R_t`` through the
negacyclic NTT modulo ``t`` (slot-wise add/multiply). CKKS maps up to ``n/2``
complex values through the inverse canonical embedding: slot ``j`` is the
evaluation at ``zeta**(5**j)``, with ``zeta`` a primitive ``2n``-th root of
unity, and conjugate slots are filled so the polynomial is real.
"""
from __future__ import annotations

import numpy as np

from smob.errors import EncodingOverflowError, EncodingUnsupportedError, SchemeMismatchError
from smob.fhe.ciphertext import Plaintext
from smob.fhe.context import Context
from smob.fhe.params import Scheme
from smob.ring import RingElement, ntt_forward, ntt_inverse

_INT64_SAFE = float(2 ** 62)


def encode_integers(values, ctx: Context) -> Plaintext:
    params = ctx.params
    if params.scheme is Scheme.CKKS:
        raise SchemeMismatchError("encode_integers is for BFV/BGV; use ckks_encode")
    t = params.plain_modulus
    vals = np.mod(np.asarray([int(v) for v in values], dtype=object), t).astype(np.int64)
    if len(vals) > ctx.n:
        raise EncodingUnsupportedError(f"{len(vals)} values exceed the {ctx.n} slots")
    if params.batching:
        slots = np.zeros(ctx.n, dtype=np.int64)
        slots[: len(vals)] = vals
        poly = ntt_inverse(RingElement(slots[None, :], (t,), ntt=True))
    else:
        if len(vals) > 1:
            raise EncodingUnsupportedError(
                f"t={t} does not support batching; encode a single integer")
        coeffs = np.zeros(ctx.n, dtype=np.int64)
        coeffs[: len(vals)] = vals
        poly = RingElement(coeffs[None, :], (t,))
    return Plaintext(params.scheme, poly, 0.0, len(vals))


def decode_integers(pt: Plaintext, ctx: Context) -> np.ndarray:
    """Slot values in ``[0, t)``; coefficient values when ``t`` cannot batch."""
    if pt.scheme is Scheme.CKKS:
        raise SchemeMismatchError("decode_integers is for BFV/BGV plaintexts")
    if ctx.params.batching:
        return ntt_forward(pt.poly).data[0].copy()
    return pt.poly.data[0].copy()


def ckks_encode(values, scale: float, ctx: Context, level: int | None = None) -> Plaintext:
    if ctx.scheme is not Scheme.CKKS:
        raise SchemeMismatchError("ckks_encode needs a CKKS context")
    n = ctx.n
    z = np.asarray(values, dtype=np.complex128).ravel()
    if len(z) > n // 2:
        raise EncodingUnsupportedError(f"{len(z)} values exceed the {n // 2} slots")
    level = ctx.top_level if level is None else level
    moduli = ctx.moduli(level)
    Q = ctx.modulus(level)
    if scale >= Q:
        raise EncodingOverflowError("scale exceeds the active modulus")
    slots = np.zeros(n // 2, dtype=np.complex128)
    slots[: len(z)] = z
    spectrum = np.zeros(n, dtype=np.complex128)
    spectrum[ctx.slot_index] = slots * scale
    spectrum[ctx.conj_index] = np.conj(slots) * scale
    coeffs = np.rint((np.fft.fft(spectrum) / n * np.conj(ctx.zeta_pows)).real)
    peak = float(np.abs(coeffs).max(initial=0.0))
    if 2 * peak >= Q:
        raise EncodingOverflowError("encoded coefficients exceed the active modulus")
    if peak < _INT64_SAFE:
        poly = RingElement.from_small(coeffs.astype(np.int64), moduli)
    else:
        poly = RingElement.from_ints(np.array([int(c) for c in coeffs], dtype=object), moduli)
    return Plaintext(Scheme.CKKS, poly, float(scale), len(z))


def ckks_decode(pt: Plaintext, ctx: Context) -> np.ndarray:
    """Complex slot values (``n/2`` of them)."""
    if pt.scheme is not Scheme.CKKS:
        raise SchemeMismatchError("ckks_decode needs a CKKS plaintext")
    coeffs = pt.poly.centered().astype(np.float64)
    return evaluate_slots(coeffs, ctx) / pt.scale


def evaluate_slots(coeffs: np.ndarray, ctx: Context) -> np.ndarray:
    n = ctx.n
    evals = n * np.fft.ifft(coeffs * ctx.zeta_pows)
    return evals[ctx.slot_index]

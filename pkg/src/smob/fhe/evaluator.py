"""Encryption, decryption and homomorphic evaluation for BFV, BGV and CKKS.

Ciphertext polynomials are kept in the coefficient domain between
operations; each operation moves through the NTT domain internally.
"""
from __future__ import annotations

import math

import numpy as np

from smob.errors import (
    AlignmentError,
    DecryptionFailureError,
    LevelExhaustedError,
    ParameterError,
    ParameterMismatchError,
    SchemeMismatchError,
    UnsupportedParametersError,
)
from smob.fhe.ciphertext import Ciphertext, Plaintext
from smob.fhe.context import Context
from smob.fhe.keys import PublicKey, RelinKey, SecretKey, _error_scale, sampler_for
from smob.fhe.params import Scheme
from smob.ring import (
    RingElement,
    crt_basis,
    error_coeffs,
    integer_digits,
    mulmod,
    ntt_forward,
    ntt_inverse,
    pointwise_mul,
    ring_add,
    ring_neg,
    ring_sub,
    ternary_coeffs,
)

_SCALE_RTOL = 1e-9


def _q(moduli) -> np.ndarray:
    return np.asarray(moduli, dtype=np.int64).reshape(-1, 1)


def _batched(fn, polys: list[RingElement]) -> list[RingElement]:
    """Apply an NTT direction to several polys sharing one basis in a single call."""
    if len(polys) == 1:
        return [fn(polys[0])]
    moduli = polys[0].moduli
    k = len(moduli)
    out = fn(RingElement(np.concatenate([p.data for p in polys]), moduli * len(polys),
                         polys[0].ntt))
    return [RingElement(out.data[i * k:(i + 1) * k], moduli, out.ntt) for i in range(len(polys))]


def _forward(polys):
    return _batched(ntt_forward, polys)


def _inverse(polys):
    return _batched(ntt_inverse, polys)


def _check_scheme(ctx: Context, *objs) -> None:
    for o in objs:
        if o.scheme is not ctx.scheme:
            raise SchemeMismatchError(f"{o.scheme.name} object used with a {ctx.scheme.name} context")


# --------------------------------------------------------------------------
# plaintext embedding


def _bfv_scaled(m: np.ndarray, moduli, t: int) -> RingElement:
    """``round(Q * m / t)`` in RNS form for ``m`` in ``[0, t)``."""
    Q = math.prod(moduli)
    if t < 1 << 31:
        delta = np.array([(Q // t) % q for q in moduli], dtype=np.int64).reshape(-1, 1)
        carry = (m * (Q % t) + t // 2) // t
        rows = mulmod(np.broadcast_to(m, (len(moduli), m.size)), delta, _q(moduli))
        return RingElement(np.mod(rows + carry, _q(moduli)), moduli)
    vals = (m.astype(object) * Q + t // 2) // t
    return RingElement.from_ints(vals, moduli)


def _centered_plain(pt: Plaintext, t: int) -> np.ndarray:
    m = pt.poly.data[0]
    return np.where(m > t // 2, m - t, m)


def _embed(pt: Plaintext, ctx: Context, moduli) -> RingElement:
    scheme = ctx.scheme
    if scheme is Scheme.BFV:
        return _bfv_scaled(pt.poly.data[0], moduli, ctx.params.plain_modulus)
    if scheme is Scheme.BGV:
        return RingElement.from_small(pt.poly.data[0], moduli)
    if pt.poly.moduli != tuple(moduli):
        raise AlignmentError("CKKS plaintext level differs from the ciphertext level")
    return pt.poly


# --------------------------------------------------------------------------
# encryption / decryption


def encrypt(pk: PublicKey, pt: Plaintext, ctx: Context, rng) -> Ciphertext:
    _check_scheme(ctx, pt)
    sampler = sampler_for(ctx, rng)
    moduli = ctx.moduli()
    n = ctx.n
    escale = _error_scale(ctx)
    u_hat = ntt_forward(RingElement.from_small(ternary_coeffs(n, sampler.rng), moduli))
    bu, au = _inverse([pointwise_mul(pk.b, u_hat), pointwise_mul(pk.a, u_hat)])
    e1 = RingElement.from_small(error_coeffs(n, sampler) * escale, moduli)
    e2 = RingElement.from_small(error_coeffs(n, sampler) * escale, moduli)
    c0 = ring_add(ring_add(bu, e1), _embed(pt, ctx, moduli))
    c1 = ring_add(au, e2)
    scale = pt.scale if ctx.scheme is Scheme.CKKS else 0.0
    return Ciphertext(ctx.scheme, [c0, c1], ctx.top_level, scale)


def encrypt_symmetric(sk: SecretKey, pt: Plaintext, ctx: Context, rng) -> Ciphertext:
    """Secret-key encryption ``(-(a*s) + e + m, a)``."""
    _check_scheme(ctx, pt)
    sampler = sampler_for(ctx, rng)
    moduli = ctx.moduli()
    a = RingElement(np.stack([sampler.rng.integers(0, q, ctx.n, dtype=np.int64) for q in moduli]),
                    moduli)
    (as_,) = _inverse([pointwise_mul(ntt_forward(a), sk.poly)])
    e = RingElement.from_small(error_coeffs(ctx.n, sampler) * _error_scale(ctx), moduli)
    c0 = ring_add(ring_sub(e, as_), _embed(pt, ctx, moduli))
    scale = pt.scale if ctx.scheme is Scheme.CKKS else 0.0
    return Ciphertext(ctx.scheme, [c0, a], ctx.top_level, scale)


def _phase(sk: SecretKey, ct: Ciphertext, extended: bool) -> RingElement:
    """``c0 + c1*s (+ c2*s^2)`` in the coefficient domain."""
    if ct.size == 3 and not extended:
        raise ParameterError("size-3 ciphertext: relinearize first (or pass extended=True)")
    if ct.size not in (2, 3):
        raise ParameterError(f"cannot decrypt a size-{ct.size} ciphertext")
    k = len(ct.moduli)
    s = sk.at(k)
    hats = _forward(ct.polys[1:])
    acc = pointwise_mul(hats[0], s)
    if ct.size == 3:
        acc = ring_add(acc, pointwise_mul(hats[1], pointwise_mul(s, s)))
    return ring_add(ct.polys[0], ntt_inverse(acc))


def _noise_bits(Q: int, norm: int) -> int:
    """``floor(log2(Q / (2*norm)))`` clamped at zero."""
    denom = 2 * max(norm, 1)
    if denom > Q:
        return 0
    bits = Q.bit_length() - denom.bit_length()
    while (denom << bits) > Q:
        bits -= 1
    while (denom << (bits + 1)) <= Q:
        bits += 1
    return max(bits, 0)


def _budget_from_phase(v: RingElement, ctx: Context) -> int:
    basis = crt_basis(v.moduli)
    x = v.to_ints()
    if ctx.scheme is Scheme.BFV:
        t = ctx.params.plain_modulus
        x = basis.center(x * t % basis.Q)
    else:
        x = basis.center(x)
    norm = max(abs(int(c)) for c in x)
    return _noise_bits(basis.Q, norm)


def noise_budget(sk: SecretKey, ct: Ciphertext, ctx: Context, *, extended: bool = False) -> int:
    """Remaining noise budget in bits (BFV/BGV); zero means decryption is unreliable."""
    _check_scheme(ctx, ct)
    if ctx.scheme is Scheme.CKKS:
        raise UnsupportedParametersError("CKKS has no noise budget; compare decoded precision")
    return _budget_from_phase(_phase(sk, ct, extended or ct.size == 3), ctx)


def decrypt(sk: SecretKey, ct: Ciphertext, ctx: Context, *, extended: bool = False,
            check: bool = False) -> Plaintext:
    """Decrypt ``ct``.

    ``extended`` allows size-3 input (test path that bypasses relinearization);
    ``check`` raises :class:`DecryptionFailureError` when the noise budget is spent.
    """
    _check_scheme(ctx, ct)
    v = _phase(sk, ct, extended)
    scheme = ctx.scheme
    if check and scheme is not Scheme.CKKS and _budget_from_phase(v, ctx) == 0:
        raise DecryptionFailureError("noise budget exhausted")
    if scheme is Scheme.CKKS:
        return Plaintext(scheme, v, ct.scale, ctx.slots)
    t = ctx.params.plain_modulus
    basis = crt_basis(v.moduli)
    x = v.to_ints()
    if scheme is Scheme.BFV:
        m = (x * t + basis.Q // 2) // basis.Q % t
    else:
        m = basis.center(x) % t
    return Plaintext(scheme, RingElement(m.astype(np.int64)[None, :], (t,)), 0.0, ctx.slots)


# --------------------------------------------------------------------------
# additive operations


def _check_aligned(a: Ciphertext, b) -> None:
    if a.scheme is not b.scheme:
        raise SchemeMismatchError("operands belong to different schemes")
    if a.level != b.level:
        hint = "rescale" if a.scheme is Scheme.CKKS else "mod_switch"
        raise AlignmentError(f"levels differ ({a.level} vs {b.level}); {hint} the higher one first")
    if a.scheme is Scheme.CKKS and not math.isclose(a.scale, b.scale, rel_tol=_SCALE_RTOL):
        raise AlignmentError(
            f"scales differ (2^{math.log2(a.scale):.4f} vs 2^{math.log2(b.scale):.4f}); "
            "rescale or encode at the matching scale first")


def _combine(a: Ciphertext, b: Ciphertext, op) -> Ciphertext:
    _check_aligned(a, b)
    size = max(a.size, b.size)
    zero = RingElement.zero(a.moduli, a.n)
    pa = a.polys + [zero] * (size - a.size)
    pb = b.polys + [zero] * (size - b.size)
    return Ciphertext(a.scheme, [op(x, y) for x, y in zip(pa, pb)], a.level, a.scale)


def add(ct_a: Ciphertext, ct_b: Ciphertext) -> Ciphertext:
    return _combine(ct_a, ct_b, ring_add)


def sub(ct_a: Ciphertext, ct_b: Ciphertext) -> Ciphertext:
    return _combine(ct_a, ct_b, ring_sub)


def negate(ct: Ciphertext) -> Ciphertext:
    return Ciphertext(ct.scheme, [ring_neg(p) for p in ct.polys], ct.level, ct.scale)


def _check_plain(ct: Ciphertext, pt: Plaintext, ctx: Context, same_scale: bool) -> None:
    _check_scheme(ctx, ct, pt)
    if ctx.scheme is Scheme.CKKS:
        if pt.level != ct.level:
            raise AlignmentError(f"plaintext level {pt.level} differs from ciphertext level {ct.level}")
        if same_scale and not math.isclose(pt.scale, ct.scale, rel_tol=_SCALE_RTOL):
            raise AlignmentError("plaintext scale differs from ciphertext scale")


def add_plain(ct: Ciphertext, pt: Plaintext, ctx: Context) -> Ciphertext:
    _check_plain(ct, pt, ctx, same_scale=True)
    c0 = ring_add(ct.polys[0], _embed(pt, ctx, ct.moduli))
    return Ciphertext(ct.scheme, [c0] + ct.polys[1:], ct.level, ct.scale)


def sub_plain(ct: Ciphertext, pt: Plaintext, ctx: Context) -> Ciphertext:
    _check_plain(ct, pt, ctx, same_scale=True)
    c0 = ring_sub(ct.polys[0], _embed(pt, ctx, ct.moduli))
    return Ciphertext(ct.scheme, [c0] + ct.polys[1:], ct.level, ct.scale)


def mul_plain(ct: Ciphertext, pt: Plaintext, ctx: Context) -> Ciphertext:
    _check_plain(ct, pt, ctx, same_scale=False)
    if ctx.scheme is Scheme.CKKS:
        factor = pt.poly
        scale = ct.scale * pt.scale
    else:
        factor = RingElement.from_small(_centered_plain(pt, ctx.params.plain_modulus), ct.moduli)
        scale = ct.scale
    f_hat = ntt_forward(factor)
    prods = [pointwise_mul(p, f_hat) for p in _forward(ct.polys)]
    return Ciphertext(ct.scheme, _inverse(prods), ct.level, scale)


# --------------------------------------------------------------------------
# multiplication and relinearization


def _tensor(hats: list[RingElement]) -> list[RingElement]:
    a0, a1, b0, b1 = hats
    d0 = pointwise_mul(a0, b0)
    d1 = ring_add(pointwise_mul(a0, b1), pointwise_mul(a1, b0))
    d2 = pointwise_mul(a1, b1)
    return _inverse([d0, d1, d2])


def _bfv_tensor(a: Ciphertext, b: Ciphertext, ctx: Context) -> list[RingElement]:
    moduli = a.moduli
    ext = moduli + ctx.aux_primes
    t = ctx.params.plain_modulus
    lifted = []
    for p in a.polys + b.polys:
        x = p.centered()
        aux = [(x % r).astype(np.int64) for r in ctx.aux_primes]
        lifted.append(RingElement(np.concatenate([p.data, np.stack(aux)]), ext))
    basis = crt_basis(ext)
    Q = math.prod(moduli)
    out = []
    for d in _tensor(_forward(lifted)):
        y = basis.center(basis.compose(d.data))
        out.append(RingElement.from_ints((y * t + Q // 2) // Q, moduli))
    return out


def multiply(ct_a: Ciphertext, ct_b: Ciphertext, ctx: Context) -> Ciphertext:
    """Size-2 x size-2 -> size-3 product (relinearize afterwards)."""
    _check_scheme(ctx, ct_a, ct_b)
    if ct_a.size != 2 or ct_b.size != 2:
        raise ParameterError("multiply expects two size-2 ciphertexts; relinearize first")
    if ct_a.level != ct_b.level:
        raise AlignmentError("levels differ; mod_switch/rescale the higher one first")
    scheme = ctx.scheme
    if scheme is Scheme.CKKS and ct_a.level == 0:
        raise LevelExhaustedError("no level left to rescale after multiplying")
    if scheme is Scheme.BFV:
        polys = _bfv_tensor(ct_a, ct_b, ctx)
    else:
        polys = _tensor(_forward(ct_a.polys + ct_b.polys))
    scale = ct_a.scale * ct_b.scale if scheme is Scheme.CKKS else 0.0
    return Ciphertext(scheme, polys, ct_a.level, scale)


def square(ct: Ciphertext, ctx: Context) -> Ciphertext:
    return multiply(ct, ct, ctx)


def relinearize(rk: RelinKey, ct: Ciphertext, ctx: Context) -> Ciphertext:
    """Switch a size-3 ciphertext back to size 2 with base-``2**w`` key switching."""
    _check_scheme(ctx, ct)
    if ct.size != 3:
        raise ParameterError(f"relinearize expects a size-3 ciphertext, got size {ct.size}")
    moduli = ct.moduli
    k = len(moduli)
    n = ct.n
    basis = crt_basis(moduli)
    count = -(-basis.Q.bit_length() // rk.base_bits)
    if count > rk.digits:
        raise ParameterMismatchError("relinearization key has too few digits for this modulus")
    digits = integer_digits(ct.polys[2].to_ints(), basis.Q.bit_length(), rk.base_bits, count)
    q = _q(moduli)
    rows = np.mod(digits[:, None, :], q[None]).reshape(count * k, n)
    d_hat = ntt_forward(RingElement(rows, moduli * count)).data.reshape(count, k, n)
    kb = np.stack([rk.pairs[j][0].data[:k] for j in range(count)])
    ka = np.stack([rk.pairs[j][1].data[:k] for j in range(count)])
    acc_b = np.zeros((k, n), dtype=np.int64)
    acc_a = np.zeros((k, n), dtype=np.int64)
    for lo in range(0, count, 128):
        hi = lo + 128
        acc_b = np.mod(acc_b + mulmod(d_hat[lo:hi], kb[lo:hi], q).sum(axis=0), q)
        acc_a = np.mod(acc_a + mulmod(d_hat[lo:hi], ka[lo:hi], q).sum(axis=0), q)
    sb, sa = _inverse([RingElement(acc_b, moduli, True), RingElement(acc_a, moduli, True)])
    c0 = ring_add(ct.polys[0], sb)
    c1 = ring_add(ct.polys[1], sa)
    return Ciphertext(ct.scheme, [c0, c1], ct.level, ct.scale)


# --------------------------------------------------------------------------
# level management


def _divide_round_last(polys: list[RingElement]) -> list[RingElement]:
    """Exact ``round(c / q_last)`` onto the remaining primes."""
    moduli = polys[0].moduli
    q_last = moduli[-1]
    rest = moduli[:-1]
    qr = _q(rest)
    inv = np.array([pow(q_last, -1, q) for q in rest], dtype=np.int64).reshape(-1, 1)
    out = []
    for p in polys:
        last = p.data[-1]
        r = np.where(last > q_last // 2, last - q_last, last)
        diff = np.mod(p.data[:-1] - np.mod(r[None, :], qr), qr)
        out.append(RingElement(mulmod(diff, inv, qr), rest))
    return out


def _bgv_switch(polys: list[RingElement], t: int) -> list[RingElement]:
    """Drop the last prime while keeping the payload mod ``t`` (needs ``q_last ≡ 1 mod t``)."""
    moduli = polys[0].moduli
    q_last = moduli[-1]
    rest = moduli[:-1]
    qr = _q(rest)
    t_inv = pow(t, -1, q_last)
    inv = np.array([pow(q_last, -1, q) for q in rest], dtype=np.int64).reshape(-1, 1)
    t_rows = np.array([t % q for q in rest], dtype=np.int64).reshape(-1, 1)
    out = []
    for p in polys:
        w = mulmod(p.data[-1], np.int64(t_inv), np.int64(q_last))
        w = np.where(w > q_last // 2, w - q_last, w)
        delta = mulmod(np.mod(w[None, :], qr), t_rows, qr)
        diff = np.mod(p.data[:-1] - delta, qr)
        out.append(RingElement(mulmod(diff, inv, qr), rest))
    return out


def rescale(ct: Ciphertext, ctx: Context) -> Ciphertext:
    """CKKS: divide by the last prime, dropping one level and dividing the scale."""
    _check_scheme(ctx, ct)
    if ctx.scheme is not Scheme.CKKS:
        raise UnsupportedParametersError("rescale is a CKKS operation; use mod_switch")
    if ct.level == 0:
        raise LevelExhaustedError("cannot rescale at level 0")
    q_last = ct.moduli[-1]
    if ct.scale < q_last:
        raise AlignmentError("scale is smaller than the prime being dropped")
    return Ciphertext(ct.scheme, _divide_round_last(ct.polys), ct.level - 1, ct.scale / q_last)


def mod_switch(ct: Ciphertext, ctx: Context) -> Ciphertext:
    """Drop one level without changing the payload.

    BGV uses the plaintext-preserving switch, BFV divides and rounds, and CKKS
    simply discards the last residue (scale unchanged) for level alignment.
    """
    _check_scheme(ctx, ct)
    if ct.level == 0:
        raise LevelExhaustedError("cannot mod_switch at level 0")
    scheme = ctx.scheme
    if scheme is Scheme.BGV:
        polys = _bgv_switch(ct.polys, ctx.params.plain_modulus)
    elif scheme is Scheme.BFV:
        polys = _divide_round_last(ct.polys)
    else:
        polys = [p.keep(len(p.moduli) - 1) for p in ct.polys]
    return Ciphertext(scheme, polys, ct.level - 1, ct.scale)


def mod_switch_to(ct: Ciphertext, level: int, ctx: Context) -> Ciphertext:
    while ct.level > level:
        ct = mod_switch(ct, ctx)
    return ct

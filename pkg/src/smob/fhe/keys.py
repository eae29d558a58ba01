"""Key generation: secret, public and relinearization (evaluation) keys.

All key polynomials are stored in the NTT domain over the full chain.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from smob.fhe.context import Context
from smob.fhe.params import Scheme
from smob.ring import (
    RingElement,
    Sampler,
    error_coeffs,
    ntt_forward,
    pointwise_mul,
    ring_add,
    ring_neg,
    ring_scalar_mul,
    ring_sub,
    sample_uniform,
    ternary_coeffs,
)


@dataclass(eq=False)
class SecretKey:
    coeffs: np.ndarray = field(repr=False)
    poly: RingElement = field(repr=False)

    def at(self, count: int) -> RingElement:
        return self.poly.keep(count)

    def squared(self) -> RingElement:
        return pointwise_mul(self.poly, self.poly)


@dataclass(eq=False)
class PublicKey:
    b: RingElement = field(repr=False)
    a: RingElement = field(repr=False)


@dataclass(eq=False)
class RelinKey:
    """Key-switching pairs ``(b_j, a_j)`` with ``b_j + a_j*s = 2**(j*w) * s**2 - e_j``."""

    pairs: list[tuple[RingElement, RingElement]] = field(repr=False)
    base_bits: int

    @property
    def digits(self) -> int:
        return len(self.pairs)


def sampler_for(ctx: Context, rng) -> Sampler:
    if isinstance(rng, Sampler):
        return rng
    return Sampler(rng, ctx.params.error_stddev)


def _error_scale(ctx: Context) -> int:
    # BGV keeps every error term a multiple of t so decryption can reduce mod t
    return ctx.params.plain_modulus if ctx.scheme is Scheme.BGV else 1


def secret_keygen(ctx: Context, rng) -> SecretKey:
    sampler = sampler_for(ctx, rng)
    coeffs = ternary_coeffs(ctx.n, sampler.rng)
    return SecretKey(coeffs, ntt_forward(RingElement.from_small(coeffs, ctx.moduli())))


def public_keygen(sk: SecretKey, ctx: Context, rng) -> PublicKey:
    sampler = sampler_for(ctx, rng)
    moduli = ctx.moduli()
    a = sample_uniform(moduli, ctx.n, sampler.rng)
    a.ntt = True  # uniform residues are uniform in either domain
    e = error_coeffs(ctx.n, sampler) * _error_scale(ctx)
    e_hat = ntt_forward(RingElement.from_small(e, moduli))
    b = ring_neg(ring_add(pointwise_mul(a, sk.poly), e_hat))
    return PublicKey(b, a)


def relin_keygen(sk: SecretKey, ctx: Context, rng) -> RelinKey:
    sampler = sampler_for(ctx, rng)
    moduli = ctx.moduli()
    n = ctx.n
    w = ctx.params.relin_base_bits
    count = ctx.params.relin_digit_count()
    scale = _error_scale(ctx)
    errors = np.stack([error_coeffs(n, sampler) * scale for _ in range(count)])
    stacked = np.concatenate([np.mod(errors[j][None, :], np.asarray(moduli)[:, None])
                              for j in range(count)])
    e_hat = ntt_forward(RingElement(stacked, moduli * count))
    s2 = sk.squared()
    k = len(moduli)
    pairs = []
    for j in range(count):
        a = sample_uniform(moduli, n, sampler.rng)
        a.ntt = True
        e_j = RingElement(e_hat.data[j * k:(j + 1) * k], moduli, True)
        target = ring_scalar_mul(s2, 1 << (j * w))
        b = ring_sub(target, ring_add(pointwise_mul(a, sk.poly), e_j))
        pairs.append((b, a))
    return RelinKey(pairs, w)


def keygen(ctx: Context, rng, *, public: bool = True):
    """Return ``(sk, pk, rk)``; ``public=False`` gives the symmetric variant with ``pk=None``."""
    sampler = sampler_for(ctx, rng)
    sk = secret_keygen(ctx, sampler)
    pk = public_keygen(sk, ctx, sampler) if public else None
    rk = relin_keygen(sk, ctx, sampler)
    return sk, pk, rk

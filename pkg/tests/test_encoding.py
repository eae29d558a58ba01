import numpy as np
import pytest

from oracles import canonical_embedding
from smob.errors import EncodingOverflowError, EncodingUnsupportedError, SchemeMismatchError
from smob.fhe import (
    Context,
    EncryptionParameters,
    Scheme,
    ckks_decode,
    ckks_encode,
    decode_integers,
    encode_integers,
    make_params,
)
from smob.fhe.ciphertext import Plaintext
from smob.ring import ModulusChain, RingElement, find_primes, ring_add, ring_mul


@pytest.fixture(scope="module")
def small_ckks():
    n = 16
    base = find_primes(50, n, 1)
    chain = ModulusChain(tuple(base + find_primes(30, n, 1, near=1 << 30, exclude=tuple(base))))
    return Context(EncryptionParameters(Scheme.CKKS, n, chain, scale_bits=30))


def test_ckks_encoding_matches_canonical_embedding(small_ckks):
    rng = np.random.default_rng(3)
    z = rng.uniform(-10, 10, 8) + 1j * rng.uniform(-10, 10, 8)
    pt = ckks_encode(z, small_ckks.params.scale, small_ckks)
    coeffs = pt.poly.centered()
    evals = canonical_embedding(coeffs, 16) / pt.scale
    assert np.max(np.abs(evals - z)) < 1e-6
    assert np.max(np.abs(ckks_decode(pt, small_ckks) - evals)) < 1e-9


def test_ckks_product_of_encodings_is_slotwise(small_ckks):
    a = np.array([1.5, -2.0, 3.25, 0.5])
    b = np.array([2.0, 4.0, -1.0, 8.0])
    s = small_ckks.params.scale
    pa = ckks_encode(a, s, small_ckks)
    pb = ckks_encode(b, s, small_ckks)
    prod = ring_mul(pa.poly, pb.poly)
    out = ckks_decode(Plaintext(Scheme.CKKS, prod, s * s, 4), small_ckks)
    assert np.allclose(out[:4].real, a * b, atol=1e-6)


def test_integer_batching_is_slotwise(desk_contexts):
    ctx = desk_contexts["bfv"]
    t = ctx.params.plain_modulus
    rng = np.random.default_rng(9)
    a = rng.integers(0, t, 100)
    b = rng.integers(0, t, 100)
    pa, pb = encode_integers(a, ctx), encode_integers(b, ctx)
    s = decode_integers(Plaintext(Scheme.BFV, ring_add(pa.poly, pb.poly)), ctx)
    p = decode_integers(Plaintext(Scheme.BFV, ring_mul(pa.poly, pb.poly)), ctx)
    assert s[:100].tolist() == ((a + b) % t).tolist()
    assert p[:100].tolist() == (a * b % t).tolist()
    assert not s[100:].any()


def test_negative_integers_wrap_mod_t(desk_contexts):
    ctx = desk_contexts["bgv"]
    t = ctx.params.plain_modulus
    assert decode_integers(encode_integers([-1, -5], ctx), ctx)[:2].tolist() == [t - 1, t - 5]


def test_unbatched_single_coefficient():
    ctx = Context(make_params("bfv", "desk", plain_modulus=1024))
    pt = encode_integers([1000], ctx)
    assert decode_integers(pt, ctx)[0] == 1000
    with pytest.raises(EncodingUnsupportedError):
        encode_integers([1, 2], ctx)


def test_encoding_capacity_and_scheme_errors(desk_contexts):
    bfv, ckks = desk_contexts["bfv"], desk_contexts["ckks"]
    with pytest.raises(EncodingUnsupportedError):
        encode_integers(range(bfv.n + 1), bfv)
    with pytest.raises(EncodingUnsupportedError):
        ckks_encode(np.zeros(ckks.n // 2 + 1), ckks.params.scale, ckks)
    with pytest.raises(SchemeMismatchError):
        encode_integers([1], ckks)
    with pytest.raises(SchemeMismatchError):
        ckks_encode([1.0], 2.0**30, bfv)
    with pytest.raises(EncodingOverflowError):
        ckks_encode([1.0], float(ckks.modulus()) * 2, ckks)
    with pytest.raises(EncodingOverflowError):
        ckks_encode([1e30], ckks.params.scale, ckks, level=0)


def test_zero_encodes_to_zero_polynomial(small_ckks):
    pt = ckks_encode([0.0, 0.0], small_ckks.params.scale, small_ckks)
    assert pt.poly == RingElement.zero(small_ckks.moduli(), 16)

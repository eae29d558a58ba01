"""Exact arithmetic in R_q = Z_q[x]/(x^n + 1).

Ring elements are stored in RNS form: one row of residues per prime of the
active modulus chain, as an ``int64`` array of shape ``(k, n)``. Products of
residues are reduced with a floating-point quotient estimate followed by an
exact wrap-around correction in 64-bit integers; that path is exact for
primes below ``2**55``. Larger primes (up to the hard limit of ``2**62``) fall
back to Python integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import gmpy2
import numpy as np

from smob.errors import (
    DomainError,
    LevelExhaustedError,
    ParameterError,
    ParameterMismatchError,
    UnsupportedParametersError,
)

MAX_MODULUS_BITS = 62
FAST_MODULUS_LIMIT = 1 << 55


def is_prime(q: int) -> bool:
    return bool(gmpy2.is_prime(q, 50))


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class Modulus:
    """A prime modulus, optionally tied to the ring degree it serves."""

    q: int
    n: int | None = None

    def __post_init__(self):
        if not 2 <= self.q < 1 << MAX_MODULUS_BITS:
            raise ParameterError(f"modulus {self.q} outside [2, 2^{MAX_MODULUS_BITS})")
        if not is_prime(self.q):
            raise ParameterError(f"modulus {self.q} is not prime")

    @property
    def n_ok(self) -> bool:
        return self.n is not None and (self.q - 1) % (2 * self.n) == 0

    @property
    def bits(self) -> int:
        return self.q.bit_length()


@dataclass(frozen=True)
class ModulusChain:
    """Ordered primes ``q_0 .. q_L``; ``level`` indexes the last active prime."""

    primes: tuple[int, ...]
    level: int = -1

    def __post_init__(self):
        primes = tuple(int(p) for p in self.primes)
        object.__setattr__(self, "primes", primes)
        if not primes:
            raise ParameterError("empty modulus chain")
        if len(set(primes)) != len(primes):
            raise ParameterError("modulus chain primes must be distinct")
        for p in primes:
            Modulus(p)
        if self.level == -1:
            object.__setattr__(self, "level", len(primes) - 1)
        if not 0 <= self.level < len(primes):
            raise ParameterError(f"level {self.level} outside chain of {len(primes)} primes")

    @property
    def max_level(self) -> int:
        return len(self.primes) - 1

    @property
    def moduli(self) -> tuple[int, ...]:
        return self.primes[: self.level + 1]

    def moduli_at(self, level: int) -> tuple[int, ...]:
        if not 0 <= level <= self.max_level:
            raise ParameterError(f"level {level} outside chain")
        return self.primes[: level + 1]

    @property
    def modulus(self) -> int:
        return math.prod(self.moduli)

    @property
    def total_bits(self) -> int:
        return self.modulus.bit_length()

    def drop(self) -> ModulusChain:
        if self.level == 0:
            raise LevelExhaustedError("modulus chain is already at level 0")
        return ModulusChain(self.primes, self.level - 1)

    def ntt_friendly(self, n: int) -> bool:
        return all((p - 1) % (2 * n) == 0 for p in self.primes)


def find_primes(bits: int, n: int, count: int, *, congruent_mod: int = 1,
                exclude: tuple[int, ...] = (), near: int | None = None) -> list[int]:
    """Return ``count`` primes ``q ≡ 1 (mod lcm(2n, congruent_mod))``.

    Without ``near`` the search walks down from ``2**bits``; with ``near`` it
    alternates around that target, which is how scale-matched CKKS primes are
    picked.
    """
    step = math.lcm(2 * n, congruent_mod)
    found: list[int] = []
    if near is None:
        q = ((1 << bits) - 1) // step * step + 1
        while len(found) < count:
            if q < step:
                raise UnsupportedParametersError(f"not enough {bits}-bit primes for n={n}")
            if q.bit_length() == bits and q not in exclude and is_prime(q):
                found.append(q)
            q -= step
        return found
    base = near // step * step + 1
    offset = 0
    while len(found) < count:
        for q in (base + offset * step, base - (offset + 1) * step):
            if q > 1 and q not in exclude and q not in found and is_prime(q):
                found.append(q)
                if len(found) == count:
                    break
        offset += 1
    return found


# --------------------------------------------------------------------------
# modular kernels


def _as_q(moduli) -> np.ndarray:
    return np.asarray(moduli, dtype=np.int64).reshape(-1, 1)


def mulmod(a: np.ndarray, b, q) -> np.ndarray:
    """Elementwise ``a * b mod q`` for residues already reduced mod ``q``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64)
    if int(q.max()) >= FAST_MODULUS_LIMIT:
        prod = a.astype(object) * b.astype(object) % q.astype(object)
        return prod.astype(np.int64)
    quot = np.floor(a.astype(np.float64) * b.astype(np.float64) / q.astype(np.float64))
    wrapped = (a.astype(np.uint64) * b.astype(np.uint64)
               - quot.astype(np.int64).astype(np.uint64) * q.astype(np.uint64))
    return np.mod(wrapped.view(np.int64), q)


def _addmod(a, b, q):
    s = a + b
    return np.where(s >= q, s - q, s)


def _submod(a, b, q):
    d = a - b
    return np.where(d < 0, d + q, d)


# --------------------------------------------------------------------------
# NTT tables


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def primitive_root_2n(n: int, q: int) -> int:
    """Smallest-witness primitive 2n-th root of unity mod ``q``."""
    if (q - 1) % (2 * n):
        raise UnsupportedParametersError(f"q={q} is not 1 mod 2n for n={n}")
    exp = (q - 1) // (2 * n)
    for x in range(2, q):
        psi = pow(x, exp, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise UnsupportedParametersError(f"no primitive 2n-th root mod {q}")


def _powers(base: int, n: int, q: int) -> np.ndarray:
    out = [1] * n
    for i in range(1, n):
        out[i] = out[i - 1] * base % q
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True)
class NttTable:
    n: int
    q: int
    psi: int
    psi_rev: np.ndarray = field(repr=False)
    psi_inv_rev: np.ndarray = field(repr=False)
    n_inv: int

    @classmethod
    def build(cls, n: int, q: int) -> NttTable:
        if not is_power_of_two(n):
            raise ParameterError(f"ring degree {n} is not a power of two")
        psi = primitive_root_2n(n, q)
        rev = _bit_reverse(n)
        psi_rev = _powers(psi, n, q)[rev]
        psi_inv_rev = _powers(pow(psi, -1, q), n, q)[rev]
        return cls(n, q, psi, psi_rev, psi_inv_rev, pow(n, -1, q))


_TABLES: dict[tuple[int, int], NttTable] = {}


def register_table(table: NttTable) -> None:
    _TABLES[(table.n, table.q)] = table
    _stacked_tables.cache_clear()


def ntt_table(n: int, q: int) -> NttTable:
    table = _TABLES.get((n, q))
    if table is None:
        table = NttTable.build(n, q)
        _TABLES[(n, q)] = table
    return table


@lru_cache(maxsize=256)
def _stacked_tables(n: int, moduli: tuple[int, ...]):
    tabs = [ntt_table(n, q) for q in moduli]
    psi_rev = np.stack([t.psi_rev for t in tabs])
    psi_inv_rev = np.stack([t.psi_inv_rev for t in tabs])
    n_inv = np.array([t.n_inv for t in tabs], dtype=np.int64).reshape(-1, 1)
    return psi_rev, psi_inv_rev, n_inv


def _ntt_rows(data: np.ndarray, moduli: tuple[int, ...]) -> np.ndarray:
    k, n = data.shape
    psi_rev, _, _ = _stacked_tables(n, moduli)
    q = np.asarray(moduli, dtype=np.int64).reshape(k, 1, 1)
    a = data
    t, m = n, 1
    while m < n:
        t //= 2
        a = a.reshape(k, m, 2, t)
        u = a[:, :, 0, :]
        v = mulmod(a[:, :, 1, :], psi_rev[:, m:2 * m].reshape(k, m, 1), q)
        a = np.stack((_addmod(u, v, q), _submod(u, v, q)), axis=2)
        m *= 2
    return a.reshape(k, n)


def _intt_rows(data: np.ndarray, moduli: tuple[int, ...]) -> np.ndarray:
    k, n = data.shape
    _, psi_inv_rev, n_inv = _stacked_tables(n, moduli)
    q = np.asarray(moduli, dtype=np.int64).reshape(k, 1, 1)
    a = data
    t, m = 1, n
    while m > 1:
        h = m // 2
        a = a.reshape(k, h, 2, t)
        u = a[:, :, 0, :]
        v = a[:, :, 1, :]
        diff = mulmod(_submod(u, v, q), psi_inv_rev[:, h:m].reshape(k, h, 1), q)
        a = np.stack((_addmod(u, v, q), diff), axis=2)
        t *= 2
        m = h
    return mulmod(a.reshape(k, n), n_inv, _as_q(moduli))


# --------------------------------------------------------------------------
# ring elements


@dataclass(eq=False)
class RingElement:
    """Polynomial over the RNS basis ``moduli``; ``ntt`` flags the NTT domain."""

    data: np.ndarray
    moduli: tuple[int, ...]
    ntt: bool = False

    def __post_init__(self):
        self.moduli = tuple(int(q) for q in self.moduli)
        self.data = np.asarray(self.data, dtype=np.int64)
        if self.data.ndim != 2 or self.data.shape[0] != len(self.moduli):
            raise ParameterMismatchError(
                f"residue array shape {self.data.shape} does not match {len(self.moduli)} moduli")

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RingElement):
            return NotImplemented
        return (self.moduli == other.moduli and self.ntt == other.ntt
                and np.array_equal(self.data, other.data))

    __hash__ = None

    def __repr__(self):
        dom = "ntt" if self.ntt else "coeff"
        return f"RingElement(n={self.n}, moduli={len(self.moduli)}, {dom})"

    @classmethod
    def zero(cls, moduli, n: int, ntt: bool = False) -> RingElement:
        return cls(np.zeros((len(moduli), n), dtype=np.int64), tuple(moduli), ntt)

    @classmethod
    def from_small(cls, coeffs, moduli) -> RingElement:
        """Reduce a vector of small signed integers into every residue row."""
        coeffs = np.asarray(coeffs, dtype=np.int64)
        q = _as_q(moduli)
        return cls(np.mod(coeffs[None, :], q), tuple(moduli))

    @classmethod
    def from_ints(cls, values, moduli) -> RingElement:
        """Reduce arbitrary Python integers (object array) into RNS form."""
        values = np.asarray(values, dtype=object)
        rows = [(values % q).astype(np.int64) for q in moduli]
        return cls(np.stack(rows), tuple(moduli))

    def copy(self) -> RingElement:
        return RingElement(self.data.copy(), self.moduli, self.ntt)

    def keep(self, count: int) -> RingElement:
        """Restrict to the first ``count`` primes (a level drop without rounding)."""
        return RingElement(self.data[:count], self.moduli[:count], self.ntt)

    def to_ints(self) -> np.ndarray:
        """CRT-compose to integers in ``[0, Q)`` (object array)."""
        if self.ntt:
            raise DomainError("CRT composition needs the coefficient domain")
        return crt_basis(self.moduli).compose(self.data)

    def centered(self) -> np.ndarray:
        return crt_basis(self.moduli).center(self.to_ints())


class CrtBasis:
    def __init__(self, moduli: tuple[int, ...]):
        self.moduli = moduli
        self.Q = math.prod(moduli)
        self.coefs = []
        for q in moduli:
            hat = self.Q // q
            self.coefs.append(hat * pow(hat % q, -1, q))

    def compose(self, data: np.ndarray) -> np.ndarray:
        acc = data[0].astype(object) * self.coefs[0]
        for row, c in zip(data[1:], self.coefs[1:]):
            acc = acc + row.astype(object) * c
        return acc % self.Q

    def center(self, values: np.ndarray) -> np.ndarray:
        half = self.Q // 2
        return np.where(values > half, values - self.Q, values)


@lru_cache(maxsize=256)
def crt_basis(moduli: tuple[int, ...]) -> CrtBasis:
    return CrtBasis(moduli)


def _check_pair(a: RingElement, b: RingElement) -> None:
    if a.n != b.n or a.moduli != b.moduli:
        raise ParameterMismatchError("ring elements differ in degree or modulus chain")
    if a.ntt != b.ntt:
        raise ParameterMismatchError("ring elements are in different domains")


def ring_add(a: RingElement, b: RingElement) -> RingElement:
    _check_pair(a, b)
    return RingElement(_addmod(a.data, b.data, _as_q(a.moduli)), a.moduli, a.ntt)


def ring_sub(a: RingElement, b: RingElement) -> RingElement:
    _check_pair(a, b)
    return RingElement(_submod(a.data, b.data, _as_q(a.moduli)), a.moduli, a.ntt)


def ring_neg(a: RingElement) -> RingElement:
    q = _as_q(a.moduli)
    return RingElement(np.where(a.data == 0, 0, q - a.data), a.moduli, a.ntt)


def ring_scalar_mul(a: RingElement, c: int) -> RingElement:
    """Multiply by an integer constant (any size, any sign)."""
    scal = np.array([c % q for q in a.moduli], dtype=np.int64).reshape(-1, 1)
    return RingElement(mulmod(a.data, scal, _as_q(a.moduli)), a.moduli, a.ntt)


def _require_ntt_friendly(n: int, moduli) -> None:
    for q in moduli:
        if (q - 1) % (2 * n):
            raise UnsupportedParametersError(f"modulus {q} is not 1 mod 2n for n={n}")


def ntt_forward(a: RingElement) -> RingElement:
    if a.ntt:
        raise DomainError("ntt_forward expects a coefficient-domain element")
    _require_ntt_friendly(a.n, a.moduli)
    return RingElement(_ntt_rows(a.data, a.moduli), a.moduli, True)


def ntt_inverse(a: RingElement) -> RingElement:
    if not a.ntt:
        raise DomainError("ntt_inverse expects an NTT-domain element")
    _require_ntt_friendly(a.n, a.moduli)
    return RingElement(_intt_rows(a.data, a.moduli), a.moduli, False)


def pointwise_mul(a: RingElement, b: RingElement) -> RingElement:
    _check_pair(a, b)
    if not a.ntt:
        raise DomainError("pointwise_mul expects NTT-domain elements")
    return RingElement(mulmod(a.data, b.data, _as_q(a.moduli)), a.moduli, True)


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    """Negacyclic product; coefficient inputs give a coefficient result."""
    _check_pair(a, b)
    _require_ntt_friendly(a.n, a.moduli)
    if a.ntt:
        return pointwise_mul(a, b)
    return ntt_inverse(pointwise_mul(ntt_forward(a), ntt_forward(b)))


def base_decompose(a: RingElement, base_bits: int) -> list[RingElement]:
    """Split the CRT-composed coefficients of ``a`` into base-``2**w`` digits.

    The digit count is ``ceil(bits(Q) / w)`` where ``Q`` is the product of
    ``a.moduli``; digits satisfy ``a = sum_j d_j * 2**(j*w)`` over the integers.
    """
    if not 1 <= base_bits <= 60:
        raise ParameterError("base_bits must lie in [1, 60]")
    if a.ntt:
        raise DomainError("base_decompose expects a coefficient-domain element")
    basis = crt_basis(a.moduli)
    count = -(-basis.Q.bit_length() // base_bits)
    digits = integer_digits(a.to_ints(), basis.Q.bit_length(), base_bits, count)
    q = _as_q(a.moduli)
    return [RingElement(np.mod(np.broadcast_to(d, (len(a.moduli), a.n)), q), a.moduli)
            for d in digits]


def integer_digits(values: np.ndarray, value_bits: int, base_bits: int, count: int) -> np.ndarray:
    """Base-``2**w`` digits of non-negative integers, shape ``(count, len(values))``."""
    nbytes = (value_bits + 7) // 8
    raw = b"".join(int(v).to_bytes(nbytes, "little") for v in values)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8).reshape(len(values), nbytes),
                         axis=1, bitorder="little")
    width = count * base_bits
    if bits.shape[1] < width:
        bits = np.pad(bits, ((0, 0), (0, width - bits.shape[1])))
    bits = bits[:, :width].reshape(len(values), count, base_bits).astype(np.int64)
    weights = np.left_shift(np.int64(1), np.arange(base_bits, dtype=np.int64))
    return (bits @ weights).T


# --------------------------------------------------------------------------
# sampling


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; equal seeds give identical streams."""
    return np.random.Generator(np.random.Philox(seed))


def child_seeds(seed, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(count)


@dataclass
class Sampler:
    rng: np.random.Generator
    error_stddev: float = 3.2
    error_bound: int | None = None

    def __post_init__(self):
        if self.error_bound is None:
            self.error_bound = math.ceil(6 * self.error_stddev)

    @classmethod
    def from_seed(cls, seed, error_stddev: float = 3.2) -> Sampler:
        return cls(make_rng(seed), error_stddev)


def ternary_coeffs(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(-1, 2, size=n, dtype=np.int64)


def error_coeffs(n: int, sampler: Sampler) -> np.ndarray:
    """Rounded centred Gaussian, rejecting draws beyond six standard deviations."""
    sigma = sampler.error_stddev
    cut = min(6 * sigma, sampler.error_bound + 0.5)
    x = sampler.rng.normal(0.0, sigma, size=n)
    bad = np.abs(x) >= cut
    while bad.any():
        x[bad] = sampler.rng.normal(0.0, sigma, size=int(bad.sum()))
        bad = np.abs(x) >= cut
    return np.rint(x).astype(np.int64)


def sample_uniform(moduli, n: int, rng: np.random.Generator) -> RingElement:
    rows = [rng.integers(0, q, size=n, dtype=np.int64) for q in moduli]
    return RingElement(np.stack(rows), tuple(moduli))


def sample_ternary(moduli, n: int, rng: np.random.Generator) -> RingElement:
    return RingElement.from_small(ternary_coeffs(n, rng), moduli)


def sample_error(moduli, n: int, sampler: Sampler) -> RingElement:
    return RingElement.from_small(error_coeffs(n, sampler), moduli)

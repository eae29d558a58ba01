"""Scheme parameters and the two named presets."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

from smob.errors import ParameterError, UnsupportedParametersError
from smob.ring import ModulusChain, find_primes, is_power_of_two, is_prime

DEFAULT_PLAIN_MODULUS = 65537
PAPER_PLAIN_MODULUS = 1024  # the setting the measured system reports; no batching


class Scheme(enum.IntEnum):
    BFV = 0
    BGV = 1
    CKKS = 2

    @classmethod
    def parse(cls, name) -> Scheme:
        if isinstance(name, Scheme):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ParameterError(f"unknown scheme {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class EncryptionParameters:
    scheme: Scheme
    n: int
    chain: ModulusChain
    plain_modulus: int | None = None
    scale_bits: int | None = None
    error_stddev: float = 3.2
    relin_base_bits: int = 16
    preset: str = "custom"

    def __post_init__(self):
        if not is_power_of_two(self.n) or self.n < 2:
            raise ParameterError(f"ring degree {self.n} must be a power of two")
        if not self.chain.ntt_friendly(self.n):
            raise UnsupportedParametersError("every chain prime must be 1 mod 2n")
        if not 1 <= self.relin_base_bits <= 60:
            raise ParameterError("relin_base_bits must lie in [1, 60]")
        if self.scheme is Scheme.CKKS:
            if self.scale_bits is None:
                raise ParameterError("CKKS needs scale_bits")
        else:
            t = self.plain_modulus
            if t is None or t < 2:
                raise ParameterError("BFV/BGV need a plain modulus >= 2")
            if t >= min(self.chain.primes):
                raise ParameterError("plain modulus must be smaller than every chain prime")
            if self.scheme is Scheme.BGV:
                # modulus switching keeps the payload only when dropped primes are 1 mod t
                for q in self.chain.primes[1:]:
                    if q % t != 1:
                        raise UnsupportedParametersError(
                            f"BGV chain prime {q} is not 1 mod t={t}")

    @property
    def scale(self) -> float:
        return float(2 ** self.scale_bits) if self.scale_bits is not None else 0.0

    @property
    def batching(self) -> bool:
        t = self.plain_modulus
        return (self.scheme is not Scheme.CKKS and t is not None and is_prime(t)
                and (t - 1) % (2 * self.n) == 0)

    @property
    def max_level(self) -> int:
        return self.chain.max_level

    @property
    def total_modulus_bits(self) -> int:
        return math.prod(self.chain.primes).bit_length()

    def relin_digit_count(self) -> int:
        return relin_digit_count(self.total_modulus_bits, self.relin_base_bits)

    def describe(self) -> dict:
        return {
            "scheme": self.scheme.label,
            "preset": self.preset,
            "n": self.n,
            "primes": list(self.chain.primes),
            "prime_bits": [p.bit_length() for p in self.chain.primes],
            "total_modulus_bits": self.total_modulus_bits,
            "plain_modulus": self.plain_modulus,
            "scale_bits": self.scale_bits,
            "error_stddev": self.error_stddev,
            "relin_base_bits": self.relin_base_bits,
            "relin_digits": self.relin_digit_count(),
            "batching": self.batching,
        }


def relin_digit_count(total_bits: int, base_bits: int) -> int:
    return -(-total_bits // base_bits)


# ring degree, number of 54-bit primes (BFV/BGV), CKKS rescale-prime count, CKKS scale bits
PRESETS = {
    "desk": dict(n=4096, int_primes=2, ckks_rescale_primes=1, scale_bits=36),
    "paper": dict(n=16384, int_primes=4, ckks_rescale_primes=2, scale_bits=36),
}


@lru_cache(maxsize=32)
def _integer_chain(n: int, count: int, t: int) -> ModulusChain:
    return ModulusChain(tuple(find_primes(54, n, count, congruent_mod=t)))


@lru_cache(maxsize=32)
def _ckks_chain(n: int, rescale_primes: int, scale_bits: int) -> ModulusChain:
    base = find_primes(54, n, 1)
    rescale = find_primes(scale_bits, n, rescale_primes, near=1 << scale_bits, exclude=tuple(base))
    return ModulusChain(tuple(base + rescale))


def make_params(scheme, preset: str = "desk", *, plain_modulus: int | None = None,
                scale_bits: int | None = None, relin_base_bits: int = 16) -> EncryptionParameters:
    """Build the named preset for ``scheme``.

    ``desk`` is the small, fast configuration used by the test-suite; ``paper``
    uses the ring degree 16384 of the measured system.
    """
    scheme = Scheme.parse(scheme)
    try:
        cfg = PRESETS[preset]
    except KeyError:
        raise ParameterError(f"unknown preset {preset!r} (expected desk or paper)") from None
    n = cfg["n"]
    if scheme is Scheme.CKKS:
        sb = scale_bits or cfg["scale_bits"]
        chain = _ckks_chain(n, cfg["ckks_rescale_primes"], sb)
        return EncryptionParameters(scheme, n, chain, scale_bits=sb,
                                    relin_base_bits=relin_base_bits, preset=preset)
    t = plain_modulus or DEFAULT_PLAIN_MODULUS
    chain = _integer_chain(n, cfg["int_primes"], t)
    return EncryptionParameters(scheme, n, chain, plain_modulus=t,
                                relin_base_bits=relin_base_bits, preset=preset)

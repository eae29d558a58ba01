from __future__ import annotations

import math
from dataclasses import dataclass, field

from smob.fhe.params import Scheme
from smob.ring import RingElement


@dataclass(eq=False)
class Plaintext:
    """Encoded message.

    BFV/BGV plaintexts live in ``R_t`` (a single residue row modulo ``t``);
    CKKS plaintexts live over the chain primes of ``level`` at ``scale``.
    """

    scheme: Scheme
    poly: RingElement
    scale: float = 0.0
    length: int = 0

    @property
    def level(self) -> int:
        return len(self.poly.moduli) - 1


@dataclass(eq=False)
class Ciphertext:
    scheme: Scheme
    polys: list[RingElement] = field(repr=False)
    level: int
    scale: float = 0.0

    @property
    def size(self) -> int:
        return len(self.polys)

    @property
    def is_ntt(self) -> bool:
        return self.polys[0].ntt

    @property
    def n(self) -> int:
        return self.polys[0].n

    @property
    def moduli(self) -> tuple[int, ...]:
        return self.polys[0].moduli

    def __eq__(self, other):
        if not isinstance(other, Ciphertext):
            return NotImplemented
        return (self.scheme == other.scheme and self.level == other.level
                and self.scale == other.scale and self.size == other.size
                and all(a == b for a, b in zip(self.polys, other.polys)))

    __hash__ = None

    def __repr__(self):
        return (f"Ciphertext({self.scheme.name}, size={self.size}, level={self.level}"
                + (f", scale=2^{self.scale_log2:.2f})" if self.scale else ")"))

    @property
    def scale_log2(self) -> float:
        return math.log2(self.scale) if self.scale > 0 else 0.0

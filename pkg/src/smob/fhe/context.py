from __future__ import annotations

import math

import numpy as np

from smob.fhe.params import EncryptionParameters, Scheme
from smob.ring import NttTable, crt_basis, find_primes, register_table


class Context:
    """Precomputed, immutable state for one parameter set.

    Building a context generates the NTT twiddle tables for every chain prime
    (plus the plaintext modulus when batching, and the auxiliary basis used by
    BFV multiplication), the CRT constants for every level, and the CKKS slot
    permutation. This is the "context creation" step the benchmark times.
    """

    def __init__(self, params: EncryptionParameters):
        self.params = params
        n = params.n
        self.tables: dict[int, NttTable] = {}
        for q in params.chain.primes:
            self._add_table(NttTable.build(n, q))
        for level in range(params.max_level + 1):
            crt_basis(params.chain.moduli_at(level))

        self.aux_primes: tuple[int, ...] = ()
        self.plain_table: NttTable | None = None
        if params.scheme is not Scheme.CKKS and params.batching:
            self.plain_table = NttTable.build(n, params.plain_modulus)
            self._add_table(self.plain_table)
        if params.scheme is Scheme.BFV:
            self.aux_primes = _bfv_aux_primes(params)
            for p in self.aux_primes:
                self._add_table(NttTable.build(n, p))
        if params.scheme is Scheme.CKKS:
            self._build_slots()

    def _add_table(self, table: NttTable) -> None:
        self.tables[table.q] = table
        register_table(table)

    def _build_slots(self) -> None:
        n = self.params.n
        two_n = 2 * n
        half = n // 2
        rot = np.empty(half, dtype=np.int64)
        g = 1
        for j in range(half):
            rot[j] = g
            g = g * 5 % two_n
        self.slot_index = (rot - 1) // 2
        self.conj_index = (two_n - rot - 1) // 2
        self.zeta_pows = np.exp(1j * np.pi * np.arange(n) / n)

    @property
    def scheme(self) -> Scheme:
        return self.params.scheme

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def top_level(self) -> int:
        return self.params.max_level

    def moduli(self, level: int | None = None) -> tuple[int, ...]:
        return self.params.chain.moduli_at(self.top_level if level is None else level)

    def modulus(self, level: int | None = None) -> int:
        return math.prod(self.moduli(level))

    @property
    def slots(self) -> int:
        if self.scheme is Scheme.CKKS:
            return self.n // 2
        return self.n

    def __repr__(self):
        p = self.params
        return f"Context({p.scheme.name}, n={p.n}, primes={len(p.chain.primes)}, preset={p.preset})"


def _bfv_aux_primes(params: EncryptionParameters) -> tuple[int, ...]:
    # the tensor of two centred lifts is bounded by n * Q^2 / 2; the extended
    # basis must exceed twice that to recover it exactly
    Q = math.prod(params.chain.primes)
    need = Q.bit_length() + params.n.bit_length() + 2
    chosen: list[int] = []
    bits = 0
    candidates = find_primes(54, params.n, 16, exclude=params.chain.primes)
    for p in candidates:
        if bits >= need:
            break
        chosen.append(p)
        bits += p.bit_length() - 1
    return tuple(chosen)

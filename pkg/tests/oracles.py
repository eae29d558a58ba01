"""Reference implementations used only by the tests.

They deliberately avoid the package's NTT, CRT and FFT code paths.
"""
from __future__ import annotations

import cmath

import numpy as np

LIMB = 27


def negacyclic_schoolbook(a, b, q: int) -> np.ndarray:
    """Product in Z_q[x]/(x^n + 1) by direct convolution.

    Coefficients are split into 27-bit limbs so every partial convolution of
    length n <= 256 stays inside int64; limbs are recombined with Python ints.
    """
    a = np.asarray(a, dtype=np.int64) % q
    b = np.asarray(b, dtype=np.int64) % q
    n = len(a)
    mask = (1 << LIMB) - 1
    a0, a1 = a & mask, a >> LIMB
    b0, b1 = b & mask, b >> LIMB
    lo = np.convolve(a0, b0) % q
    mid = (np.convolve(a0, b1) % q + np.convolve(a1, b0) % q) % q
    hi = np.convolve(a1, b1) % q
    full = [(int(lo[i]) + (int(mid[i]) << LIMB) + (int(hi[i]) << (2 * LIMB))) % q
            for i in range(2 * n - 1)]
    full.append(0)
    return np.array([(full[i] - full[i + n]) % q for i in range(n)], dtype=np.int64)


def negacyclic_bigint(a, b) -> list[int]:
    """Exact product over Z[x]/(x^n + 1) with Python integers (small n only)."""
    n = len(a)
    out = [0] * n
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            k = i + j
            if k < n:
                out[k] += int(x) * int(y)
            else:
                out[k - n] -= int(x) * int(y)
    return out


def canonical_embedding(coeffs, n: int) -> np.ndarray:
    """Evaluate a real polynomial at zeta^(5^j), j < n/2, zeta = exp(i*pi/n)."""
    out = []
    g = 1
    for _ in range(n // 2):
        root = cmath.exp(1j * cmath.pi * g / n)
        acc = 0j
        for c in reversed(list(coeffs)):
            acc = acc * root + float(c)
        out.append(acc)
        g = g * 5 % (2 * n)
    return np.array(out)


def crt_reconstruct(residues, moduli) -> int:
    """Chinese remaindering by successive substitution (Garner-free, no precomputation)."""
    x, m = 0, 1
    for r, q in zip(residues, moduli):
        # solve x + m*k = r (mod q)
        k = ((int(r) - x) * pow(m, -1, q)) % q
        x += m * k
        m *= q
    return x

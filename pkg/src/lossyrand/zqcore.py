"""Exact arithmetic over Z_q: centered representatives, norms, bit encodings.

Vectors and matrices are plain numpy integer arrays holding values in
[0, q).  The modulus travels alongside as an ``int``.  Products stay in
int64 while they provably fit and fall back to Python integers otherwise.
"""

from __future__ import annotations

import math

import numpy as np

_INT64_MAX = np.iinfo(np.int64).max


def is_prime(q: int) -> bool:
    """Deterministic trial division; fine for desk-scale moduli."""
    if q < 2:
        return False
    if q % 2 == 0:
        return q == 2
    r = math.isqrt(q)
    f = 3
    while f <= r:
        if q % f == 0:
            return False
        f += 2
    return True


def bit_length(q: int) -> int:
    """Number of bits per coordinate, ceil(log2 q)."""
    return max(1, (q - 1).bit_length())


def reduce(v, q: int) -> np.ndarray:
    return np.mod(np.asarray(v, dtype=_dtype_for(q)), q)


def centered(v, q: int):
    """Representative of ``v`` mod q in [-(q-1)/2, (q-1)/2].

    Works elementwise on arrays; returns a Python int for scalar input.
    For even q the upper half-point q/2 is kept positive.
    """
    if np.isscalar(v):
        r = int(v) % q
        return r - q if r > q // 2 else r
    arr = np.mod(np.asarray(v, dtype=_dtype_for(q)), q)
    return np.where(arr > q // 2, arr - q, arr)


def norm_sq(v, q: int) -> int:
    """Exact integer squared Euclidean norm of the centered representatives."""
    c = centered(np.asarray(v), q)
    if q < 2**31 and c.size * (q // 2) ** 2 < _INT64_MAX:
        return int(np.sum(c.astype(np.int64) ** 2))
    return sum(int(x) * int(x) for x in np.ravel(c))


def norm(v, q: int) -> float:
    return math.sqrt(norm_sq(v, q))


def within_bound(v, q: int, bound: float | None = None, *, bound_sq: int | None = None) -> bool:
    """``norm(v) <= bound``.  Pass ``bound_sq`` (an exact integer such as
    B^2 m) to decide the inclusive boundary without rounding."""
    if bound_sq is None:
        return norm_sq(v, q) <= bound * bound
    return norm_sq(v, q) <= bound_sq


def norm_sq_rows(M, q: int) -> np.ndarray:
    """Squared centered norm of every row of a 2-D array (vectorized)."""
    c = centered(np.asarray(M), q).astype(np.int64)
    return np.einsum("ij,ij->i", c, c)


def binary_rep(x, q: int) -> np.ndarray:
    """Big-endian ceil(log2 q)-bit encoding, concatenated coordinate-wise."""
    k = bit_length(q)
    arr = np.atleast_1d(np.mod(np.asarray(x, dtype=np.int64), q))
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    bits = (arr[:, None] >> shifts[None, :]) & 1
    return bits.reshape(-1).astype(np.uint8)


def from_binary_rep(bits, q: int) -> np.ndarray:
    k = bit_length(q)
    b = np.asarray(bits, dtype=np.int64).reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1, dtype=np.int64)
    return b @ weights


def gf2_dot(d, z) -> int:
    d = np.asarray(d, dtype=np.uint8)
    z = np.asarray(z, dtype=np.uint8)
    if d.shape != z.shape:
        raise ValueError(f"bit strings differ in length: {d.size} != {z.size}")
    return int(np.bitwise_xor.reduce(d & z)) if d.size else 0


def _dtype_for(q: int):
    return np.int64 if q < 2**62 else object


def _fits_int64(q: int, inner: int) -> bool:
    return q < 2**31 and inner * (q - 1) ** 2 < _INT64_MAX


def matvec(A, x, q: int) -> np.ndarray:
    """A @ x mod q, exact."""
    A = np.asarray(A)
    x = np.asarray(x)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return matmul(A, x[:, None], q)[:, 0]


def matmul(A, B, q: int) -> np.ndarray:
    """A @ B mod q, exact for any q below 2**63."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[-1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    if _fits_int64(q, A.shape[-1]):
        return np.mod(A.astype(np.int64) @ B.astype(np.int64), q)
    out = np.mod(A.astype(object) @ B.astype(object), q)
    return out.astype(np.int64) if q < 2**62 else out


def solve_mod(M, b, q: int) -> np.ndarray | None:
    """Solve M x = b over Z_q for square M; None when M is singular."""
    M = np.array(M, dtype=object) % q
    b = np.array(b, dtype=object) % q
    n = M.shape[0]
    aug = np.concatenate([M, b.reshape(n, -1)], axis=1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r, col] % q), None)
        if pivot is None:
            return None
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] = (aug[col] * pow(int(aug[col, col]), -1, q)) % q
        for r in range(n):
            if r != col and aug[r, col]:
                aug[r] = (aug[r] - aug[r, col] * aug[col]) % q
    sol = aug[:, n:]
    return sol.astype(np.int64).reshape(b.shape)


def inverse_mod(M, q: int) -> np.ndarray | None:
    n = np.asarray(M).shape[0]
    return solve_mod(M, np.eye(n, dtype=np.int64), q)


def rank_mod(M, q: int) -> int:
    """Rank over the field Z_q (q prime)."""
    aug = np.array(M, dtype=object) % q
    rows, cols = aug.shape
    rank = 0
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if aug[r, col] % q), None)
        if pivot is None:
            continue
        aug[[rank, pivot]] = aug[[pivot, rank]]
        aug[rank] = (aug[rank] * pow(int(aug[rank, col]), -1, q)) % q
        for r in range(rows):
            if r != rank and aug[r, col]:
                aug[r] = (aug[r] - aug[r, col] * aug[rank]) % q
        rank += 1
        if rank == rows:
            break
    return rank

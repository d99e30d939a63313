"""Random objects: truncated discrete Gaussians, uniform and lossy matrices,
and gadget-trapdoor matrices with their inversion algorithm.

All samplers take an explicit ``numpy.random.Generator``; nothing here
touches global random state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import zqcore
from .zqcore import bit_length


@dataclass(frozen=True)
class ParameterSet:
    """Protocol parameters.

    ``dim_n_const``/``dim_m_const`` make the asymptotic conditions
    n = Omega(l log q) and m = Omega(n log q) concrete for strict mode;
    ``min_bound_gap`` is the smallest ratio B_P/B_V and B_V/B_L that strict
    mode accepts as "super-polynomial".
    """

    n: int
    m: int
    q: int
    ell: int
    B_L: int
    B_V: int
    B_P: int
    w: int | None = None
    C_T: float = 1.0
    mode: str = "relaxed"
    lam: int | None = None
    dim_n_const: float = 1.0
    dim_m_const: float = 1.0
    min_bound_gap: float = 2.0**20

    def __post_init__(self):
        if self.w is None:
            object.__setattr__(self, "w", self.n * bit_length(self.q))
        if self.mode not in ("strict", "relaxed"):
            raise ValueError(f"unknown validation mode {self.mode!r}")

    @property
    def k(self) -> int:
        """Bits per Z_q coordinate."""
        return bit_length(self.q)

    @property
    def log_q(self) -> float:
        return math.log2(self.q)

    @property
    def gen_bound(self) -> float:
        """B_P * sqrt(m): the preimage acceptance radius."""
        return self.B_P * math.sqrt(self.m)

    @property
    def gen_bound_sq(self) -> int:
        """Exact square of ``gen_bound``."""
        return self.B_P * self.B_P * self.m

    @property
    def noise_bound(self) -> float:
        return self.B_V * math.sqrt(self.m)


def session_rng(seed: int, index: int = 0, role: int = 0) -> np.random.Generator:
    """Independent counter-based stream for (master seed, session, role)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index, role))
    return np.random.Generator(np.random.Philox(ss))


# --- truncated discrete Gaussian -------------------------------------------

@lru_cache(maxsize=64)
def dgauss_table(B: float, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Support (centered integers) and probabilities of D_{Z_q,B}."""
    if B <= 0:
        raise ValueError("Gaussian parameter must be positive")
    half = q // 2
    lo = -min(int(math.floor(B)), (q - 1) // 2)
    hi = min(int(math.floor(B)), half)
    support = np.arange(lo, hi + 1, dtype=np.int64)
    weights = np.exp(-math.pi * support.astype(float) ** 2 / (B * B))
    probs = weights / weights.sum()
    support.setflags(write=False)
    probs.setflags(write=False)
    return support, probs


def dgauss_density(x: int, B: float, q: int) -> float:
    c = zqcore.centered(int(x), q)
    if abs(c) > B:
        return 0.0
    support, probs = dgauss_table(B, q)
    return float(probs[c - support[0]])


def dgauss_log_density(v, B: float, q: int) -> float:
    """Natural log of D_{Z_q^m,B}(v); -inf outside the truncated support."""
    c = zqcore.centered(np.asarray(v), q)
    if c.size and np.max(np.abs(c)) > B:
        return -math.inf
    support, _ = dgauss_table(B, q)
    log_z = math.log(np.exp(-math.pi * support.astype(float) ** 2 / (B * B)).sum())
    return -math.pi * zqcore.norm_sq(v, q) / (B * B) - c.size * log_z


def sample_dgauss_centered(shape, B: float, q: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. centered samples by inverse CDF over the enumerated support."""
    support, probs = dgauss_table(B, q)
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, rng.random(shape), side="right")
    return support[np.minimum(idx, support.size - 1)]


def sample_dgauss_vector(m: int, B: float, q: int, rng: np.random.Generator) -> np.ndarray:
    return np.mod(sample_dgauss_centered(m, B, q, rng), q)


def sample_uniform_matrix(rows: int, cols: int, q: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, q, size=(rows, cols), dtype=np.int64)


def sample_binary(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.int64)


# --- gadget trapdoor ---------------------------------------------------------

# Decoding halves the estimation error per gadget level and only tolerates
# per-coordinate noise below q / (4 * DECODE_FACTOR).
DECODE_FACTOR = 2


def gadget_matrix(n: int, q: int) -> np.ndarray:
    """w x n matrix I_n (x) (1, 2, ..., 2^(k-1))^T."""
    k = bit_length(q)
    g = (1 << np.arange(k, dtype=np.int64)) % q
    return np.kron(np.eye(n, dtype=np.int64), g[:, None])


@dataclass(frozen=True)
class Trapdoor:
    R: np.ndarray = field(repr=False)
    n: int
    q: int

    @property
    def k(self) -> int:
        return bit_length(self.q)

    @property
    def w(self) -> int:
        return self.n * self.k

    def T(self) -> np.ndarray:
        """[-R | I_w]; satisfies T @ A == G mod q."""
        return np.concatenate([np.mod(-self.R, self.q), np.eye(self.w, dtype=np.int64)], axis=1)

    def max_row_norm(self) -> float:
        return math.sqrt(1 + int(np.max(np.sum(self.R * self.R, axis=1))))

    def decode_radius(self) -> float:
        """Any error with Euclidean norm below this decodes correctly."""
        return self.q / (4 * DECODE_FACTOR * self.max_row_norm())

    def realized_C_T(self) -> float:
        """C_T such that ||e|| <= q / (C_T sqrt(n log q)) is guaranteed to invert."""
        return self.q / (self.decode_radius() * math.sqrt(self.n * math.log2(self.q)))


class TrapdoorDecodeError(ValueError):
    """Raised when inversion cannot produce a verified (s, e)."""


def gen_trap(params: ParameterSet, rng: np.random.Generator) -> tuple[np.ndarray, Trapdoor]:
    n, m, q = params.n, params.m, params.q
    w = n * bit_length(q)
    if m < w + n:
        raise ValueError(f"gen_trap needs m >= w + n = {w + n}, got m = {m}")
    A_bar = sample_uniform_matrix(m - w, n, q, rng)
    R = rng.choice(np.array([-1, 0, 0, 1], dtype=np.int64), size=(w, m - w))
    lower = np.mod(gadget_matrix(n, q) + zqcore.matmul(np.mod(R, q), A_bar, q), q)
    return np.concatenate([A_bar, lower], axis=0), Trapdoor(R=R, n=n, q=q)


def _decode_coordinate(block, q: int) -> int:
    """Recover s from v_j = 2^j s + e_j mod q, j = 0..k-1.

    Works from the top level down: the estimate of 2^j s / q mod 1 is halved
    and the half-turn ambiguity is resolved against the observed v_j.  All
    arithmetic is exact over the integers (level j has denominator
    q * 2^(k-1-j)).
    """
    k = len(block)
    est = int(block[k - 1])
    for j in range(k - 2, -1, -1):
        denom = q << (k - 1 - j)
        obs = int(block[j]) << (k - 1 - j)
        best = None
        for cand in (est, est + (denom >> 1)):
            dist = (cand - obs) % denom
            dist = min(dist, denom - dist)
            if best is None or dist < best[0]:
                best = (dist, cand)
        est = best[1]
    return ((2 * est + (1 << (k - 1))) >> k) % q


def invert(A, t: Trapdoor, u, bound: float | None = None, bound_sq: int | None = None):
    """Return (s, e) with u = A s + e and ||e|| <= bound (or ||e||^2 <= bound_sq).

    The decoded pair is re-checked before it is returned; anything that fails
    the check raises ``TrapdoorDecodeError`` rather than passing through.
    """
    q = t.q
    u = np.asarray(u, dtype=np.int64)
    v = zqcore.matvec(t.T(), u, q)
    k = t.k
    s = np.array([_decode_coordinate(v[i * k:(i + 1) * k], q) for i in range(t.n)], dtype=np.int64)
    e = np.mod(u - zqcore.matvec(A, s, q), q)
    if bound_sq is not None:
        bound = math.sqrt(bound_sq)
    if bound is not None and not zqcore.within_bound(e, q, bound, bound_sq=bound_sq):
        raise TrapdoorDecodeError(f"decoded error norm {zqcore.norm(e, q):.1f} exceeds {bound:.1f}")
    return s, e


# --- lossy sampler -----------------------------------------------------------

@dataclass(frozen=True)
class LossyWitness:
    B: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    F: np.ndarray = field(repr=False)


def sample_lossy(params: ParameterSet, rng: np.random.Generator) -> tuple[np.ndarray, LossyWitness]:
    n, m, q, ell = params.n, params.m, params.q, params.ell
    B = sample_uniform_matrix(m, ell, q, rng)
    C = sample_uniform_matrix(ell, n, q, rng)
    F = np.mod(sample_dgauss_centered((m, n), params.B_L, q, rng), q)
    A = np.mod(zqcore.matmul(B, C, q) + F, q)
    return A, LossyWitness(B=B, C=C, F=F)

"""Quantitative checks: preimage sets, the binary-kernel and posterior
experiments, exact and smooth min-entropy, and entropy certificates."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import samplers, zqcore
from .samplers import ParameterSet

DEFAULT_BUDGET = 1 << 22


class EnumerationBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class PreimageSet:
    """All x in Z_q^n with ||y - A x - b u|| <= bound, rows sorted."""

    elements: np.ndarray = field(repr=False)
    b: int
    bound: float

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, x) -> bool:
        return bool(np.any(np.all(self.elements == np.asarray(x), axis=1)))


def _invertible_rows(A, q: int) -> list[int] | None:
    n = A.shape[1]
    rows: list[int] = []
    for i in range(A.shape[0]):
        if zqcore.rank_mod(A[rows + [i]], q) == len(rows) + 1:
            rows.append(i)
            if len(rows) == n:
                return rows
    return None


def _filter(A, target, cand, q: int, bsq: int) -> np.ndarray:
    out = []
    for start in range(0, len(cand), 1 << 16):
        chunk = cand[start:start + (1 << 16)]
        resid = np.mod(target[None, :] - zqcore.matmul(chunk, A.T, q), q)
        out.append(chunk[zqcore.norm_sq_rows(resid, q) <= bsq])
    return np.concatenate(out) if out else np.zeros((0, A.shape[1]), dtype=np.int64)


def _all_vectors(n: int, q: int) -> np.ndarray:
    grids = np.indices((q,) * n, dtype=np.int64).reshape(n, -1)
    return grids.T.copy()


def enumerate_preimages(A, u, y, b: int, params: ParameterSet,
                        budget: int = DEFAULT_BUDGET, method: str = "auto") -> PreimageSet:
    """Exact preimage set of ``y`` in sector ``b``.

    ``scan`` tests every x in Z_q^n.  ``box`` uses that each coordinate of a
    valid residual is at most the radius in absolute value: picking n rows S
    with A_S invertible, every preimage is A_S^{-1}(t_S - r) for some r in
    that box, so the candidate list is complete.  ``auto`` takes whichever
    candidate list is shorter.
    """
    q, n = params.q, params.n
    A = np.asarray(A, dtype=np.int64)
    target = np.mod(np.asarray(y) - b * np.asarray(u), q)
    bound = params.gen_bound
    radius = min(math.isqrt(params.gen_bound_sq), (q - 1) // 2)
    scan_size = q ** n
    box_size = (2 * radius + 1) ** n
    rows = None
    if method == "box" or (method == "auto" and box_size < scan_size):
        rows = _invertible_rows(A, q)
        if rows is None and method == "box":
            raise ValueError("matrix has no invertible n x n row subset")
    if rows is not None:
        if box_size > budget:
            raise EnumerationBudgetError(f"{box_size} candidates exceed budget {budget}")
        inv = zqcore.inverse_mod(A[rows], q)
        offsets = np.array(list(itertools.product(range(-radius, radius + 1), repeat=n)), dtype=np.int64)
        rhs = np.mod(target[rows][None, :] - offsets, q)
        cand = zqcore.matmul(rhs, inv.T, q)
    else:
        if scan_size > budget:
            raise EnumerationBudgetError(f"q^n = {scan_size} exceeds budget {budget}")
        cand = _all_vectors(n, q)
    found = _filter(A, target, cand, q, params.gen_bound_sq)
    if rows is not None and len(found):
        # canonical lexicographic order, matching the scan path
        found = np.unique(found, axis=0)
    return PreimageSet(elements=found, b=b, bound=bound)


def is_preimage(A, u, y, b: int, x, params: ParameterSet) -> bool:
    resid = np.mod(np.asarray(y) - zqcore.matvec(A, x, params.q) - b * np.asarray(u), params.q)
    return zqcore.within_bound(resid, params.q, bound_sq=params.gen_bound_sq)


# --- Claim: many binary secrets share a kernel coset -------------------------

def alternative_secrets(witness: samplers.LossyWitness, s, q: int) -> np.ndarray:
    """Binary x != s with C x = C s (mod q), by brute force over {0,1}^n."""
    C = witness.C
    n = C.shape[1]
    cube = _all_vectors(n, 2)
    hits = np.all(zqcore.matmul(cube, C.T, q) == zqcore.matvec(C, s, q)[None, :], axis=1)
    hits &= ~np.all(cube == np.asarray(s)[None, :], axis=1)
    return cube[hits]


@dataclass
class KernelReport:
    counts: np.ndarray
    expected_mean: float
    low_threshold: float
    chebyshev_bound: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.counts))

    @property
    def std_error(self) -> float:
        return float(np.std(self.counts, ddof=1) / math.sqrt(len(self.counts)))

    @property
    def low_frequency(self) -> float:
        return float(np.mean(self.counts <= self.low_threshold))

    def as_dict(self) -> dict:
        return {"trials": len(self.counts), "mean": self.mean, "std_error": self.std_error,
                "expected_mean": self.expected_mean, "low_threshold": self.low_threshold,
                "low_frequency": self.low_frequency, "chebyshev_bound": self.chebyshev_bound}


def binary_kernel_experiment(params: ParameterSet, trials: int, rng: np.random.Generator) -> KernelReport:
    """Count, per lossy instance, the other binary secrets consistent with it."""
    n, q, ell = params.n, params.q, params.ell
    counts = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        _, witness = samplers.sample_lossy(params, rng)
        s = samplers.sample_binary(n, rng)
        counts[i] = len(alternative_secrets(witness, s, q))
    mean = (2**n - 1) / q**ell
    return KernelReport(counts=counts, expected_mean=mean, low_threshold=mean / 2,
                        chebyshev_bound=4 * q**ell / (2**n - 1))


# --- posterior over the verifier's secret ------------------------------------

@dataclass(frozen=True)
class PosteriorDistribution:
    secrets: np.ndarray = field(repr=False)
    probabilities: np.ndarray = field(repr=False)

    @property
    def max(self) -> float:
        return float(self.probabilities.max())

    @property
    def argmax(self) -> np.ndarray:
        return self.secrets[int(np.argmax(self.probabilities))]


class EmptyPosteriorError(ValueError):
    pass


def posterior(A, u, params: ParameterSet) -> PosteriorDistribution:
    q, n, B = params.q, params.n, params.B_V
    cube = _all_vectors(n, 2)
    resid = zqcore.centered(np.mod(np.asarray(u)[None, :] - zqcore.matmul(cube, np.asarray(A).T, q), q), q)
    inside = np.max(np.abs(resid), axis=1) <= B
    if not inside.any():
        raise EmptyPosteriorError("no binary secret leaves a residual inside the truncated support")
    sq = np.sum(resid.astype(float) ** 2, axis=1)
    logw = np.where(inside, -math.pi * sq / (B * B), -np.inf)
    probs = np.exp(logw - special.logsumexp(logw))
    return PosteriorDistribution(secrets=cube, probabilities=probs)


def slack_factor(params: ParameterSet) -> float:
    return math.exp(8 * math.pi * params.m * params.n * params.B_L / params.B_V)


@dataclass
class PosteriorReport:
    maxima: np.ndarray
    threshold: float
    slack: float
    raw_threshold: float

    @property
    def exceed_frequency(self) -> float:
        return float(np.mean(self.maxima > self.threshold))

    @property
    def raw_exceed_frequency(self) -> float:
        return float(np.mean(self.maxima > self.raw_threshold))

    def as_dict(self) -> dict:
        return {"trials": len(self.maxima), "slack": self.slack, "threshold": self.threshold,
                "exceed_frequency": self.exceed_frequency, "raw_threshold": self.raw_threshold,
                "raw_exceed_frequency": self.raw_exceed_frequency,
                "mean_max": float(np.mean(self.maxima)), "largest_max": float(np.max(self.maxima))}


def posterior_experiment(params: ParameterSet, trials: int, rng: np.random.Generator) -> PosteriorReport:
    """Max posterior of the secret over lossy instances sampled as the verifier does."""
    n, q, ell = params.n, params.q, params.ell
    maxima = np.empty(trials)
    for i in range(trials):
        A, _ = samplers.sample_lossy(params, rng)
        s = samplers.sample_binary(n, rng)
        e = samplers.sample_dgauss_vector(params.m, params.B_V, q, rng)
        u = np.mod(zqcore.matvec(A, s, q) + e, q)
        maxima[i] = posterior(A, u, params).max
    raw = 3 * q**ell / (2**n - 1)
    slack = slack_factor(params)
    return PosteriorReport(maxima=maxima, threshold=raw * slack, slack=slack, raw_threshold=raw)


# --- min-entropy --------------------------------------------------------------

def min_entropy(probs) -> float:
    p = np.asarray(probs, dtype=float)
    return -math.log2(float(p.max()))


def min_entropy_exact(state) -> float:
    """-log2 of the largest standard-basis outcome probability of a prover state."""
    return min_entropy(state.outcome_table()[1])


def smoothing_distance(probs, h: float) -> float:
    """Distance from ``probs`` to the nearest sub-normalized distribution
    whose largest weight is at most 2^-h."""
    cap = 2.0 ** (-h)
    return float(np.sum(np.maximum(np.asarray(probs, dtype=float) - cap, 0.0)))


def smooth_min_entropy_report(entropies, threshold_bits: float) -> tuple[float, float]:
    """Fraction of transcripts below the threshold, which doubles as the
    empirical smoothing parameter for the claim H_min^eps >= threshold."""
    ent = np.asarray(entropies, dtype=float)
    if ent.size == 0:
        return 0.0, 0.0
    frac = float(np.mean(ent < threshold_bits))
    return frac, frac


def entropy_threshold(params: ParameterSet, c_offset: float = 2.0) -> float:
    return params.n - params.ell * params.log_q - c_offset


@dataclass(frozen=True)
class EntropyCertificate:
    p_G: float
    p_T: float
    delta: float
    epsilon: float | None
    epsilon_perfect_gen: float
    bound_bits: float
    c_offset: float
    ci_G: tuple[float, float] | None = None
    ci_T: tuple[float, float] | None = None

    @property
    def valid(self) -> bool:
        return self.epsilon is not None

    def as_dict(self) -> dict:
        return {"p_G": self.p_G, "p_T_excess": self.p_T, "delta": self.delta,
                "epsilon": self.epsilon, "epsilon_perfect_gen": self.epsilon_perfect_gen,
                "bound_bits": self.bound_bits, "c_offset": self.c_offset, "valid": self.valid,
                "ci_G": self.ci_G, "ci_T": self.ci_T}


def entropy_certificate(p_G: float, p_T_excess: float, params: ParameterSet, c_offset: float = 2.0,
                        ci_G=None, ci_T=None) -> EntropyCertificate:
    """Smoothing parameter for H_min^eps(BX | A U Y, C=G) >= n - l log2 q - c_offset.

    ``p_T_excess`` is the test-round pass rate minus 1/2.  When
    delta = 1/2 - p_T_excess + sqrt(1 - p_G) exceeds 1/2 there is no
    guarantee and ``epsilon`` is None.
    """
    if not 0 < p_G <= 1:
        raise ValueError("p_G must lie in (0, 1]")
    if not 0 <= p_T_excess <= 0.5:
        raise ValueError("p_T_excess must lie in [0, 1/2]")
    delta = 0.5 - p_T_excess + math.sqrt(1 - p_G)
    eps = 5 * delta ** 0.25 if delta <= 0.5 else None
    eps_perfect = 2 * max(0.0, 1 - 4 * p_T_excess**2) ** 0.25
    return EntropyCertificate(p_G=p_G, p_T=p_T_excess, delta=delta, epsilon=eps,
                              epsilon_perfect_gen=eps_perfect,
                              bound_bits=entropy_threshold(params, c_offset), c_offset=c_offset,
                              ci_G=ci_G, ci_T=ci_T)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class RateEstimate:
    passes: int
    trials: int
    ci: tuple[float, float]

    @property
    def rate(self) -> float:
        return self.passes / self.trials

    def as_dict(self) -> dict:
        return {"passes": self.passes, "trials": self.trials, "rate": self.rate, "ci95": list(self.ci)}


def pass_rate_estimator(variant: str, prover, params: ParameterSet, N: int, seed: int = 0,
                        min_trials: int = 100) -> dict[str, RateEstimate]:
    """Run ``N`` sessions with each challenge forced and report pass rates.

    ``prover`` is an adversary name (see ``qsim.make_adversary``) or a
    callable ``rng -> prover``.  Session i of challenge G uses stream index
    2i and of challenge T index 2i + 1.
    """
    from . import protocol, qsim

    if N < min_trials:
        raise ValueError(f"need at least {min_trials} sessions per challenge, got {N}")
    factory = prover if callable(prover) else (lambda rng: qsim.make_adversary(prover, params, rng))
    out = {}
    for offset, C in enumerate("GT"):
        passes = 0
        for i in range(N):
            idx = 2 * i + offset
            p = factory(samplers.session_rng(seed, idx, 1))
            rec = protocol.run_session(variant, protocol.InProcChannel(p), params,
                                       samplers.session_rng(seed, idx, 0), challenge=C)
            passes += rec.accept
        out[C] = RateEstimate(passes, N, wilson_interval(passes, N))
    return out


def intervals_overlap(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


@dataclass(frozen=True)
class SkewConsistency:
    alpha: float
    pass_probability: float
    p_T_excess: float
    epsilon_prime: float
    distance: float

    @property
    def consistent(self) -> bool:
        return self.distance <= self.epsilon_prime + 1e-12

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "pass_probability": self.pass_probability, "p_T_excess": self.p_T_excess,
                "epsilon_prime": self.epsilon_prime, "distance": self.distance, "consistent": self.consistent}


def skew_pass_probability(alpha: float, w: int) -> float:
    """Exact test-round pass probability of a claw with amplitudes
    (alpha, sqrt(1 - alpha^2)): d != 0 and the parity bit agrees."""
    return (1 - 2.0**-w) * (0.5 + alpha * math.sqrt(max(0.0, 1 - alpha * alpha)))


def skew_consistency(alpha: float, params: ParameterSet) -> SkewConsistency:
    """Compare the perfect-generation certificate against the exact distance
    of the claw's (b, x) output from the closest distribution with max
    weight 1/2 (the most entropy a two-outcome output can carry)."""
    p_pass = skew_pass_probability(alpha, params.w)
    excess = min(0.5, max(0.0, p_pass - 0.5))
    cert = entropy_certificate(1.0, excess, params)
    dist = smoothing_distance([alpha * alpha, 1 - alpha * alpha], h=1.0)
    return SkewConsistency(alpha=alpha, pass_probability=p_pass, p_T_excess=excess,
                           epsilon_prime=cert.epsilon_perfect_gen, distance=dist)

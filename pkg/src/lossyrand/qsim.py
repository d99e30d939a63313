"""Sparse simulation of the prover's preimage register.

A state is a list of basis elements (b, x, tag) with complex amplitudes.
``tag`` labels an orthogonal environment state: elements with different
tags never interfere.  Honest states only use tag 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import samplers, zqcore
from .analysis import DEFAULT_BUDGET, enumerate_preimages
from .samplers import ParameterSet

log = logging.getLogger(__name__)

DEFAULT_EXACT_THRESHOLD = 17  # max w + 1 for the dense Hadamard path


class StateTooLargeError(RuntimeError):
    pass


class ConsumedStateError(RuntimeError):
    pass


def _row_keys(q: int, bits, xs, tags=None) -> np.ndarray | None:
    """Injective int64 key per (b, x[, tag]) row, or None if it would overflow."""
    n = xs.shape[1]
    t_span = int(tags.max()) + 1 if tags is not None and len(tags) else 1
    if 2 * t_span * q**n >= 1 << 62:
        return None
    key = np.zeros(len(bits), dtype=np.int64)
    for i in range(n):
        key = key * q + xs[:, i]
    key = key * 2 + bits
    if tags is not None:
        key = key * t_span + tags
    return key


@dataclass
class ProverState:
    q: int
    bits: np.ndarray
    xs: np.ndarray
    amplitudes: np.ndarray
    tags: np.ndarray = None
    consumed: bool = False
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.int64)
        self.xs = np.asarray(self.xs, dtype=np.int64).reshape(len(self.bits), -1)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.tags is None:
            self.tags = np.zeros(len(self.bits), dtype=np.int64)
        self.tags = np.asarray(self.tags, dtype=np.int64)
        if not self.check:
            return
        keys = _row_keys(self.q, self.bits, self.xs, self.tags)
        if keys is None:
            keys = np.unique(np.column_stack([self.bits, self.xs, self.tags]), axis=0)
        if len(np.unique(keys)) != len(self.bits):
            raise ValueError("support entries must be distinct")

    @property
    def n(self) -> int:
        return self.xs.shape[1]

    @property
    def w(self) -> int:
        return self.n * zqcore.bit_length(self.q)

    def __len__(self) -> int:
        return len(self.bits)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def outcome_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct (b, x) rows and their standard-basis probabilities,
        environment traced out."""
        rows = np.column_stack([self.bits, self.xs])
        if len(rows) == 0 or np.all(self.tags == self.tags[0]):
            # entries are distinct, so (b, x) rows already are
            return rows, np.abs(self.amplitudes) ** 2
        keys = _row_keys(self.q, self.bits, self.xs)
        if keys is None:
            _, first, inv = np.unique(rows, axis=0, return_index=True, return_inverse=True)
        else:
            _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        probs = np.bincount(inv.ravel(), weights=np.abs(self.amplitudes) ** 2, minlength=len(first))
        return rows[first], probs

    def outcome_distribution(self) -> dict[tuple[int, tuple[int, ...]], float]:
        keys, probs = self.outcome_table()
        return {(int(k[0]), tuple(int(v) for v in k[1:])): float(p) for k, p in zip(keys, probs)}

    def _check_live(self):
        if self.consumed:
            raise ConsumedStateError("state was already measured")

    @classmethod
    def point(cls, q: int, b: int, x, tag: int = 0) -> "ProverState":
        return cls(q=q, bits=[b], xs=[list(x)], amplitudes=[1.0], tags=[tag])

    @classmethod
    def claw(cls, q: int, x0, x1, amps=(1 / math.sqrt(2), 1 / math.sqrt(2))) -> "ProverState":
        return cls(q=q, bits=[0, 1], xs=[list(x0), list(x1)], amplitudes=list(amps))


def _sector_state(q: int, sectors: dict[int, np.ndarray], weights: dict[int, float]) -> ProverState:
    bits, xs, amps = [], [], []
    for b, elems in sectors.items():
        if len(elems) == 0 or weights[b] == 0:
            continue
        bits.append(np.full(len(elems), b, dtype=np.int64))
        xs.append(np.asarray(elems, dtype=np.int64))
        amps.append(np.full(len(elems), math.sqrt(weights[b] / len(elems))))
    # sectors come from exact preimage enumeration, so entries are distinct
    return ProverState(q=q, bits=np.concatenate(bits), xs=np.concatenate(xs), amplitudes=np.concatenate(amps),
                       check=False)


def honest_commit(matrix, u, params: ParameterSet, rng: np.random.Generator,
                  budget: int = DEFAULT_BUDGET, gaussian: bool = False):
    """Evaluate f(b, x) = A x + b u + e on a random input and return
    ``(y, state)`` with the idealized post-measurement state.

    Each nonempty sector b carries amplitude 1/sqrt(2 |X_b|) on its preimage
    set.  With ``gaussian=True`` amplitudes follow sqrt(D_{B_P}(y - A x - b u))
    instead.
    """
    q = params.q
    b_hat = int(rng.integers(2))
    x_hat = rng.integers(0, q, size=params.n, dtype=np.int64)
    e_hat = samplers.sample_dgauss_vector(params.m, params.B_P, q, rng)
    y = np.mod(zqcore.matvec(matrix, x_hat, q) + b_hat * np.asarray(u) + e_hat, q)
    sectors = {b: enumerate_preimages(matrix, u, y, b, params, budget=budget).elements for b in (0, 1)}
    if gaussian:
        return y, _gaussian_state(matrix, u, y, sectors, params)
    sizes = {b: len(v) for b, v in sectors.items()}
    if 0 in sizes.values():
        log.info("empty preimage sector (sizes %s); all weight on the other sector", sizes)
        weights = {b: float(sizes[b] > 0) for b in sizes}
    else:
        weights = {0: 0.5, 1: 0.5}
    return y, _sector_state(q, sectors, weights)


def _gaussian_state(matrix, u, y, sectors, params: ParameterSet) -> ProverState:
    q = params.q
    bits, xs, logs = [], [], []
    for b, elems in sectors.items():
        for x in elems:
            resid = np.mod(y - zqcore.matvec(matrix, x, q) - b * np.asarray(u), q)
            lp = samplers.dgauss_log_density(resid, params.B_P, q)
            if lp > -math.inf:
                bits.append(b)
                xs.append(x)
                logs.append(lp)
    logs = np.array(logs)
    p = np.exp(logs - logs.max())
    p /= p.sum()
    return ProverState(q=q, bits=bits, xs=np.array(xs), amplitudes=np.sqrt(p))


def measure_standard(state: ProverState, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    state._check_live()
    keys, p = state.outcome_table()
    k = keys[int(rng.choice(len(keys), p=p / p.sum()))]
    state.consumed = True
    return int(k[0]), k[1:].astype(np.int64)


def _fwht(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    h = 1
    size = a.shape[0]
    while h < size:
        a = a.reshape(-1, 2, h)
        a = np.stack([a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]], axis=1)
        h *= 2
    return a.reshape(size)


def hadamard_distribution(state: ProverState) -> np.ndarray:
    """Exact probabilities of all 2^(w+1) outcomes, indexed c * 2^w + int(d)."""
    w = state.w
    size = 1 << (w + 1)
    weights = 1 << np.arange(w - 1, -1, -1, dtype=np.int64)
    probs = np.zeros(size)
    for tag in np.unique(state.tags):
        vec = np.zeros(size, dtype=complex)
        for b, x, a, t in zip(state.bits, state.xs, state.amplitudes, state.tags):
            if t == tag:
                vec[(int(b) << w) + int(zqcore.binary_rep(x, state.q).astype(np.int64) @ weights)] += a
        probs += np.abs(_fwht(vec)) ** 2 / size
    return probs


def _index_to_outcome(idx: int, w: int) -> tuple[int, np.ndarray]:
    c = idx >> w
    d = ((idx & ((1 << w) - 1)) >> np.arange(w - 1, -1, -1)) & 1
    return int(c), d.astype(np.uint8)


def measure_hadamard(state: ProverState, rng: np.random.Generator,
                     exact_threshold: int = DEFAULT_EXACT_THRESHOLD, method: str = "auto") -> tuple[int, np.ndarray]:
    """Measure (b, J(x)) in the Hadamard basis; returns (c, d).

    ``method="auto"`` uses the closed form for states with at most two
    support entries and the dense transform otherwise; ``"exact"`` forces the
    dense transform.
    """
    if method not in ("auto", "exact"):
        raise ValueError(f"unknown method {method!r}")
    state._check_live()
    w = state.w
    if len(state) <= 2 and method == "auto":
        out = _hadamard_small(state, rng)
    elif w + 1 <= exact_threshold:
        p = hadamard_distribution(state)
        out = _index_to_outcome(int(rng.choice(p.size, p=p / p.sum())), w)
    else:
        raise StateTooLargeError(f"{len(state)}-element state with w + 1 = {w + 1} > {exact_threshold}")
    state.consumed = True
    return out


def _hadamard_small(state: ProverState, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    w, q = state.w, state.q
    amps = state.amplitudes / math.sqrt(state.norm_sq())
    uniform = (int(rng.integers(2)), rng.integers(0, 2, size=w).astype(np.uint8))
    if len(state) == 1:
        return uniform
    if state.tags[0] != state.tags[1]:
        # orthogonal environments: a mixture of two point states
        return uniform
    a1, a2 = amps
    b1, b2 = (int(b) for b in state.bits)
    delta = zqcore.binary_rep(state.xs[0], q) ^ zqcore.binary_rep(state.xs[1], q)
    p_even = abs(a1 + a2) ** 2 / 2
    phase = int(rng.random() >= p_even)
    c, d = uniform
    if b1 != b2:
        return phase ^ zqcore.gf2_dot(d, delta), d
    if zqcore.gf2_dot(d, delta) != phase:
        d = d.copy()
        d[int(np.flatnonzero(delta)[0])] ^= 1
    return c, d


@dataclass
class ExtractionResult:
    x0: np.ndarray
    collapsed: ProverState = field(repr=False)


def extract_preimage(state: ProverState, s, rng: np.random.Generator) -> ExtractionResult:
    """Copy x, add s when b = 1, measure the copy, and collapse.

    The returned state is a fresh (unconsumed) register supported on
    {(0, x0), (1, x0 - s)}; the input state is marked consumed.
    """
    state._check_live()
    q = state.q
    s = np.asarray(s, dtype=np.int64)
    aux = np.mod(state.xs + state.bits[:, None] * s[None, :], q)
    keys = [tuple(int(v) for v in a) for a in aux]
    weight: dict = {}
    for k, a in zip(keys, state.amplitudes):
        weight[k] = weight.get(k, 0.0) + abs(a) ** 2
    order = list(weight)
    p = np.array([weight[k] for k in order])
    x0 = order[int(rng.choice(len(order), p=p / p.sum()))]
    keep = np.array([k == x0 for k in keys])
    amps = state.amplitudes[keep] / math.sqrt(weight[x0])
    collapsed = ProverState(q=q, bits=state.bits[keep], xs=state.xs[keep], amplitudes=amps, tags=state.tags[keep])
    state.consumed = True
    return ExtractionResult(x0=np.array(x0, dtype=np.int64), collapsed=collapsed)


# --- provers -------------------------------------------------------------------

class HonestProver:
    """Prepares the superposition, reports y, then measures in the basis the
    challenge asks for.  It sees only (matrix, u) and the challenge."""

    kind = "honest"

    def __init__(self, params: ParameterSet, rng: np.random.Generator,
                 budget: int = DEFAULT_BUDGET, exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
                 gaussian: bool = False):
        self.params = params
        self.rng = rng
        self.budget = budget
        self.exact_threshold = exact_threshold
        self.gaussian = gaussian
        self.state: ProverState | None = None

    def commit(self, matrix, u) -> np.ndarray:
        y, self.state = honest_commit(matrix, u, self.params, self.rng, self.budget, self.gaussian)
        self._after_commit(matrix, u, y)
        return y

    def _after_commit(self, matrix, u, y):
        pass

    def register(self) -> ProverState:
        """Hand the preimage register over (in-process quantum channel)."""
        return self.state

    def receive_register(self, state: ProverState):
        self.state = state

    def answer_generation(self) -> tuple[int, np.ndarray]:
        return measure_standard(self.state, self.rng)

    def answer_test(self) -> tuple[int, np.ndarray]:
        return measure_hadamard(self.state, self.rng, self.exact_threshold)


class CollapsedProver(HonestProver):
    """Measures its register in the standard basis right after reporting y."""

    kind = "collapsed"

    def _after_commit(self, matrix, u, y):
        b, x = measure_standard(self.state, self.rng)
        self.state = ProverState.point(self.params.q, b, x)


class ClassicalZeroProver(HonestProver):
    """Reports y = b u, whose sector-b preimage is x = 0."""

    kind = "classical_zero"

    def __init__(self, params, rng, b: int = 1, **kw):
        super().__init__(params, rng, **kw)
        self.b = b

    def commit(self, matrix, u) -> np.ndarray:
        q = self.params.q
        self.state = ProverState.point(q, self.b, np.zeros(self.params.n, dtype=np.int64))
        return np.mod(self.b * np.asarray(u, dtype=np.int64), q)


class SkewProver(HonestProver):
    """Honest commitment, then sector weights alpha^2 (b=0) and 1 - alpha^2 (b=1)."""

    def __init__(self, params, rng, alpha: float, **kw):
        super().__init__(params, rng, **kw)
        if not 0 <= alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        self.alpha = alpha

    @property
    def kind(self) -> str:
        return f"skew:{self.alpha:g}"

    def _after_commit(self, matrix, u, y):
        st = self.state
        sectors = {b: st.xs[st.bits == b] for b in (0, 1)}
        weights = {0: self.alpha**2, 1: 1 - self.alpha**2}
        if any(len(v) == 0 for v in sectors.values()):
            return
        self.state = _sector_state(st.q, sectors, weights)


ADVERSARY_KINDS = ("honest", "collapsed", "classical_zero", "skew")


def make_adversary(kind: str, params: ParameterSet, rng: np.random.Generator, **kw):
    """Build a prover from a name such as ``honest`` or ``skew:0.6``."""
    name, _, arg = kind.partition(":")
    if name == "honest":
        return HonestProver(params, rng, **kw)
    if name == "collapsed":
        return CollapsedProver(params, rng, **kw)
    if name == "classical_zero":
        return ClassicalZeroProver(params, rng, b=int(arg or 1), **kw)
    if name == "skew":
        if not arg:
            raise ValueError("skew needs an amplitude, e.g. skew:0.6")
        return SkewProver(params, rng, alpha=float(arg), **kw)
    raise ValueError(f"unknown adversary kind {kind!r}; expected one of {ADVERSARY_KINDS}")

"""Verifier side of the three protocol variants and the session driver.

Variants share one message flow (instance, image, challenge, response,
verdict) and differ only in how the verifier builds its matrix and how it
learns x0 for the equation test:

* ``p1``: trapdoor matrix, x0 by trapdoor inversion.
* ``p2``: lossy matrix, x0 by preimage extraction on the prover's register
  (needs the in-process quantum channel).
* ``p3``: challenge drawn first; lossy matrix for G, trapdoor matrix for T.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import qsim, samplers, zqcore
from .samplers import LossyWitness, ParameterSet, Trapdoor, TrapdoorDecodeError
from .wire import Challenge, EqResp, GenResp, Image, Instance, Message, Reason, Verdict, encode

VARIANTS = ("p1", "p2", "p3")

log = logging.getLogger(__name__)


class ParameterError(ValueError):
    def __init__(self, condition: str, detail: str):
        super().__init__(f"{condition}: {detail}")
        self.condition = condition


class ProtocolError(RuntimeError):
    def __init__(self, reason: Reason, detail: str = ""):
        super().__init__(f"{reason.name}: {detail}")
        self.reason = reason


class TransportError(RuntimeError):
    pass


# --- parameter validation ------------------------------------------------------

@dataclass
class ValidationReport:
    mode: str
    failures: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)
    ratios: dict[str, float] = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return not self.failures

    def raise_for_failures(self):
        if self.failures:
            raise ParameterError(*self.failures[0])


def validate_params(p: ParameterSet) -> ValidationReport:
    """Check the parameter conditions.  "bit_width" and "bound_order" are
    exact and always enforced; in relaxed mode "dimensions", "prover_bound"
    and "bound_gaps" only produce warnings with the realized values."""
    rep = ValidationReport(mode=p.mode)
    soft = rep.failures if p.mode == "strict" else rep.warnings
    if not zqcore.is_prime(p.q):
        rep.failures.append(("q", f"{p.q} is not prime"))
    for name in ("n", "m", "ell", "B_L", "B_V", "B_P"):
        if getattr(p, name) < 1:
            rep.failures.append(("range", f"{name} must be positive"))
    log_q = math.log2(p.q)
    if p.w != p.n * p.k:
        rep.failures.append(("bit_width", f"w = {p.w} but n * ceil(log2 q) = {p.n * p.k}"))
    if not 2 * math.sqrt(p.n) <= p.B_L < p.B_V < p.B_P:
        rep.failures.append(("bound_order", f"need 2 sqrt(n) = {2 * math.sqrt(p.n):.2f} <= B_L = {p.B_L} "
                                    f"< B_V = {p.B_V} < B_P = {p.B_P}"))
    if p.n < p.dim_n_const * p.ell * log_q:
        soft.append(("dimensions", f"n = {p.n} < {p.dim_n_const:g} * l log2 q = {p.dim_n_const * p.ell * log_q:.1f}"))
    if p.m < p.dim_m_const * p.n * log_q:
        soft.append(("dimensions", f"m = {p.m} < {p.dim_m_const:g} * n log2 q = {p.dim_m_const * p.n * log_q:.1f}"))
    target = p.q / (2 * p.C_T * math.sqrt(p.m * p.n * log_q))
    rep.ratios["prover_bound_target"] = target
    rep.ratios["prover_bound_residual"] = p.B_P - target
    if abs(p.B_P - target) > 1:
        soft.append(("prover_bound", f"B_P = {p.B_P} but q / (2 C_T sqrt(m n log q)) = {target:.2f}"))
    rep.ratios["B_P/B_V"] = p.B_P / p.B_V
    rep.ratios["B_V/B_L"] = p.B_V / p.B_L
    for key in ("B_P/B_V", "B_V/B_L"):
        if rep.ratios[key] < p.min_bound_gap:
            soft.append(("bound_gaps", f"{key} = {rep.ratios[key]:.3g} below {p.min_bound_gap:.3g}"))
    return rep


# --- verifier -------------------------------------------------------------------

@dataclass(frozen=True)
class VerifierSecret:
    s: np.ndarray
    e: np.ndarray
    witness: Trapdoor | LossyWitness
    variant: str
    challenge: str | None  # fixed up front only in p3


def _draw_challenge(rng: np.random.Generator) -> str:
    return "GT"[int(rng.integers(2))]


def verifier_start(variant: str, params: ParameterSet, rng: np.random.Generator,
                   challenge: str | None = None) -> tuple[Instance, VerifierSecret]:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    C = None
    if variant == "p3":
        drawn = _draw_challenge(rng)
        C = challenge or drawn
    if variant == "p2" or (variant == "p3" and C == "G"):
        matrix, witness = samplers.sample_lossy(params, rng)
    else:
        matrix, witness = samplers.gen_trap(params, rng)
    s = samplers.sample_binary(params.n, rng)
    if not s.any():
        log.info("secret s = 0: the equation test reduces to c = 0")
    e = samplers.sample_dgauss_vector(params.m, params.B_V, params.q, rng)
    u = np.mod(zqcore.matvec(matrix, s, params.q) + e, params.q)
    return Instance(matrix, u), VerifierSecret(s=s, e=e, witness=witness, variant=variant, challenge=C)


def check_generation(params: ParameterSet, instance: Instance, y, b: int, x) -> Verdict:
    q = params.q
    x = np.asarray(x, dtype=np.int64)
    if b not in (0, 1) or x.shape != (params.n,):
        return Verdict(False, Reason.MALFORMED)
    resid = np.mod(np.asarray(y) - zqcore.matvec(instance.matrix, x, q) - b * instance.u, q)
    ok = zqcore.within_bound(resid, q, bound_sq=params.gen_bound_sq)
    return Verdict(ok, Reason.OK if ok else Reason.GEN_BOUND)


def check_equation(params: ParameterSet, s, x0, c: int, d) -> Verdict:
    q = params.q
    d = np.asarray(d, dtype=np.uint8)
    if c not in (0, 1) or d.shape != (params.w,):
        return Verdict(False, Reason.MALFORMED)
    if not d.any():
        return Verdict(False, Reason.D_ZERO)
    x0 = np.asarray(x0, dtype=np.int64)
    x1 = np.mod(x0 - np.asarray(s), q)
    ok = c == zqcore.gf2_dot(d, zqcore.binary_rep(x0, q) ^ zqcore.binary_rep(x1, q))
    return Verdict(ok, Reason.OK if ok else Reason.EQUATION)


class Verifier:
    """One session's state machine; rejects messages that arrive out of order."""

    def __init__(self, variant: str, params: ParameterSet, rng: np.random.Generator,
                 challenge: str | None = None):
        self.variant = variant
        self.params = params
        self.rng = rng
        self.forced = challenge
        self.expect = "start"
        self.instance: Instance | None = None
        self.secret: VerifierSecret | None = None
        self.y = None
        self.challenge: str | None = None
        self.x0 = None
        self.early_verdict: Verdict | None = None

    def _advance(self, have: str, nxt: str):
        if self.expect != have:
            raise ProtocolError(Reason.OUT_OF_ORDER, f"expected {self.expect}, got {have}")
        self.expect = nxt

    def start(self) -> Instance:
        self._advance("start", "image")
        self.instance, self.secret = verifier_start(self.variant, self.params, self.rng, self.forced)
        return self.instance

    def on_image(self, msg: Message, channel) -> Challenge:
        if not isinstance(msg, Image):
            raise ProtocolError(Reason.OUT_OF_ORDER, f"expected IMAGE, got {type(msg).__name__}")
        self._advance("image", "response")
        if np.asarray(msg.y).shape != (self.params.m,):
            raise ProtocolError(Reason.MALFORMED, "image has wrong length")
        self.y = np.mod(np.asarray(msg.y, dtype=np.int64), self.params.q)
        if self.variant == "p3":
            C = self.secret.challenge
        else:
            drawn = _draw_challenge(self.rng)
            C = self.forced or drawn
        self.challenge = C
        if C == "T":
            self._prepare_test(channel)
        return Challenge(C)

    def _prepare_test(self, channel):
        if isinstance(self.secret.witness, Trapdoor):
            try:
                self.x0, _ = samplers.invert(self.instance.matrix, self.secret.witness, self.y,
                                             bound_sq=self.params.gen_bound_sq)
            except TrapdoorDecodeError:
                self.early_verdict = Verdict(False, Reason.TRAPDOOR_DECODE)
        else:
            state = channel.take_register()
            result = qsim.extract_preimage(state, self.secret.s, self.rng)
            channel.return_register(result.collapsed)
            self.x0 = result.x0

    def on_response(self, msg: Message) -> Verdict:
        self._advance("response", "done")
        want = GenResp if self.challenge == "G" else EqResp
        if not isinstance(msg, want):
            raise ProtocolError(Reason.OUT_OF_ORDER, f"expected {want.__name__}, got {type(msg).__name__}")
        if self.early_verdict is not None:
            return self.early_verdict
        if self.challenge == "G":
            return check_generation(self.params, self.instance, self.y, msg.b, msg.x)
        return check_equation(self.params, self.secret.s, self.x0, msg.c, msg.d)


# --- prover endpoint and in-process channel ----------------------------------------

class ProverEndpoint:
    """Adapts a simulated prover to the message flow.  The prover only ever
    sees (matrix, u) and the challenge letter."""

    def __init__(self, prover):
        self.prover = prover
        self.expect = "instance"

    def handle(self, msg: Message) -> Message | None:
        if isinstance(msg, Instance) and self.expect == "instance":
            self.expect = "challenge"
            return Image(self.prover.commit(msg.matrix, msg.u))
        if isinstance(msg, Challenge) and self.expect == "challenge":
            self.expect = "verdict"
            if msg.C == "G":
                return GenResp(*self.prover.answer_generation())
            return EqResp(*self.prover.answer_test())
        if isinstance(msg, Verdict):
            self.expect = "done"
            return None
        raise ProtocolError(Reason.OUT_OF_ORDER, f"prover got {type(msg).__name__} while expecting {self.expect}")


class InProcChannel:
    """Direct calls into a local prover; also carries the quantum register."""

    supports_quantum = True

    def __init__(self, prover):
        self.prover = prover
        self.endpoint = ProverEndpoint(prover)

    def send(self, msg: Message) -> Message | None:
        return self.endpoint.handle(msg)

    def take_register(self):
        return self.prover.register()

    def return_register(self, state):
        self.prover.receive_register(state)


# --- transcripts -------------------------------------------------------------------

def instance_digest(instance: Instance) -> str:
    return hashlib.sha256(encode(instance)).hexdigest()[:32]


def _bits_str(bits) -> str:
    return "".join(str(int(v)) for v in bits)


@dataclass
class TranscriptRecord:
    seed: int
    index: int
    variant: str
    profile: str
    adversary: str
    instance_digest: str
    y: list[int] | None
    challenge: str | None
    response: dict | None
    accept: bool
    reason: str
    entropy_bits: float | None = None
    support_sizes: list[int] | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("entropy_bits", "support_sizes"):
            if d[key] is None:
                del d[key]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TranscriptRecord":
        return cls(**d)


def _response_dict(msg) -> dict | None:
    if isinstance(msg, GenResp):
        return {"b": int(msg.b), "x": [int(v) for v in msg.x]}
    if isinstance(msg, EqResp):
        return {"c": int(msg.c), "d": _bits_str(msg.d)}
    return None


def run_session(variant: str, channel, params: ParameterSet, rng: np.random.Generator, *,
                seed: int = 0, index: int = 0, profile: str = "", adversary: str = "",
                challenge: str | None = None, measure_entropy: bool = False) -> TranscriptRecord:
    """Drive one session through ``channel`` and return its transcript.

    ``measure_entropy`` records the exact min-entropy of the prover's register
    right after it reports y, and its support size per sector (in-process
    channels only).
    """
    if variant == "p2" and not getattr(channel, "supports_quantum", False):
        raise TransportError("p2 needs the in-process quantum channel")
    ver = Verifier(variant, params, rng, challenge)
    instance = ver.start()
    rec = TranscriptRecord(seed=seed, index=index, variant=variant, profile=profile, adversary=adversary,
                           instance_digest=instance_digest(instance), y=None, challenge=None,
                           response=None, accept=False, reason=Reason.OK.name)
    response = None
    try:
        image = channel.send(instance)
        if measure_entropy:
            from .analysis import min_entropy_exact
            state = channel.prover.state
            rec.entropy_bits = min_entropy_exact(state)
            rec.support_sizes = [int(np.sum(state.bits == b)) for b in (0, 1)]
        chal = ver.on_image(image, channel)
        rec.y = [int(v) for v in ver.y]
        rec.challenge = chal.C
        response = channel.send(chal)
        verdict = ver.on_response(response)
    except ProtocolError as exc:
        verdict = Verdict(False, exc.reason)
    rec.response = _response_dict(response)
    rec.accept = bool(verdict.accept)
    rec.reason = Reason(verdict.reason).name
    try:
        channel.send(verdict)
    except (ProtocolError, TransportError, OSError):
        pass
    return rec

"""Batch execution, summaries, and on-disk outputs."""

from __future__ import annotations

import concurrent.futures as cf
import csv
import hashlib
import json
import math
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import analysis, protocol, qsim, zqcore
from ..protocol import TranscriptRecord
from ..samplers import ParameterSet, session_rng
from .config import Profile
from .transport import DEFAULT_TIMEOUT, StreamChannel, socket_pair_prover


def _prover_kw(profile: Profile) -> dict:
    return {"budget": profile.budget, "exact_threshold": profile.exact_threshold}


def run_one(variant: str, adversary: str, profile: Profile, seed: int, index: int,
            challenge: str | None = None, measure_entropy: bool = False) -> TranscriptRecord:
    prover = qsim.make_adversary(adversary, profile.params, session_rng(seed, index, 1), **_prover_kw(profile))
    return protocol.run_session(variant, protocol.InProcChannel(prover), profile.params,
                                session_rng(seed, index, 0), seed=seed, index=index, profile=profile.name,
                                adversary=adversary, challenge=challenge, measure_entropy=measure_entropy)


def _run_chunk(args) -> list[dict]:
    variant, adversary, profile, seed, indices, challenge, measure_entropy = args
    return [run_one(variant, adversary, profile, seed, i, challenge, measure_entropy).to_dict() for i in indices]


def run_batch(variant: str, adversary: str, profile: Profile, N: int, seed: int, *,
              transport: str = "inproc", workers: int = 1, challenge: str | None = None,
              measure_entropy: bool = False, timeout: float = DEFAULT_TIMEOUT, sink=None) -> list[TranscriptRecord]:
    """Run sessions 0..N-1 and return their records in index order.

    ``sink`` (if given) is called once per record, in index order, from the
    calling process only.
    """
    if transport == "stream":
        if variant == "p2":
            raise protocol.TransportError("p2 needs the in-process quantum channel")
        if measure_entropy:
            raise protocol.TransportError("entropy measurement needs the in-process channel")
        records = _run_stream(variant, adversary, profile, N, seed, challenge, timeout, sink)
        return records
    if transport != "inproc":
        raise ValueError(f"unknown transport {transport!r}")
    chunks = [list(range(i, min(N, i + 64))) for i in range(0, N, 64)]
    jobs = [(variant, adversary, profile, seed, c, challenge, measure_entropy) for c in chunks]
    records: list[TranscriptRecord] = []
    if workers <= 1:
        results = map(_run_chunk, jobs)
        pool = None
    else:
        pool = cf.ProcessPoolExecutor(workers, mp_context=multiprocessing.get_context("fork"))
        results = pool.map(_run_chunk, jobs)
    try:
        for chunk in results:
            for d in chunk:
                rec = TranscriptRecord.from_dict(d)
                records.append(rec)
                if sink:
                    sink(rec)
    finally:
        if pool:
            pool.shutdown()
    return records


def _run_stream(variant, adversary, profile, N, seed, challenge, timeout, sink):
    sock, thread = socket_pair_prover(adversary, profile.params, seed, timeout, **_prover_kw(profile))
    channel = StreamChannel(sock, timeout)
    records = []
    try:
        for i in range(N):
            rec = protocol.run_session(variant, channel, profile.params, session_rng(seed, i, 0), seed=seed,
                                       index=i, profile=profile.name, adversary=adversary, challenge=challenge)
            records.append(rec)
            if sink:
                sink(rec)
    finally:
        sock.close()
        thread.join(timeout)
    return records


# --- summaries ---------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    threshold: str
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "pass": self.passed}


def expected_checks(adversary: str, params: ParameterSet, rates: dict) -> list[Check]:
    """Pass/fail thresholds for adversaries with a known pass-rate profile."""
    checks = []
    w = params.w
    name = adversary.partition(":")[0]
    G, T = rates.get("G"), rates.get("T")
    if name in ("honest", "collapsed") and G:
        checks.append(Check("generation rate", G["rate"], "== 1", G["rate"] == 1.0))
    if name == "honest" and T:
        lo = 1 - 2.0**-w - 0.01
        checks.append(Check("test rate", T["rate"], f">= {lo:.6f}", T["rate"] >= lo))
    if name == "collapsed" and T:
        target = (1 - 2.0**-w) / 2
        checks.append(Check("test rate", T["rate"], f"within 0.03 of {target:.6f}",
                            abs(T["rate"] - target) <= 0.03))
    return checks


def entropy_stats(records, params: ParameterSet, c_offset: float = 2.0) -> dict | None:
    ent = [r.entropy_bits for r in records if r.entropy_bits is not None and r.challenge == "G"]
    if not ent:
        return None
    sizes = [s for r in records if r.support_sizes and r.challenge == "G" for s in r.support_sizes]
    threshold = analysis.entropy_threshold(params, c_offset)
    frac, eps = analysis.smooth_min_entropy_report(ent, threshold)
    mean_size = float(np.mean(sizes)) if sizes else 0.0
    return {"transcripts": len(ent), "mean_bits": float(np.mean(ent)), "min_bits": float(np.min(ent)),
            "threshold_bits": threshold, "fraction_below": frac, "epsilon": eps,
            "mean_sector_size": mean_size,
            "predicted_mean_bits": 1 + math.log2(mean_size) if mean_size > 0 else None}


def summarize(records: list[TranscriptRecord], params: ParameterSet, c_offset: float = 2.0) -> dict:
    """Summary statistics; a pure function of the records."""
    first = records[0] if records else None
    rates = {}
    for C in "GT":
        sel = [r for r in records if r.challenge == C]
        if sel:
            passes = sum(r.accept for r in sel)
            rates[C] = analysis.RateEstimate(passes, len(sel), analysis.wilson_interval(passes, len(sel))).as_dict()
    reasons: dict[str, int] = {}
    for r in records:
        reasons[r.reason] = reasons.get(r.reason, 0) + 1
    cert = None
    if "G" in rates and "T" in rates and rates["G"]["rate"] > 0:
        excess = min(0.5, max(0.0, rates["T"]["rate"] - 0.5))
        cert = analysis.entropy_certificate(rates["G"]["rate"], excess, params, c_offset,
                                            ci_G=tuple(rates["G"]["ci95"]), ci_T=tuple(rates["T"]["ci95"])).as_dict()
    adversary = first.adversary if first else ""
    checks = expected_checks(adversary, params, rates)
    return {
        "profile": first.profile if first else "", "variant": first.variant if first else "",
        "adversary": adversary, "seed": first.seed if first else None, "sessions": len(records),
        "rates": rates, "reasons": dict(sorted(reasons.items())), "certificate": cert,
        "entropy": entropy_stats(records, params, c_offset),
        "checks": [c.as_dict() for c in checks], "ok": all(c.passed for c in checks),
    }


# --- files ---------------------------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class JsonlAppender:
    """Single writer for transcript lines."""

    def __init__(self, path: Path):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")

    def __call__(self, rec: TranscriptRecord):
        self.fh.write(dumps(rec.to_dict()) + "\n")

    def close(self):
        self.fh.close()


def read_transcripts(path: Path) -> list[TranscriptRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TranscriptRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_json(path: Path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_rates_csv(path: Path, summary: dict):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["profile", "variant", "adversary", "challenge", "passes", "trials", "rate", "ci_low", "ci_high"])
        for C, r in sorted(summary["rates"].items()):
            wr.writerow([summary["profile"], summary["variant"], summary["adversary"], C, r["passes"], r["trials"],
                         f"{r['rate']:.6f}", f"{r['ci95'][0]:.6f}", f"{r['ci95'][1]:.6f}"])


def pack_outputs(records, params: ParameterSet) -> bytes:
    """Generation outputs as b || J(x) per transcript, packed MSB-first and
    zero-padded to a whole byte."""
    chunks = []
    for r in records:
        if r.response is None or "b" not in r.response:
            continue
        x = np.asarray(r.response["x"], dtype=np.int64)
        chunks.append(np.concatenate([[r.response["b"]], zqcore.binary_rep(x, params.q)]).astype(np.uint8))
    if not chunks:
        return b""
    return np.packbits(np.concatenate(chunks)).tobytes()


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    profile: str
    seed: int
    config_digest: str
    outputs: dict[str, str] = field(default_factory=dict)  # file name -> sha256

    def to_dict(self) -> dict:
        return {"command": self.command, "argv": self.argv, "profile": self.profile, "seed": self.seed,
                "config_digest": self.config_digest, "outputs": dict(sorted(self.outputs.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(**d)

    def record_outputs(self, out_dir: Path, names):
        self.outputs = {name: file_digest(Path(out_dir) / name) for name in names}

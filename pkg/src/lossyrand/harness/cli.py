"""Command-line entry point: ``lossyrand <command> ...``.

Exit codes: 0 success, 1 a reported threshold check failed, 2 configuration
or usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import socket
import sys
import tempfile
from pathlib import Path

import numpy as np

from .. import analysis, protocol
from ..samplers import session_rng
from . import figures, runner
from .config import ConfigError, Profile, get_profile, load_profiles
from .transport import DEFAULT_TIMEOUT, StreamChannel, serve_prover

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _common(p: argparse.ArgumentParser, profile_default: str | None = "t1"):
    p.add_argument("--profile", default=profile_default, help="profile name")
    p.add_argument("--profiles", default=None, help="profiles YAML file (default: packaged, or $LOSSYRAND_PROFILE_DIR)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: the profile's)")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lossyrand", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run sessions and summarize pass rates")
    _common(p)
    p.add_argument("--variant", choices=protocol.VARIANTS, default="p1")
    p.add_argument("--adversary", default="honest", help="honest, collapsed, classical_zero[:b], skew:ALPHA")
    p.add_argument("-n", "--sessions", type=int, default=1000)
    p.add_argument("--transport", choices=("inproc", "stream"), default="inproc")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--challenge", choices=("G", "T"), default=None, help="force the challenge")
    p.add_argument("--c-offset", type=float, default=2.0)
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)

    p = sub.add_parser("claims", help="binary-kernel and posterior experiments")
    _common(p, profile_default=None)
    p.add_argument("--kernel-profile", default="t2l1")
    p.add_argument("--posterior-profile", default="t3")
    p.add_argument("--kernel-trials", type=int, default=500)
    p.add_argument("--posterior-trials", type=int, default=200)

    p = sub.add_parser("entropy", help="generation-round outputs with exact min-entropy")
    _common(p, profile_default="t2")
    p.add_argument("-n", "--sessions", type=int, default=200)
    p.add_argument("--adversary", default="honest")
    p.add_argument("--c-offset", type=float, default=2.0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("serve", help="verifier: listen and run sessions over TCP")
    _common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--variant", choices=("p1", "p3"), default="p1")
    p.add_argument("-n", "--sessions", type=int, default=100)
    p.add_argument("--adversary-label", default="remote")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)

    p = sub.add_parser("connect", help="prover: connect to a verifier and answer")
    p.add_argument("--profile", default="t1")
    p.add_argument("--profiles", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--adversary", default="honest")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)

    p = sub.add_parser("validate", help="check profiles against the parameter conditions")
    p.add_argument("--profiles", default=None)
    p.add_argument("names", nargs="*")

    p = sub.add_parser("replay", help="re-run a manifest and compare outputs byte for byte")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    return ap


# --- helpers -------------------------------------------------------------------

def _strip_out(argv: list[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


def _out_dir(args, command: str) -> Path:
    d = Path(args.out) if args.out else Path("lossyrand-out") / command
    d.mkdir(parents=True, exist_ok=True)
    return d


def _finish(out: Path, manifest: runner.RunManifest, names: list[str]):
    manifest.record_outputs(out, names)
    runner.write_json(out / "manifest.json", manifest.to_dict())


def _print_checks(checks: list[dict]) -> bool:
    ok = True
    for c in checks:
        print(f"check,{c['name']},{c['value']:.6g},{c['threshold']},{'PASS' if c['pass'] else 'FAIL'}")
        ok &= c["pass"]
    return ok


def _print_rates(summary: dict):
    print("challenge,passes,trials,rate,ci_low,ci_high")
    for C, r in sorted(summary["rates"].items()):
        print(f"{C},{r['passes']},{r['trials']},{r['rate']:.6f},{r['ci95'][0]:.6f},{r['ci95'][1]:.6f}")


# --- commands --------------------------------------------------------------------

def cmd_run(args, argv) -> int:
    prof = get_profile(args.profile, args.profiles)
    seed = prof.seed if args.seed is None else args.seed
    if args.sessions < 1:
        raise ConfigError("need at least one session")
    if args.transport == "stream" and args.variant == "p2":
        raise ConfigError("p2 needs the in-process transport")
    out = _out_dir(args, "run")
    sink = runner.JsonlAppender(out / "transcripts.jsonl")
    try:
        records = runner.run_batch(args.variant, args.adversary, prof, args.sessions, seed,
                                   transport=args.transport, workers=args.workers, challenge=args.challenge,
                                   timeout=args.timeout, sink=sink)
    finally:
        sink.close()
    summary = runner.summarize(records, prof.params, args.c_offset)
    summary["transport"] = args.transport
    runner.write_json(out / "summary.json", summary)
    runner.write_rates_csv(out / "rates.csv", summary)
    figures.pass_rates(summary, out / "pass_rates.png")
    _finish(out, runner.RunManifest("run", argv, prof.name, seed, prof.digest()),
            ["transcripts.jsonl", "summary.json", "rates.csv", "pass_rates.png"])
    _print_rates(summary)
    return EXIT_OK if _print_checks(summary["checks"]) else EXIT_CHECK


def claims_report(kprof: Profile, pprof: Profile, seed: int, kernel_trials: int, posterior_trials: int):
    """Returns (report dict, KernelReport, PosteriorReport)."""
    kern = analysis.binary_kernel_experiment(kprof.params, kernel_trials, session_rng(seed, 0, 2))
    post = analysis.posterior_experiment(pprof.params, posterior_trials, session_rng(seed, 1, 2))
    kd, pd = kern.as_dict(), post.as_dict()
    checks = [
        {"name": "kernel mean", "value": kern.mean,
         "threshold": f"within 3 SE ({3 * kern.std_error:.3f}) of {kern.expected_mean:.3f}",
         "pass": abs(kern.mean - kern.expected_mean) <= 3 * kern.std_error},
        {"name": "kernel low-count frequency", "value": kern.low_frequency,
         "threshold": f"<= {kern.chebyshev_bound + 0.05:.4f}",
         "pass": kern.low_frequency <= kern.chebyshev_bound + 0.05},
        {"name": "posterior exceed frequency", "value": post.exceed_frequency,
         "threshold": "<= 0.05", "pass": post.exceed_frequency <= 0.05},
    ]
    report = {"kernel": {"profile": kprof.name, **kd}, "posterior": {"profile": pprof.name, **pd},
              "checks": checks, "ok": all(c["pass"] for c in checks)}
    return report, kern, post


def cmd_claims(args, argv) -> int:
    kprof = get_profile(args.profile or args.kernel_profile, args.profiles)
    pprof = get_profile(args.posterior_profile, args.profiles)
    seed = kprof.seed if args.seed is None else args.seed
    out = _out_dir(args, "claims")
    rep, kern, post = claims_report(kprof, pprof, seed, args.kernel_trials, args.posterior_trials)
    counts, maxima = kern.counts, post.maxima
    runner.write_json(out / "claims.json", rep)
    np.savetxt(out / "kernel_counts.csv", counts, fmt="%d", header="count", comments="")
    np.savetxt(out / "posterior_maxima.csv", maxima, fmt="%.17g", header="max_posterior", comments="")
    figures.kernel_histogram(counts, kern.expected_mean, kern.low_threshold, out / "kernel.png")
    figures.posterior_histogram(maxima, post.threshold, out / "posterior.png")
    digest = hashlib.sha256((kprof.digest() + pprof.digest()).encode()).hexdigest()
    _finish(out, runner.RunManifest("claims", argv, f"{kprof.name}+{pprof.name}", seed, digest),
            ["claims.json", "kernel_counts.csv", "posterior_maxima.csv", "kernel.png", "posterior.png"])
    return EXIT_OK if _print_checks(rep["checks"]) else EXIT_CHECK


def cmd_entropy(args, argv) -> int:
    prof = get_profile(args.profile, args.profiles)
    seed = prof.seed if args.seed is None else args.seed
    out = _out_dir(args, "entropy")
    sink = runner.JsonlAppender(out / "transcripts.jsonl")
    try:
        records = runner.run_batch("p3", args.adversary, prof, args.sessions, seed, workers=args.workers,
                                   challenge="G", measure_entropy=True, sink=sink)
    finally:
        sink.close()
    stats = runner.entropy_stats(records, prof.params, args.c_offset)
    (out / "outputs.bin").write_bytes(runner.pack_outputs(records, prof.params))
    np.savetxt(out / "entropies.csv", [r.entropy_bits for r in records], fmt="%.17g", header="bits", comments="")
    checks = []
    if args.adversary == "honest":
        checks.append({"name": "fraction below threshold", "value": stats["fraction_below"],
                       "threshold": "<= 0.01", "pass": stats["fraction_below"] <= 0.01})
        gap = abs(stats["mean_bits"] - stats["predicted_mean_bits"])
        checks.append({"name": "mean vs 1 + log2(mean sector size)", "value": gap,
                       "threshold": "<= 0.1 bit", "pass": gap <= 0.1})
    stats["no_entropy_flag"] = stats["epsilon"] >= 0.99
    report = {"profile": prof.name, "adversary": args.adversary, "seed": seed, "entropy": stats,
              "bits_per_output": 1 + prof.params.w, "checks": checks, "ok": all(c["pass"] for c in checks)}
    runner.write_json(out / "entropy.json", report)
    figures.entropy_histogram([r.entropy_bits for r in records], stats["threshold_bits"], out / "entropy.png")
    _finish(out, runner.RunManifest("entropy", argv, prof.name, seed, prof.digest()),
            ["transcripts.jsonl", "outputs.bin", "entropies.csv", "entropy.json", "entropy.png"])
    print(f"entropy,mean_bits,{stats['mean_bits']:.6f}")
    print(f"entropy,threshold_bits,{stats['threshold_bits']:.6f}")
    print(f"entropy,fraction_below,{stats['fraction_below']:.6f}")
    if stats["no_entropy_flag"]:
        print("entropy,flag,no certified entropy (epsilon ~ 1)")
    return EXIT_OK if _print_checks(checks) else EXIT_CHECK


def cmd_serve(args, argv) -> int:
    prof = get_profile(args.profile, args.profiles)
    seed = prof.seed if args.seed is None else args.seed
    out = _out_dir(args, "serve")
    with socket.create_server((args.host, args.port)) as srv:
        srv.settimeout(args.timeout)
        host, port = srv.getsockname()[:2]
        print(f"listening,{host},{port}", flush=True)
        try:
            conn, _ = srv.accept()
        except socket.timeout:
            print("error,no prover connected before the timeout", file=sys.stderr)
            return EXIT_CHECK
    sink = runner.JsonlAppender(out / "transcripts.jsonl")
    records = []
    with conn:
        channel = StreamChannel(conn, args.timeout)
        for i in range(args.sessions):
            rec = protocol.run_session(args.variant, channel, prof.params, session_rng(seed, i, 0), seed=seed,
                                       index=i, profile=prof.name, adversary=args.adversary_label)
            sink(rec)
            records.append(rec)
            if rec.reason in ("BAD_MAGIC", "BAD_VERSION", "MALFORMED", "TIMEOUT", "TRANSPORT"):
                print(f"abort,{i},{rec.reason}")
                break
    sink.close()
    summary = runner.summarize(records, prof.params)
    runner.write_json(out / "summary.json", summary)
    _print_rates(summary)
    return EXIT_OK


def cmd_connect(args, argv) -> int:
    prof = get_profile(args.profile, args.profiles)
    seed = prof.seed if args.seed is None else args.seed
    with socket.create_connection((args.host, args.port), timeout=args.timeout) as sock:
        n = serve_prover(sock, args.adversary, prof.params, seed, args.timeout,
                         budget=prof.budget, exact_threshold=prof.exact_threshold)
    print(f"sessions,{n}")
    return EXIT_OK


def cmd_validate(args, argv) -> int:
    profiles = load_profiles(args.profiles)
    names = [n.lower() for n in args.names] or sorted(profiles)
    for name in names:
        if name not in profiles:
            raise ConfigError(f"unknown profile {name!r}")
        rep = protocol.validate_params(profiles[name].params)
        print(f"profile,{name},{'accepted' if rep.accepted else 'rejected'},{rep.mode}")
        for cond, msg in rep.failures:
            print(f"failure,{name},{cond},{msg}")
        for cond, msg in rep.warnings:
            print(f"warning,{name},{cond},{msg}")
        for key, val in sorted(rep.ratios.items()):
            print(f"ratio,{name},{key},{val:.6g}")
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        manifest = runner.RunManifest.from_dict(json.loads(Path(args.manifest).read_text()))
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from None
    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="lossyrand-replay-"))
    code = main(manifest.argv + ["--out", str(out)])
    if code == EXIT_CONFIG:
        return code
    ok = True
    for name, digest in sorted(manifest.outputs.items()):
        path = out / name
        same = path.exists() and runner.file_digest(path) == digest
        print(f"replay,{name},{'identical' if same else 'DIFFERS'}")
        ok &= same
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {"run": cmd_run, "claims": cmd_claims, "entropy": cmd_entropy, "serve": cmd_serve,
            "connect": cmd_connect, "validate": cmd_validate, "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, _strip_out(argv))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (protocol.TransportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

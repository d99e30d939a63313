import socket
import subprocess
import sys
import threading
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from lossyrand import protocol, wire
from lossyrand.harness import cli, config, runner
from lossyrand.harness.transport import StreamChannel
from lossyrand.samplers import session_rng

GOOD = {"mode": "relaxed", "seed": 1,
        "params": {"n": 2, "m": 24, "q": 251, "ell": 1, "B_L": 3, "B_V": 4, "B_P": 5}}


def write_profiles(tmp_path, body):
    path = tmp_path / config.PROFILE_FILE
    path.write_text(yaml.safe_dump(body))
    return path


def test_packaged_profiles_load(profiles):
    assert {"t1", "t2", "t2l1", "t3", "t4"} <= set(profiles)
    assert profiles["t1"].params.w == 16


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(colour="red"),
    lambda d: d["params"].update(sigma=3),
    lambda d: d.pop("params"),
    lambda d: d.pop("mode"),
    lambda d: d["params"].update(q=250),
    lambda d: d["params"].update(B_V=2),
])
def test_bad_profiles_rejected(tmp_path, mutate):
    body = json.loads(json.dumps(GOOD))
    mutate(body)
    with pytest.raises(config.ConfigError):
        config.load_profiles(write_profiles(tmp_path, {"x": body}))


def test_profile_dir_env(tmp_path, monkeypatch):
    write_profiles(tmp_path, {"mine": GOOD})
    monkeypatch.setenv(config.PROFILE_DIR_ENV, str(tmp_path))
    assert set(config.load_profiles()) == {"mine"}
    assert cli.main(["validate"]) == 0


def test_profile_digest_stable(profiles):
    assert profiles["t1"].digest() == config.get_profile("t1").digest()
    assert profiles["t1"].digest() != profiles["t4"].digest()


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--profile", "nope", "--out", str(tmp_path)]) == 2
    assert cli.main(["run", "-n", "40", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", "--variant", "p2", "--transport", "stream", "-n", "2", "--out", str(tmp_path / "c")]) == 2


def test_failed_check_exits_one(tmp_path, capsys, monkeypatch):
    real = runner.expected_checks

    def strict(adversary, params, rates):
        return real("honest", params, rates)
    monkeypatch.setattr(runner, "expected_checks", strict)
    code = cli.main(["run", "--adversary", "collapsed", "--challenge", "T", "-n", "60", "--out", str(tmp_path)])
    assert code == 1
    assert ",FAIL" in capsys.readouterr().out


def test_run_outputs_and_replay(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--variant", "p3", "-n", "80", "--seed", "9", "--out", str(out)]) == 0
    for name in ("transcripts.jsonl", "summary.json", "rates.csv", "pass_rates.png", "manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert "--out" not in manifest["argv"]
    capsys.readouterr()
    assert cli.main(["replay", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("replay,")]
    assert lines and all(l.endswith("identical") for l in lines)


def test_summary_recomputes_from_log(tmp_path, profiles):
    out = tmp_path / "run"
    assert cli.main(["run", "-n", "50", "--out", str(out)]) == 0
    recs = runner.read_transcripts(out / "transcripts.jsonl")
    stored = json.loads((out / "summary.json").read_text())
    fresh = runner.summarize(recs, profiles["t1"].params)
    fresh["transport"] = "inproc"
    fresh = json.loads(json.dumps(fresh, sort_keys=True))
    assert fresh == stored


@pytest.mark.parametrize("variant", ["p1", "p3"])
def test_stream_matches_inproc(profiles, variant):
    prof = profiles["t1"]
    a = runner.run_batch(variant, "honest", prof, 30, 4)
    b = runner.run_batch(variant, "honest", prof, 30, 4, transport="stream")
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_worker_pool_matches_serial(profiles):
    prof = profiles["t1"]
    a = runner.run_batch("p1", "honest", prof, 150, 8)
    b = runner.run_batch("p1", "honest", prof, 150, 8, workers=3)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_entropy_bits_file_length(tmp_path, profiles):
    out = tmp_path / "ent"
    code = cli.main(["entropy", "--profile", "t1", "-n", "10", "--out", str(out)])
    assert code in (0, 1)
    w = profiles["t1"].params.w
    assert (out / "outputs.bin").stat().st_size == -(-10 * (1 + w) // 8)
    recs = runner.read_transcripts(out / "transcripts.jsonl")
    assert all(r.entropy_bits is not None and r.challenge == "G" for r in recs)


def test_tcp_serve_connect(tmp_path):
    out = tmp_path / "serve"
    env_cmd = [sys.executable, "-m", "lossyrand"]
    srv = subprocess.Popen(env_cmd + ["serve", "-n", "20", "--timeout", "30", "--out", str(out)],
                           stdout=subprocess.PIPE, text=True)
    line = srv.stdout.readline().strip()
    _, host, port = line.split(",")
    cli_rc = subprocess.run(env_cmd + ["connect", "--port", port, "--host", host], capture_output=True, text=True)
    rest = srv.communicate(timeout=60)[0]
    assert srv.returncode == 0 and cli_rc.returncode == 0
    assert "sessions,20" in cli_rc.stdout
    assert "G," in rest or "T," in rest
    recs = runner.read_transcripts(out / "transcripts.jsonl")
    assert len(recs) == 20 and all(r.accept for r in recs)


def _rogue_prover(sock, reply: bytes):
    def run():
        with sock:
            hdr = sock.recv(wire.HEADER.size)
            _, length = wire.parse_header(hdr)
            while length:
                length -= len(sock.recv(length))
            sock.sendall(reply)
    t = threading.Thread(target=run, daemon=True)
    t.start()
    return t


def _session_over(reply: bytes, profiles):
    a, b = socket.socketpair()
    t = _rogue_prover(b, reply)
    rec = protocol.run_session("p1", StreamChannel(a, 5.0), profiles["t1"].params, session_rng(0, 0, 0),
                               seed=0, index=0, profile="t1", adversary="rogue")
    a.close()
    t.join(5)
    return rec


def test_bad_version_aborts(profiles):
    frame = bytearray(wire.encode(wire.Image(np.zeros(24, dtype=np.int64))))
    frame[4] = 2
    rec = _session_over(bytes(frame), profiles)
    assert not rec.accept and rec.reason == "BAD_VERSION"


def test_bad_magic_and_garbage_abort(profiles):
    assert _session_over(b"XXXX" + bytes(6), profiles).reason == "BAD_MAGIC"
    good = wire.encode(wire.Image(np.zeros(24, dtype=np.int64)))
    assert _session_over(good[:-3], profiles).reason == "MALFORMED"


def test_silent_prover_times_out(profiles):
    a, b = socket.socketpair()
    rec = protocol.run_session("p1", StreamChannel(a, 0.2), profiles["t1"].params, session_rng(0, 0, 0),
                               seed=0, index=0, profile="t1", adversary="silent")
    a.close()
    b.close()
    assert rec.reason == "TIMEOUT" and not rec.accept


def test_claims_command(tmp_path, capsys):
    out = tmp_path / "claims"
    assert cli.main(["claims", "--kernel-trials", "60", "--posterior-trials", "5", "--out", str(out)]) == 0
    for name in ("claims.json", "kernel_counts.csv", "posterior_maxima.csv", "kernel.png", "posterior.png"):
        assert (out / name).exists()

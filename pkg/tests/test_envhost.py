"""Stdio environment host: protocol, errors, determinism, trace parity."""

import json
import subprocess
import sys

import numpy as np
import pytest

from uuvsim.cli import main as cli_main
from uuvsim.records import read_records


class HostProc:
    """Line-oriented driver around a host subprocess."""

    def __init__(self):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "uuvsim.envhost"],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.PIPE, text=True)

    def request(self, **req):
        self.proc.stdin.write(json.dumps(req) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        assert line, self.proc.stderr.read()
        return json.loads(line)

    def raw(self, text):
        self.proc.stdin.write(text + "\n")
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def close(self):
        if self.proc.poll() is None:
            resp = self.request(op="close")
            assert resp["ok"]
        return self.proc.wait(timeout=10)


@pytest.fixture
def host():
    h = HostProc()
    yield h
    rc = h.close()
    assert rc == 0


MAKE = dict(op="make", task={"task": "station_keeping", "vehicle": "bluerov",
                             "episode_length": 20},
            sim={"batch_size": 3}, seed=5)


def test_make_reset_step_shapes(host):
    resp = host.request(**MAKE)
    assert resp["ok"]
    spaces = resp["spaces"]
    assert spaces["n_envs"] == 3 and spaces["action_dim"] == 6
    assert spaces["obs_dim"] == 18
    assert host.request(op="spaces")["spaces"] == spaces

    resp = host.request(op="reset")
    obs = np.asarray(resp["obs"])
    assert obs.shape == (3, 18)

    resp = host.request(op="step", commands=[[0.0] * 6] * 3)
    assert resp["ok"]
    assert np.asarray(resp["obs"]).shape == (3, 18)
    assert len(resp["reward"]) == 3
    assert resp["terminated"] == [False] * 3
    assert resp["truncated"] == [False] * 3
    info = resp["info"]
    for key in ("position_error", "attitude_error", "metric", "finished",
                "failure", "diverged", "success", "time"):
        assert key in info and len(info[key]) == 3
    assert "state" not in resp  # trace off by default

    resp = host.request(op="reset", mask=[True, False, False])
    assert resp["ok"]


def test_structured_errors_keep_host_alive(host):
    # stepping before make is an error, not a crash
    resp = host.request(op="step", commands=[[0.0]])
    assert not resp["ok"] and "make" in resp["error"]["message"]

    resp = host.request(op="warp")
    assert not resp["ok"] and "unknown op" in resp["error"]["message"]

    resp = host.raw("{not json")
    assert not resp["ok"] and resp["error"]["type"] == "JSONDecodeError"

    assert host.request(**MAKE)["ok"]
    resp = host.request(op="step", commands=[[0.0] * 6] * 2)  # wrong batch
    assert not resp["ok"] and resp["error"]["type"] == "TaskError"
    assert "commands" in resp["error"]["message"]

    resp = host.request(op="reset", mask=[True])
    assert not resp["ok"] and "mask" in resp["error"]["message"]

    resp = host.request(op="step")
    assert not resp["ok"] and "commands" in resp["error"]["message"]

    # the handle still works after every error above
    assert host.request(op="reset")["ok"]


def test_make_validation_errors(host):
    resp = host.request(op="make", task={"task": "flying"}, sim={"batch_size": 1})
    assert not resp["ok"] and resp["error"]["type"] == "TaskError"
    resp = host.request(op="make", task={}, sim={"batch_size": 0})
    assert not resp["ok"] and resp["error"]["type"] == "EngineError"
    resp = host.request(op="make", task={}, sim={"batch_size": 1},
                        dr_preset="nope")
    assert not resp["ok"] and resp["error"]["type"] == "DRSpecError"


def rollout_via(host, n_steps=6):
    host.request(op="reset")
    frames = []
    for _ in range(n_steps):
        resp = host.request(op="step", commands=[[0.0] * 6] * 3)
        frames.append(resp)
    return frames


def test_seed_op_rebuilds_deterministically(host):
    assert host.request(**MAKE)["ok"]
    first = rollout_via(host)
    assert host.request(op="seed", seed=5)["ok"]
    again = rollout_via(host)
    for a, b in zip(first, again):
        assert a == b
    assert host.request(op="seed", seed=6)["ok"]
    other = rollout_via(host)
    assert other[0]["obs"] != first[0]["obs"]


def test_seed_requires_field(host):
    assert host.request(**MAKE)["ok"]
    resp = host.request(op="seed")
    assert not resp["ok"] and "seed" in resp["error"]["message"]


def test_trace_state_matches_trajectory_export(host, tmp_path, capsys):
    """The host's trace state must be bitwise what the rollout command records."""
    out_file = tmp_path / "traj.jsonl"
    code = cli_main(["rollout", "--envs", "3", "--steps", "6", "--seed", "5",
                     "--vehicle", "bluerov", "--out", str(out_file)])
    capsys.readouterr()
    assert code == 0
    _header, rows = read_records(out_file)
    by_step = {}
    for r in rows:
        by_step.setdefault(r["step"], []).append(r)

    make = dict(MAKE, task={"task": "station_keeping", "vehicle": "bluerov",
                            "episode_length": 500},
                trace=True)
    assert host.request(**make)["ok"]
    host.request(op="reset")
    for step in range(6):
        resp = host.request(op="step", commands=[[0.0] * 6] * 3)
        state = resp["state"]
        for i, row in enumerate(sorted(by_step[step], key=lambda r: r["env"])):
            for host_key, row_key in (("p", "p"), ("quat", "quat"), ("nu", "nu")):
                a = np.asarray(state[host_key][i], dtype=float)
                b = np.asarray(row[row_key], dtype=float)
                assert a.tobytes() == b.tobytes(), (step, i, host_key)
            assert resp["reward"][i] == row["reward"]

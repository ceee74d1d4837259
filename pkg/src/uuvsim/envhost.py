"""Stdio host exposing the vectorized task environments to other runtimes.

Protocol: one JSON request per stdin line, one JSON response per stdout
line, strictly in order.  Responses are ``{"ok": true, ...}`` or
``{"ok": false, "error": {"type": ..., "message": ...}}``; a bad request
never kills the process.  Arrays cross the boundary row-major, one row
per environment.  Non-finite floats are serialized as null.

Operations
----------
make    {"op": "make", "task": {...}, "sim": {...}, "dr_preset"?, "seed"?,
         "trace"?} -> {"ok": true, "spaces": {...}}
        ``task`` holds task-config fields (``weights``/``dock``/
        ``trajectory`` may be nested objects), ``sim`` holds engine-config
        fields.  With ``trace`` true every step reply carries the
        post-step batch state for parity audits.
spaces  -> {"ok": true, "spaces": {...}}
reset   {"mask"?: [bool]*N} -> {"ok": true, "obs": [[...]]}
step    {"commands": N x A} -> {"ok": true, "obs", "reward", "terminated",
         "truncated", "info", "state"?}
        ``state`` (trace mode) holds p, quat, nu after any auto-reset,
        matching what the trajectory-export command records.
seed    {"seed": int} -> {"ok": true}; rebuilds the environment from the
        stored config with the new seed.
close   -> {"ok": true} and the process exits.
"""

from __future__ import annotations

import json
import sys

import numpy as np

from .engine import SimConfig
from .randomization import preset
from .records import dump_line
from .tasks import DockSpec, RewardWeights, TaskConfig, TrajectorySpec, make_env

# info entries forwarded per step (terminal_observation excluded: it is a
# full matrix that trace consumers can reconstruct from obs + finished)
INFO_KEYS = ("position_error", "attitude_error", "metric", "finished",
             "failure", "diverged", "success", "time")


def _task_from_doc(doc: dict) -> TaskConfig:
    doc = dict(doc)
    if "weights" in doc:
        doc["weights"] = RewardWeights(**doc["weights"])
    if "dock" in doc:
        doc["dock"] = DockSpec(**doc["dock"])
    if "trajectory" in doc:
        doc["trajectory"] = TrajectorySpec(**doc["trajectory"])
    return TaskConfig(**doc)


class Host:
    """One environment handle, driven by a sequential request loop."""

    def __init__(self):
        self.env = None
        self.trace = False
        self._doc: dict | None = None

    # -- operations ------------------------------------------------------
    def op_make(self, req: dict) -> dict:
        self._doc = {
            "task": dict(req.get("task") or {}),
            "sim": dict(req.get("sim") or {}),
            "dr_preset": req.get("dr_preset"),
            "seed": int(req.get("seed", 0)),
        }
        self.trace = bool(req.get("trace", False))
        self._build(self._doc["seed"])
        return {"ok": True, "spaces": self.env.spaces()}

    def _build(self, seed: int) -> None:
        doc = self._doc
        task = _task_from_doc(doc["task"])
        sim = SimConfig(**doc["sim"])
        dr = preset(doc["dr_preset"]) if doc["dr_preset"] else None
        self.env = make_env(task, sim, dr=dr, seed=seed)

    def _require_env(self):
        if self.env is None:
            raise RuntimeError("no environment: send a 'make' request first")

    def op_spaces(self, req: dict) -> dict:
        self._require_env()
        return {"ok": True, "spaces": self.env.spaces()}

    def op_seed(self, req: dict) -> dict:
        self._require_env()
        if "seed" not in req:
            raise ValueError("seed: missing 'seed' field")
        self._doc["seed"] = int(req["seed"])
        self._build(self._doc["seed"])
        return {"ok": True}

    def op_reset(self, req: dict) -> dict:
        self._require_env()
        mask = req.get("mask")
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (self.env.n_envs,):
                raise ValueError(
                    f"mask: expected {self.env.n_envs} booleans, got shape {mask.shape}")
        obs = self.env.reset(mask)
        return {"ok": True, "obs": obs}

    def op_step(self, req: dict) -> dict:
        self._require_env()
        if "commands" not in req:
            raise ValueError("step: missing 'commands' field")
        commands = np.asarray(req["commands"], dtype=float)
        obs, reward, terminated, truncated, info = self.env.step(commands)
        resp = {
            "ok": True, "obs": obs, "reward": reward,
            "terminated": terminated, "truncated": truncated,
            "info": {k: info[k] for k in INFO_KEYS},
        }
        if self.trace:
            st = self.env.state
            resp["state"] = {"p": st.p, "quat": st.q, "nu": st.nu}
        return resp

    def op_close(self, req: dict) -> dict:
        return {"ok": True}

    # -- loop --------------------------------------------------------------
    def handle(self, line: str) -> tuple[dict, bool]:
        """Response dict plus a stop flag; errors become structured replies."""
        try:
            req = json.loads(line)
            if not isinstance(req, dict) or "op" not in req:
                raise ValueError("request must be an object with an 'op' field")
            op = req["op"]
            handler = getattr(self, f"op_{op}", None)
            if handler is None or op == "handle":
                raise ValueError(f"unknown op '{op}'")
            return handler(req), op == "close"
        except Exception as exc:  # never crash the host on a bad request
            return {"ok": False, "error": {"type": type(exc).__name__,
                                           "message": str(exc)}}, False


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    host = Host()
    for line in stdin:
        if not line.strip():
            continue
        resp, stop = host.handle(line)
        stdout.write(dump_line(resp) + "\n")
        stdout.flush()
        if stop:
            break


def main() -> int:
    serve()
    return 0


if __name__ == "__main__":
    sys.exit(main())

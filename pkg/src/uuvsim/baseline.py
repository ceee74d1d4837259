"""Derivative-free policy-search baseline and the sim-to-sim evaluation protocol.

The learner is a plain cross-entropy method over an affine policy with tanh
squashing: candidates are drawn from a diagonal Gaussian over the parameter
vector, each candidate is scored by its mean undiscounted episodic return
over a contiguous slot of the environment batch, and the Gaussian is refit
on the elite set.  Everything is deterministic given the seeds: candidate
draws come from the training seed, episode draws from the environment's
counter-based substreams.

Evaluation runs a fixed number of independent trials (episodes), collects
each episode's task metric at its first finish, and reports mean, standard
deviation, and success rate.  `dr_ablation` trains one policy without
parameter randomization and one with it, then scores both under the two
held-out point presets, mirroring the DR-versus-NDR comparison layout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import SimConfig
from .randomization import preset
from .tasks import STATION_KEEPING, TaskConfig, VecTaskEnv, make_env

POLICY_SCHEMA_VERSION = 1


class BaselineError(ValueError):
    pass


@dataclass
class Policy:
    """Affine map observation -> pre-command, squashed by tanh to [-1, 1]."""

    weights: np.ndarray  # (action_dim, obs_dim)
    bias: np.ndarray  # (action_dim,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise BaselineError(
                f"policy shape mismatch: weights {self.weights.shape}, bias {self.bias.shape}")

    @property
    def obs_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def action_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        return np.tanh(obs @ self.weights.T + self.bias)

    def theta(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    @classmethod
    def from_theta(cls, theta: np.ndarray, obs_dim: int, action_dim: int) -> "Policy":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (action_dim * obs_dim + action_dim,):
            raise BaselineError(
                f"theta length {theta.shape} does not match "
                f"obs_dim={obs_dim}, action_dim={action_dim}")
        w = theta[: action_dim * obs_dim].reshape(action_dim, obs_dim)
        return cls(weights=w, bias=theta[action_dim * obs_dim:])

    @classmethod
    def zeros(cls, obs_dim: int, action_dim: int) -> "Policy":
        return cls(weights=np.zeros((action_dim, obs_dim)), bias=np.zeros(action_dim))


def save_policy(path, policy: Policy, meta: dict | None = None):
    doc = {
        "schema_version": POLICY_SCHEMA_VERSION,
        "obs_dim": policy.obs_dim,
        "action_dim": policy.action_dim,
        "theta": [float(x) for x in policy.theta()],
    }
    if meta:
        doc["meta"] = meta
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_policy(path) -> Policy:
    with open(path) as f:
        doc = json.load(f)
    try:
        return Policy.from_theta(np.asarray(doc["theta"], dtype=float),
                                 int(doc["obs_dim"]), int(doc["action_dim"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise BaselineError(f"{path}: not a valid policy file ({exc})") from exc


def _rollout_returns(env: VecTaskEnv, act_fn) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One episode for every row: (return, first-finish metric, success)."""
    obs = env.reset()
    n = env.n_envs
    returns = np.zeros(n)
    metric = np.zeros(n)
    success = np.zeros(n, dtype=bool)
    pending = np.ones(n, dtype=bool)
    for _ in range(env.task.episode_length):
        obs, reward, terminated, truncated, info = env.step(act_fn(obs))
        returns += reward * pending
        finish = (terminated | truncated) & pending
        if finish.any():
            metric[finish] = info["metric"][finish]
            success[finish] = info["success"][finish]
            pending &= ~finish
        if not pending.any():
            break
    return returns, metric, success


@dataclass
class CemResult:
    policy: Policy
    curve: list  # one dict per iteration
    best_return: float


def cem_train(env: VecTaskEnv, population: int = 24, elite_frac: float = 0.25,
              iterations: int = 50, seed: int = 0, init_std: float = 0.5,
              init_policy: Policy | None = None) -> CemResult:
    """Cross-entropy policy search over contiguous environment slots."""
    if population < 10:
        raise BaselineError(f"population must be >= 10, got {population}")
    if not 0.0 < elite_frac < 1.0:
        raise BaselineError(f"elite_frac must be in (0, 1), got {elite_frac}")
    if env.n_envs < population:
        raise BaselineError(
            f"batch size {env.n_envs} smaller than population {population}")
    slot = env.n_envs // population
    used = slot * population
    obs_dim, act_dim = env.obs_dim, env.action_dim
    n_params = act_dim * obs_dim + act_dim
    mean = (init_policy.theta() if init_policy is not None
            else Policy.zeros(obs_dim, act_dim).theta())
    if init_policy is not None and mean.shape != (n_params,):
        raise BaselineError("init_policy does not match the environment's shapes")
    std = np.full(n_params, float(init_std))
    n_elite = max(1, int(population * elite_frac))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))

    best_theta = mean.copy()
    best_return = -math.inf
    curve = []
    for it in range(iterations):
        thetas = mean + std * rng.standard_normal((population, n_params))
        w = thetas[:, : act_dim * obs_dim].reshape(population, act_dim, obs_dim)
        b = thetas[:, act_dim * obs_dim:]

        def act(obs):
            x = obs[:used].reshape(population, slot, obs_dim)
            pre = np.einsum("pso,pao->psa", x, w) + b[:, None, :]
            cmd = np.zeros((env.n_envs, act_dim))
            cmd[:used] = np.tanh(pre).reshape(used, act_dim)
            return cmd

        returns, _, _ = _rollout_returns(env, act)
        fitness = returns[:used].reshape(population, slot).mean(axis=1)
        order = np.argsort(-fitness)
        elite = thetas[order[:n_elite]]
        mean = elite.mean(axis=0)
        std = elite.std(axis=0)
        it_best = int(order[0])
        if fitness[it_best] > best_return:
            best_return = float(fitness[it_best])
            best_theta = thetas[it_best].copy()
        curve.append({
            "iteration": it,
            "mean_return": float(fitness.mean()),
            "elite_return": float(fitness[order[:n_elite]].mean()),
            "best_return": float(best_return),
        })
    return CemResult(policy=Policy.from_theta(best_theta, obs_dim, act_dim),
                     curve=curve, best_return=best_return)


@dataclass
class EvalCell:
    label: str
    n_trials: int
    mean_error: float
    std_error: float
    success_rate: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_trials": self.n_trials,
            "mean_error": self.mean_error,
            "std_error": self.std_error,
            "success_rate": self.success_rate,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalCell":
        return cls(label=doc["label"], n_trials=int(doc["n_trials"]),
                   mean_error=float(doc["mean_error"]),
                   std_error=float(doc["std_error"]),
                   success_rate=float(doc["success_rate"]))


@dataclass
class EvalReport:
    task: str
    vehicle: str
    metric_name: str
    metric_unit: str = "m"  # error metrics are metres (documented assumption)
    cells: list = field(default_factory=list)

    def cell(self, label: str) -> EvalCell:
        for c in self.cells:
            if c.label == label:
                return c
        raise KeyError(f"no cell labelled '{label}'")

    def to_records(self) -> list:
        head = {"task": self.task, "vehicle": self.vehicle,
                "metric": self.metric_name, "unit": self.metric_unit}
        return [dict(head, **c.to_dict()) for c in self.cells]

    @classmethod
    def from_records(cls, rows: list) -> "EvalReport":
        if not rows:
            raise BaselineError("empty evaluation records")
        first = rows[0]
        rep = cls(task=first["task"], vehicle=first["vehicle"],
                  metric_name=first["metric"], metric_unit=first["unit"])
        rep.cells = [EvalCell.from_dict(r) for r in rows]
        return rep

    def to_table(self) -> str:
        width = max([len(c.label) for c in self.cells] + [8])
        unit = self.metric_unit
        lines = [
            f"task: {self.task}  vehicle: {self.vehicle}  metric: {self.metric_name} [{unit}]",
            f"{'cell'.ljust(width)}  {'mean'.rjust(10)}  {'std'.rjust(10)}  "
            f"{'success'.rjust(8)}  trials",
        ]
        for c in self.cells:
            lines.append(
                f"{c.label.ljust(width)}  {c.mean_error:10.4f}  {c.std_error:10.4f}  "
                f"{c.success_rate:8.3f}  {c.n_trials:6d}")
        return "\n".join(lines)


def evaluate(policy: Policy, env: VecTaskEnv, n_trials: int = 500,
             label: str = "eval") -> EvalCell:
    """Mean/std of the task metric over n_trials independent episodes."""
    if n_trials < 1:
        raise BaselineError(f"n_trials must be >= 1, got {n_trials}")
    if (policy.obs_dim, policy.action_dim) != (env.obs_dim, env.action_dim):
        raise BaselineError(
            f"policy shapes ({policy.obs_dim}, {policy.action_dim}) do not match "
            f"environment ({env.obs_dim}, {env.action_dim})")
    metrics = []
    successes = []
    rounds = math.ceil(n_trials / env.n_envs)
    for _ in range(rounds):
        _, metric, success = _rollout_returns(env, policy)
        metrics.append(metric)
        successes.append(success)
    metric = np.concatenate(metrics)[:n_trials]
    success = np.concatenate(successes)[:n_trials]
    return EvalCell(label=label, n_trials=n_trials,
                    mean_error=float(metric.mean()),
                    std_error=float(metric.std()),
                    success_rate=float(success.mean()))


TEST_ENV_PRESETS = ("test_env1", "test_env2")


def _eval_env_for(task: TaskConfig, test_env: str, batch: int, seed: int) -> VecTaskEnv:
    from dataclasses import replace

    cfg = replace(task, level="disturbed_dr")
    return make_env(cfg, SimConfig(batch_size=batch), dr=preset(test_env), seed=seed)


def dr_ablation(task: TaskConfig | None = None, vehicle: str = "bluerov_heavy",
                seed: int = 0, train_batch: int = 512, eval_batch: int = 250,
                population: int = 32, iterations: int = 60,
                n_trials: int = 500) -> EvalReport:
    """Train with and without parameter randomization; score on held-out envs.

    Returns the four-cell comparison: {ndr, dr} x {test_env1, test_env2},
    all derived deterministically from `seed`.
    """
    from dataclasses import replace

    if task is None:
        task = TaskConfig(task=STATION_KEEPING, vehicle=vehicle)
    policies = {}
    for name, level, dr in (("ndr", "standard", None),
                            ("dr", "disturbed_dr", preset("train"))):
        env = make_env(replace(task, level=level), SimConfig(batch_size=train_batch),
                       dr=dr, seed=seed)
        policies[name] = cem_train(env, population=population,
                                   iterations=iterations, seed=seed).policy
    report = None
    for name in ("ndr", "dr"):
        for test_env in TEST_ENV_PRESETS:
            env = _eval_env_for(task, test_env, eval_batch, seed + 1)
            cell = evaluate(policies[name], env, n_trials=n_trials,
                            label=f"{name}/{test_env}")
            if report is None:
                report = EvalReport(task=task.task, vehicle=task.vehicle,
                                    metric_name=env.metric_name)
            report.cells.append(cell)
    return report

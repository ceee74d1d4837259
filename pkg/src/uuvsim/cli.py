"""Operator entry point: benchmarking, training, evaluation, randomization
checks, and trajectory export.

Every flag with a default can also be set through an ``UUVSIM_``-prefixed
environment variable (e.g. ``UUVSIM_VEHICLE=lauv``); an explicit flag wins
over the variable, the variable over the built-in default.  All commands
emit either a human table or line-delimited records (``--format``), and any
file output gets a sibling run manifest sufficient to reproduce it.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime
divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import (
    EvalReport,
    Policy,
    cem_train,
    evaluate,
    load_policy,
    save_policy,
)
from .engine import SimConfig, throughput_probe
from .kinematics import quat_to_euler
from .randomization import empirical_check, preset
from .records import (
    RunManifest,
    format_records,
    save_manifest,
    write_records,
)
from .tasks import (
    LEVEL_DISTURBED_DR,
    METRIC_DEFINITIONS,
    STATION_KEEPING,
    TASK_KINDS,
    TaskConfig,
    make_env,
)
from .vehicles import BUILTIN_VEHICLES, load_vehicle

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DIVERGED = 3

ENV_PREFIX = "UUVSIM_"

TEST_ENV_CHOICES = ("env1", "env2")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 2 for
    validation, so remap usage problems to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")


def _arg(parser, *flags, default=None, type=str, **kw):
    """Add an option whose default resolves flag > UUVSIM_<DEST> > default."""
    action = parser.add_argument(*flags, default=None, type=type, **kw)
    fields = parser.get_default("_env_fields") or []
    fields.append((action.dest, type, default))
    parser.set_defaults(_env_fields=fields)
    return action


def _apply_env_defaults(args: argparse.Namespace) -> None:
    for dest, cast, default in getattr(args, "_env_fields", []):
        if getattr(args, dest) is not None:
            continue
        raw = os.environ.get(ENV_PREFIX + dest.upper())
        setattr(args, dest, cast(raw) if raw is not None else default)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_manifest.json")


def _emit(args, kind: str, rows: list[dict], meta: dict,
          columns: list[tuple[str, str]]) -> None:
    """Print rows in the selected format; write records + manifest if --out."""
    if args.format == "records":
        for line in format_records(kind, rows, meta):
            print(line)
    else:
        print(_table(columns, rows))
    if getattr(args, "out", None):
        write_records(args.out, kind, rows, meta)


def _table(columns: list[tuple[str, str]], rows: list[dict]) -> str:
    """columns: (key, header); floats rendered to 6 significant digits."""

    def cell(row, key):
        v = row.get(key)
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    headers = [h for _, h in columns]
    rendered = [[cell(r, k) for k, _ in columns] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in rendered)) if rendered else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for r in rendered:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def _write_manifest(args, command: str, config: dict, seed: int,
                    started: str, out: str | Path) -> None:
    manifest = RunManifest(command=[command], config=config, seed=seed,
                           started=started, finished=_now())
    save_manifest(_manifest_path(out), manifest)


# -- bench -----------------------------------------------------------------

def cmd_bench(args) -> int:
    started = _now()
    vehicle = load_vehicle(args.vehicle)
    rows = []
    for n in args.envs:
        sim = SimConfig(dt=args.dt, substeps=args.substeps, batch_size=n,
                        workers=min(args.workers, n))
        report = throughput_probe(sim, vehicle, duration=args.duration,
                                  seed=args.seed)
        rows.append(dataclasses.asdict(report))
    meta = {
        "command": "bench", "vehicle": args.vehicle, "duration_s": args.duration,
        "dt": args.dt, "substeps": args.substeps, "seed": args.seed,
    }
    _emit(args, "throughput", rows, meta, [
        ("batch_size", "batch_size"), ("workers", "workers"),
        ("n_steps", "steps"), ("elapsed_s", "elapsed_s"),
        ("aggregate_steps_per_s", "aggregate_steps/s"),
        ("per_env_steps_per_s", "per_env_steps/s"),
        ("diverged_envs", "diverged"),
    ])
    if args.out:
        _write_manifest(args, "bench", {**meta, "envs": args.envs},
                        args.seed, started, args.out)
    if any(r["diverged_envs"] for r in rows):
        print("error: environments diverged during benchmarking", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


# -- train -------------------------------------------------------------------

def _task_config(args) -> TaskConfig:
    return TaskConfig(task=args.task, vehicle=args.vehicle, level=args.level)


def cmd_train(args) -> int:
    started = _now()
    task = _task_config(args)
    sim = SimConfig(batch_size=args.envs, workers=args.workers)
    dr = preset(args.dr_preset) if args.dr_preset else None
    env = make_env(task, sim, dr=dr, seed=args.seed)
    result = cem_train(env, population=args.population,
                       elite_frac=args.elite_frac, iterations=args.iterations,
                       seed=args.seed)

    out = Path(args.out)
    save_policy(out, result.policy)
    curve_path = out.with_name(out.stem + "_curve.jsonl")
    meta = {
        "command": "train", "task": args.task, "vehicle": args.vehicle,
        "level": args.level, "dr_preset": args.dr_preset, "seed": args.seed,
        "population": args.population, "iterations": args.iterations,
    }
    write_records(curve_path, "curve", result.curve, meta)
    config = {
        "task": dataclasses.asdict(task), "sim": dataclasses.asdict(sim),
        "dr_preset": args.dr_preset, "population": args.population,
        "elite_frac": args.elite_frac, "iterations": args.iterations,
        "policy_file": str(out), "curve_file": str(curve_path),
    }
    _write_manifest(args, "train", config, args.seed, started, out)

    if args.format == "records":
        for line in format_records("curve", result.curve, meta):
            print(line)
    else:
        print(_table([("iteration", "iteration"), ("mean_return", "mean_return"),
                      ("elite_return", "elite_return"), ("best_return", "best_return")],
                     result.curve))
        print(f"policy: {out}")
    return EXIT_OK


# -- eval --------------------------------------------------------------------

def _eval_env(args, task: TaskConfig):
    if args.test_env:
        task = dataclasses.replace(task, level=LEVEL_DISTURBED_DR)
        dr = preset({"env1": "test_env1", "env2": "test_env2"}[args.test_env])
    else:
        dr = None
    sim = SimConfig(batch_size=args.envs, workers=args.workers)
    return make_env(task, sim, dr=dr, seed=args.seed)


def cmd_eval(args) -> int:
    started = _now()
    policy = load_policy(args.policy)
    task = _task_config(args)
    env = _eval_env(args, task)
    label = args.test_env or args.level
    cell = evaluate(policy, env, n_trials=args.trials, label=label)
    report = EvalReport(task=task.task, vehicle=task.vehicle,
                        metric_name=env.metric_name, cells=[cell])
    meta = {
        "command": "eval", "task": args.task, "vehicle": args.vehicle,
        "level": args.level, "test_env": args.test_env, "trials": args.trials,
        "seed": args.seed, "policy_file": args.policy,
        "metric": {"name": env.metric_name, "unit": report.metric_unit,
                   "definition": METRIC_DEFINITIONS[env.metric_name]},
    }
    rows = report.to_records()
    if args.format == "records":
        for line in format_records("evaluation", rows, meta):
            print(line)
    else:
        print(report.to_table())
    if args.out:
        write_records(args.out, "evaluation", rows, meta)
        _write_manifest(args, "eval", meta, args.seed, started, args.out)
    return EXIT_OK


# -- rollout -------------------------------------------------------------------

def cmd_rollout(args) -> int:
    started = _now()
    task = _task_config(args)
    sim = SimConfig(batch_size=args.envs, workers=args.workers)
    env = make_env(task, sim, seed=args.seed)
    policy: Policy | None = load_policy(args.policy) if args.policy else None

    obs = env.reset()
    st = env.state
    rows, diverged = [], False
    for step in range(args.steps):
        u = policy(obs) if policy else np.zeros((args.envs, env.action_dim))
        obs, reward, _term, _trunc, info = env.step(u)
        diverged = diverged or bool(info["diverged"].any())
        # the batch state is live; snapshot before the next step overwrites it
        p, quat, nu = st.p.copy(), st.q.copy(), st.nu.copy()
        euler = quat_to_euler(quat)
        t = st.steps * env.sim.dt
        for i in range(args.envs):
            rows.append({
                "env": i, "step": step, "t": t[i], "p": p[i],
                "quat": quat[i], "euler": euler[i], "nu": nu[i],
                "commands": u[i], "reward": reward[i],
            })
    meta = {
        "command": "rollout", "task": args.task, "vehicle": args.vehicle,
        "level": args.level, "seed": args.seed, "dt": env.sim.dt,
        "envs": args.envs, "steps": args.steps, "policy_file": args.policy,
        "metric": {"name": env.metric_name, "unit": "m",
                   "definition": METRIC_DEFINITIONS[env.metric_name]},
    }
    if args.out:
        write_records(args.out, "trajectory", rows, meta)
        _write_manifest(args, "rollout", meta, args.seed, started, args.out)
        if args.format == "table":
            print(f"wrote {len(rows)} records to {args.out}")
    if args.format == "records" or not args.out:
        for line in format_records("trajectory", rows, meta):
            print(line)
    if diverged:
        print("error: environments diverged during rollout", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


# -- dr-check ------------------------------------------------------------------

def cmd_dr_check(args) -> int:
    started = _now()
    spec = preset(args.preset)
    rng = np.random.default_rng(args.seed)
    summaries = empirical_check(spec, args.samples, rng=rng)
    rows, failures = [], []
    for key, s in summaries.items():
        lo, hi = spec[key].distribution.support()
        ok = lo <= s.min and s.max <= hi
        if not ok:
            failures.append(f"{key}: draws [{s.min:.6g}, {s.max:.6g}] escape "
                            f"support [{lo:.6g}, {hi:.6g}]")
        if type(spec[key].distribution).__name__ == "Uniform" and hi > lo:
            drift = abs(s.mean - 0.5 * (lo + hi))
            if drift > 0.005 * (hi - lo):
                ok = False
                failures.append(f"{key}: mean {s.mean:.6g} drifts "
                                f"{drift:.3g} from the uniform midpoint")
        rows.append({
            "key": key, "n": s.n, "min": s.min, "max": s.max, "mean": s.mean,
            "support_lo": lo, "support_hi": hi, "ok": ok,
            "hist_counts": s.hist_counts, "hist_edges": s.hist_edges,
        })
    meta = {"command": "dr-check", "preset": args.preset,
            "samples": args.samples, "seed": args.seed}
    _emit(args, "dr_check", rows, meta, [
        ("key", "key"), ("n", "n"), ("min", "min"), ("max", "max"),
        ("mean", "mean"), ("support_lo", "support_lo"),
        ("support_hi", "support_hi"), ("ok", "ok"),
    ])
    if args.out:
        _write_manifest(args, "dr-check", meta, args.seed, started, args.out)
    if failures:
        for f in failures:
            print(f"error: {f}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="uuvsim", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, vehicle="bluerov", envs=256, out=None):
        _arg(p, "--vehicle", default=vehicle,
             help=f"built-in name {BUILTIN_VEHICLES} or a config file path")
        _arg(p, "--envs", type=int, default=envs, help="batch size")
        _arg(p, "--seed", type=int, default=0)
        _arg(p, "--workers", type=int, default=1, help="worker-thread cap")
        _arg(p, "--format", default="table", choices=["table", "records"])
        _arg(p, "--out", default=out, help="records file (manifest written beside it)")

    def task_common(p):
        _arg(p, "--task", default=STATION_KEEPING, choices=list(TASK_KINDS))
        _arg(p, "--level", default="standard",
             choices=["standard", "disturbed", "disturbed_dr"])

    p = sub.add_parser("bench", help="throughput benchmark")
    _arg(p, "--vehicle", default="bluerov_heavy")
    _arg(p, "--envs", type=_int_list, default=[2048],
         help="comma-separated batch sizes, e.g. 2048,4096,8192")
    _arg(p, "--duration", type=float, default=2.0, help="seconds per batch size")
    _arg(p, "--dt", type=float, default=0.02)
    _arg(p, "--substeps", type=int, default=1)
    _arg(p, "--seed", type=int, default=0)
    _arg(p, "--workers", type=int, default=1)
    _arg(p, "--format", default="table", choices=["table", "records"])
    _arg(p, "--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="train the derivative-free baseline")
    common(p, envs=512, out="policy.json")
    task_common(p)
    _arg(p, "--dr-preset", default=None,
         choices=["train", "test_env1", "test_env2"])
    _arg(p, "--population", type=int, default=32)
    _arg(p, "--iterations", type=int, default=60)
    _arg(p, "--elite-frac", type=float, default=0.25)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved policy")
    common(p, envs=250)
    task_common(p)
    p.add_argument("--policy", required=True, help="policy file from train")
    _arg(p, "--test-env", default=None, choices=list(TEST_ENV_CHOICES),
         help="held-out point setting (implies level disturbed_dr)")
    _arg(p, "--trials", type=int, default=500)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="export trajectory records")
    common(p, envs=4)
    task_common(p)
    _arg(p, "--policy", default=None, help="optional policy file; zero commands otherwise")
    _arg(p, "--steps", type=int, default=200)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("dr-check", help="empirical check of a randomization preset")
    _arg(p, "--preset", default="train",
         choices=["train", "test_env1", "test_env2"])
    _arg(p, "--samples", type=int, default=100_000)
    _arg(p, "--seed", type=int, default=0)
    _arg(p, "--format", default="table", choices=["table", "records"])
    _arg(p, "--out", default=None)
    p.set_defaults(func=cmd_dr_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_env_defaults(args)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

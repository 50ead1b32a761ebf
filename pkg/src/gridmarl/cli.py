"""Command line entry point: ``gridmarl {train,eval,benchmark,sweep,dispatch-solve}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .benchmark import compare, compare_csv, run_benchmark
from .config import ScenarioSpec, load_spec, resolved_json
from .dispatch import CostModel, solve_dispatch
from .env import ConfigError
from .maddpg import MADDPG, CheckpointError, evaluate, hold_policy, rollout, train
from .scenarios import PRESETS
from .trace import EpisodeTrace, episode_metrics, learning_curve_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario file (.ini or .json)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="base system when the config names none")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--episodes", type=int, help="training episodes")
    p.add_argument("--grc", type=float, help="per-step action bound dz_max (pu)")
    p.add_argument("--wind", action="store_true", default=None, help="enable the wind disturbance")
    p.add_argument("--model", type=int, choices=(1, 2), help="plant model")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridmarl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a MADDPG team; writes checkpoint and learning curve")
    _common(p)

    p = sub.add_parser("eval", help="roll out a checkpoint (or droop only) on a disturbance scenario")
    _common(p)
    p.add_argument("--checkpoint", help="trained team (.npz); omit for droop-only response")
    p.add_argument("--scenario", choices=("step", "churn"), default="step")

    p = sub.add_parser("benchmark", help="run the primal-dual controller and compare with an RL trace")
    _common(p)
    p.add_argument("--scenario", choices=("step", "churn"), default="step")
    p.add_argument("--rl-trace", help="evaluation trace CSV to compare against")

    p = sub.add_parser("sweep", help="train and evaluate once per GRC bound and seed")
    _common(p)
    p.add_argument("--scenario", choices=("step", "churn"), default="step")

    p = sub.add_parser("dispatch-solve", help="economic dispatch for quadratic costs")
    p.add_argument("--config", help="scenario file with a [costs] section")
    p.add_argument("--a", help="comma list of quadratic coefficients")
    p.add_argument("--beta", help="comma list of linear coefficients")
    p.add_argument("--load", type=float, required=True, help="total load (pu)")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--out", help="write the result JSON here instead of stdout")
    return ap


def _spec(args) -> ScenarioSpec:
    over = {
        "seed": args.seed,
        "episodes": args.episodes,
        "grc": args.grc,
        "wind": args.wind,
        "model": args.model,
        "preset": args.preset,
    }
    spec = load_spec(args.config, over)
    if getattr(args, "scenario", "step") == "churn" and spec.churn is None:
        spec = replace(spec, churn=0.1)
    return spec


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# --------------------------------------------------------------------------
# Commands


def cmd_train(args) -> int:
    spec = _spec(args)
    out = _outdir(args)
    result = train(spec.env, spec.train, progress=lambda ep, r: _log(f"episode {ep + 1}: reward {r:g}"))
    result.team.save(out / "checkpoint.npz")
    (out / "learning_curve.csv").write_text(learning_curve_csv(result.episode_rewards))
    (out / "resolved_config.json").write_text(resolved_json(spec) + "\n")
    _log(f"wrote {out / 'checkpoint.npz'} and {out / 'learning_curve.csv'}")
    return EXIT_OK


def _evaluate(spec: ScenarioSpec, checkpoint: str | None, seed: int, dz_max: float | None = None) -> EpisodeTrace:
    env_cfg = spec.eval_env(dz_max)
    if checkpoint is None:
        return rollout(env_cfg, hold_policy, seed)
    if not Path(checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {checkpoint}")
    team = MADDPG.load(checkpoint, env_cfg)
    team.dz_max = env_cfg.dz_max
    return evaluate(team, env_cfg, seed)


def cmd_eval(args) -> int:
    spec = _spec(args)
    out = _outdir(args)
    seed = spec.seeds[0]
    trace = _evaluate(spec, args.checkpoint, seed)
    trace.write_csv(out / "trace.csv")
    metrics = episode_metrics(trace, eps1=spec.env.eps1, costs=spec.env.costs)
    metrics["controller"] = "maddpg" if args.checkpoint else "droop"
    _write_json(out / "metrics.json", metrics)
    (out / "resolved_config.json").write_text(resolved_json(spec) + "\n")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    spec = _spec(args)
    out = _outdir(args)
    env_cfg = spec.eval_env()
    trace = run_benchmark(env_cfg, seed=spec.seeds[0])
    trace.write_csv(out / "benchmark_trace.csv")
    traces = {"primal_dual": trace}
    if args.rl_trace and Path(args.rl_trace).is_file():
        traces["maddpg"] = EpisodeTrace.read_csv(args.rl_trace, f_nom=env_cfg.f_nom)
    else:
        what = f"RL trace {args.rl_trace} not found" if args.rl_trace else "no RL trace given"
        _log(f"{what}; writing benchmark-only metrics")
    rows = compare(traces, eps1=env_cfg.eps1, costs=env_cfg.costs)
    (out / "compare.csv").write_text(compare_csv(rows))
    (out / "resolved_config.json").write_text(resolved_json(spec) + "\n")
    return EXIT_OK


def _sweep_job(job) -> dict:
    spec, bound, seed, out = job
    env = replace(spec.env, dz_max=bound)
    result = train(env, replace(spec.train, seed=seed))
    tag = f"grc{bound:g}_seed{seed}"
    (out / f"learning_curve_{tag}.csv").write_text(learning_curve_csv(result.episode_rewards))
    result.team.save(out / f"checkpoint_{tag}.npz")
    trace = evaluate(result.team, spec.eval_env(bound), seed)
    trace.write_csv(out / f"trace_{tag}.csv")
    m = episode_metrics(trace, eps1=env.eps1, costs=env.costs)
    return {"grc": bound, "seed": seed, **m}


def workers(n_jobs: int) -> int:
    cap = os.environ.get("GRIDMARL_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    if limit < 1:
        raise ConfigError("GRIDMARL_THREADS must be >= 1")
    return max(1, min(limit, n_jobs))


def cmd_sweep(args) -> int:
    spec = _spec(args)
    out = _outdir(args)
    jobs = [(spec, b, s, out) for b in spec.grc for s in spec.seeds]
    n = workers(len(jobs))
    if n == 1:
        results = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_sweep_job, jobs))
    _write_json(out / "sweep_metrics.json", results)
    (out / "resolved_config.json").write_text(resolved_json(spec) + "\n")
    return EXIT_OK


def cmd_dispatch(args) -> int:
    if args.config:
        costs = load_spec(args.config).env.costs
        if costs is None:
            raise ConfigError(f"{args.config} defines no [costs] section")
    elif args.a:
        a = [float(x) for x in args.a.split(",")]
        beta = [float(x) for x in args.beta.split(",")] if args.beta else None
        costs = CostModel.quadratic(a, beta)
    else:
        raise ConfigError("dispatch-solve needs --config or --a")
    res = solve_dispatch(costs, args.load, args.rho)
    obj = {"p_star": res.p_star.tolist(), "lambda": res.lam, "total_cost": res.total_cost}
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "benchmark": cmd_benchmark,
    "sweep": cmd_sweep,
    "dispatch-solve": cmd_dispatch,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, KeyError) as exc:
        _log(f"gridmarl: configuration error: {exc}")
        return EXIT_CONFIG
    except ValueError as exc:
        _log(f"gridmarl: invalid input: {exc}")
        return EXIT_CONFIG
    except (FloatingPointError, ArithmeticError) as exc:
        _log(f"gridmarl: numerical failure: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

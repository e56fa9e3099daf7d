"""Command-line harness: task generation, training, refinement, judging,
evaluation, the lambda sweep, and report aggregation.

Exit codes: 0 ok, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import urllib.request
from pathlib import Path

import numpy as np

from . import records
from .config import (
    ConfigError,
    RunConfig,
    config_from_text,
    config_to_text,
)
from .demo import flaw_prone_params
from .environment import make_corpus
from .judge import ExternalJudgeBackend, OracleJudgeBackend, oracle_judge, parse_judgment
from .metrics import format_metric, read_metrics
from .policy import init_params, load_params, save_params, snapshot
from .types import TaskFamily
from .variants import (
    TrainState,
    evaluate,
    paired_pass_rates,
    run_reagent_c,
    train_step,
)

DEFAULT_LAMBDA_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


def _http_transport(endpoint: str):
    def transport(request: dict) -> dict:
        data = json.dumps(request).encode()
        req = urllib.request.Request(
            endpoint, data=data, headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=request["timeout_s"]) as resp:
            return json.loads(resp.read())
    return transport


def _make_backend(cfg: RunConfig):
    if cfg.backend == "oracle":
        return OracleJudgeBackend(step_budget=cfg.max_steps_train)
    if cfg.backend == "external":
        if not cfg.judge_endpoint:
            raise ConfigError("external backend needs judge_endpoint "
                              "(flag or REAGENT_JUDGE_ENDPOINT)")
        return ExternalJudgeBackend(transport=_http_transport(cfg.judge_endpoint))
    raise ConfigError(f"unknown backend: {cfg.backend}")


def _families(cfg: RunConfig) -> tuple[TaskFamily, ...]:
    return tuple(TaskFamily(f) for f in cfg.families)


def _load_corpus(path: str):
    return [records.deserialize_task(line) for line in records.read_lines(path)]


def _train_corpus(cfg: RunConfig):
    if cfg.corpus:
        return _load_corpus(cfg.corpus)
    return make_corpus(10_000_000 + cfg.seed * 100_000, cfg.train_tasks,
                       _families(cfg))


def _eval_corpus(cfg: RunConfig):
    return make_corpus(20_000_000 + cfg.seed * 100_000, cfg.eval_tasks,
                       _families(cfg))


def _build_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = config_from_text(Path(args.config).read_text())
    else:
        cfg = RunConfig()
    overrides = {}
    for key in ("variant", "seed", "lam", "steps", "out_dir", "corpus",
                "backend", "judge_endpoint", "learning_rate", "feature_dim",
                "train_tasks", "eval_tasks", "batch_size", "group_size",
                "eval_k"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg.with_env_overrides()


def run_training(cfg: RunConfig, resume: bool = False) -> dict:
    """Train one variant into cfg.out_dir; returns the eval summary."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_to_text(cfg))
    tasks = _train_corpus(cfg)
    backend = _make_backend(cfg)
    tcfg = cfg.training_config()
    rcfg = cfg.reward_config()
    ckpt_path = out / "state.npz"
    metrics_path = out / "metrics.jsonl"
    if resume and ckpt_path.exists():
        state = TrainState.load(ckpt_path, optimizer=cfg.optimizer)
        _truncate_metrics(metrics_path, state.step)
    else:
        state = TrainState(params=init_params(cfg.feature_dim))
        metrics_path.write_text("")
    with open(metrics_path, "a", encoding="utf-8") as sink:
        while state.step < tcfg.steps:
            record = train_step(state, tasks, backend, tcfg, rcfg,
                                unified=(cfg.variant == "u"))
            record.pop("judge_failures", None)
            sink.write(format_metric(record))
            sink.flush()
            if state.step % cfg.checkpoint_every == 0:
                state.save(ckpt_path)
    state.save(ckpt_path)
    save_params(state.params, out / "final.ckpt")
    result = evaluate(state.params, _eval_corpus(cfg), k=cfg.eval_k,
                      temperature=cfg.temperature_eval,
                      max_steps=cfg.max_steps_eval, max_len=cfg.max_len,
                      seed=cfg.seed)
    summary = {
        "variant": cfg.variant,
        "seed": cfg.seed,
        "lambda": rcfg.lam,
        "pass@1": result.pass_at_1,
        f"pass@{cfg.eval_k}": result.pass_at_k,
        "per_family": result.per_family,
    }
    (out / "eval.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _truncate_metrics(path: Path, keep_steps: int) -> None:
    if not path.exists():
        path.write_text("")
        return
    result = read_metrics(path)
    kept = [r for r in result.records if r["step"] < keep_steps]
    with open(path, "w", encoding="utf-8") as fh:
        for record in kept:
            fh.write(format_metric(record))


def cmd_gen_tasks(args) -> int:
    families = tuple(TaskFamily(f) for f in args.families.split(","))
    tasks = make_corpus(args.seed, args.count, families)
    records.write_records(args.out, (records.serialize_task(t) for t in tasks))
    print(f"wrote {len(tasks)} tasks to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _build_config(args)
    if cfg.variant == "c":
        raise ConfigError("use the 'refine' subcommand for the frozen variant")
    summary = run_training(cfg, resume=args.resume)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_refine(args) -> int:
    cfg = _build_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.checkpoint:
        params = load_params(args.checkpoint)
    elif getattr(args, "feature_dim", None):
        params = flaw_prone_params(args.feature_dim)
    else:
        # the built-in demo policy is tuned for its own (wider) feature space
        params = flaw_prone_params()
    frozen = snapshot(params)
    tasks = _load_corpus(cfg.corpus) if cfg.corpus else _train_corpus(cfg)
    report = run_reagent_c(frozen, tasks, _make_backend(cfg),
                           temperature=cfg.temperature_eval,
                           max_steps=cfg.max_steps_eval,
                           max_len=cfg.max_len, seed=cfg.seed)
    with open(out / "paired.jsonl", "w", encoding="utf-8") as fh:
        for row in report.paired_outcomes:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    first, second = paired_pass_rates(report)
    summary = {
        "variant": "c",
        "pass@1_first": first,
        "pass@1_refined": second,
        "per_family_refined": report.family_pass1,
        "judge_failures": report.judge_failures,
        "params_unchanged": report.checksum_before == report.checksum_after,
    }
    (out / "refine.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_judge(args) -> int:
    tasks = {t.id: t for t in _load_corpus(args.corpus)}
    out_lines = []
    for line in records.read_lines(args.trajectories):
        traj = records.deserialize_trajectory(line)
        if traj.task_id not in tasks:
            raise ConfigError(f"trajectory references unknown task {traj.task_id}")
        judgment = parse_judgment(oracle_judge(tasks[traj.task_id], traj))
        out_lines.append(records.serialize_judgment(judgment, traj.task_id))
    records.write_records(args.out, out_lines)
    print(f"judged {len(out_lines)} trajectories -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _build_config(args)
    params = load_params(args.checkpoint)
    tasks = _load_corpus(cfg.corpus) if cfg.corpus else _eval_corpus(cfg)
    result = evaluate(params, tasks, k=cfg.eval_k,
                      temperature=cfg.temperature_eval,
                      max_steps=cfg.max_steps_eval, max_len=cfg.max_len,
                      seed=cfg.seed)
    print(json.dumps({
        "pass@1": result.pass_at_1,
        f"pass@{result.k}": result.pass_at_k,
        "per_family": result.per_family,
    }, indent=2))
    return 0


def cmd_sweep_lambda(args) -> int:
    cfg = _build_config(args)
    values = tuple(float(v) for v in args.values.split(","))
    seeds = tuple(int(s) for s in args.seeds.split(","))
    if any(v < 0 for v in values):
        raise ConfigError("lambda values must be >= 0")
    rows = []
    for lam in values:
        for seed in seeds:
            run_cfg = dataclasses.replace(
                cfg, variant="r", lam=lam, seed=seed,
                out_dir=str(Path(cfg.out_dir) / f"lambda_{lam:g}" / f"seed_{seed}"),
            )
            summary = run_training(run_cfg)
            rows.append({"lambda": lam, "seed": seed,
                         "pass@1": summary["pass@1"]})
    table_path = Path(cfg.out_dir) / "sweep.json"
    table_path.parent.mkdir(parents=True, exist_ok=True)
    table_path.write_text(json.dumps(rows, indent=2) + "\n")
    print(f"{'lambda':>8} {'mean pass@1':>12}")
    for lam in values:
        vals = [r["pass@1"] for r in rows if r["lambda"] == lam]
        print(f"{lam:>8g} {float(np.mean(vals)):>12.4f}")
    return 0


def cmd_report(args) -> int:
    root = Path(args.dir)
    summaries = sorted(root.rglob("eval.json"))
    if not summaries:
        print("no runs found")
        return 0
    print(f"{'run':<40} {'variant':>8} {'lambda':>7} {'pass@1':>8}")
    for path in summaries:
        data = json.loads(path.read_text())
        name = str(path.parent.relative_to(root)) or "."
        print(f"{name:<40} {data['variant']:>8} {data['lambda']:>7g} "
              f"{data['pass@1']:>8.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reagent")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-tasks", help="emit a task corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--families", default="arithmetic,lookup,file_extract,multi_hop")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_tasks)

    def add_config_flags(p):
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--out", dest="out_dir")
        p.add_argument("--corpus")
        p.add_argument("--backend")
        p.add_argument("--judge-endpoint", dest="judge_endpoint")
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--feature-dim", dest="feature_dim", type=int)
        p.add_argument("--train-tasks", dest="train_tasks", type=int)
        p.add_argument("--eval-tasks", dest="eval_tasks", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--group-size", dest="group_size", type=int)
        p.add_argument("--eval-k", dest="eval_k", type=int)

    p = sub.add_parser("train", help="train the r, u, or baseline variant")
    p.add_argument("--variant", choices=("r", "u", "baseline"))
    p.add_argument("--resume", action="store_true")
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("refine", help="frozen two-pass critique refinement")
    p.add_argument("--checkpoint")
    add_config_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("judge", help="score a trajectory file with the oracle judge")
    p.add_argument("--corpus", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-lambda", help="train across a lambda grid")
    p.add_argument("--values", default=",".join(str(v) for v in DEFAULT_LAMBDA_GRID))
    p.add_argument("--seeds", default="0,1,2,3,4")
    add_config_flags(p)
    p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("report", help="aggregate run summaries")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

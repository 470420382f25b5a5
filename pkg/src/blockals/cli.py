"""Benchmark driver: training runs with structured per-epoch logs and sweeps.

Logs are JSON lines: one self-describing object per record. Each run starts
with a ``config`` record followed by one ``epoch`` record per epoch. The
schema is append-only; existing keys are never renamed. ``train_seconds``
never includes evaluation time, which is reported separately.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from dataclasses import dataclass

import numpy as np

from .data import synthetic_interactions
from .metrics import evaluate_holdout
from .model import SolverConfig, init_model
from .pipeline import load_interactions, load_split_files, split_holdout, write_id_map
from .solvers import iterate_epochs

__all__ = [
    "ExperimentConfig",
    "BENCHMARK_PRESETS",
    "run_experiment",
    "emit_metrics_log",
    "read_metrics_log",
    "summarize_sweep",
    "main",
]

# Published benchmark settings these datasets are commonly run with.
BENCHMARK_PRESETS = {
    "ml20m": {"reg": 0.003, "alpha0": 0.1, "epochs": 16},
    "msd": {"reg": 0.002, "alpha0": 0.02, "epochs": 16},
}

_EPOCH_KEYS = ("record", "repeat", "epoch", "train_seconds",
               "gramian_seconds", "solve_seconds", "cache_seconds")


@dataclass
class ExperimentConfig:
    """One benchmark invocation, possibly sweeping dims and block sizes."""

    train_data: str | None = None
    holdout_input: str | None = None
    holdout_target: str | None = None
    synthetic: tuple | None = None   # (users, items, per_user, rank, noise)
    solver: str = "ialspp"
    dims: tuple = (64,)
    block_sizes: tuple = (None,)     # ints, None (auto) or "d" (full dim)
    alpha0: float = 0.1
    reg: float = 0.003
    reg_exp: float = 1.0
    stddev: float = 0.1
    epochs: int = 16
    eval_every: int = 1
    threads: int = 0
    seed: int = 0
    repeats: int = 1
    holdout_fraction: float = 0.1
    target_fraction: float = 0.2
    log_loss: bool = False
    output: str = "-"

    def __post_init__(self):
        if not self.dims or not self.block_sizes:
            raise ValueError("sweep lists must be nonempty")
        if self.epochs < 0 or self.repeats < 1 or self.eval_every < 0:
            raise ValueError("epochs must be >= 0, repeats >= 1, eval_every >= 0")


def _load_split(config: ExperimentConfig, seed):
    if config.synthetic is not None and config.train_data is not None:
        raise ValueError("give either --synthetic or dataset paths, not both")
    if config.synthetic is not None:
        users, items, per_user, rank, noise = config.synthetic
        data, _, _ = synthetic_interactions(users, items, per_user, rank, noise, seed)
        return split_holdout(data, config.holdout_fraction, seed,
                             target_fraction=config.target_fraction), None
    if config.train_data is None:
        raise ValueError("no input data: give --synthetic or --train_data")
    if (config.holdout_input is None) != (config.holdout_target is None):
        raise ValueError("--holdout_input and --holdout_target go together")
    if config.holdout_input is not None:
        return load_split_files(config.train_data, config.holdout_input,
                                config.holdout_target), None
    raw = load_interactions(config.train_data)
    split = split_holdout(raw.to_dataset(), config.holdout_fraction, seed,
                          target_fraction=config.target_fraction)
    return split, raw


def _resolve_block(block, dim):
    if block is None:
        return min(64, dim)
    if block == "d":
        return dim
    return int(block)


def run_experiment(config: ExperimentConfig):
    """Yield one record dict per config and per finished epoch.

    Sweeps the cartesian product of ``dims`` and ``block_sizes`` and repeats
    each combination ``repeats`` times with shifted seeds; use
    :func:`summarize_sweep` on the emitted logs to aggregate.
    """
    for dim in config.dims:
        for block in config.block_sizes:
            for repeat in range(config.repeats):
                seed = config.seed + repeat
                split, raw = _load_split(config, seed)
                solver_config = SolverConfig(
                    dim=int(dim), block_size=_resolve_block(block, int(dim)),
                    solver=config.solver, unobserved_weight=config.alpha0,
                    reg=config.reg, reg_exponent=config.reg_exp,
                    init_stddev=config.stddev, epochs=config.epochs,
                    threads=config.threads, seed=seed)
                data = split.train
                yield {
                    "record": "config", "solver": solver_config.solver,
                    "dim": solver_config.dim, "block_size": solver_config.block_size,
                    "alpha0": solver_config.unobserved_weight,
                    "reg": solver_config.reg, "reg_exp": solver_config.reg_exponent,
                    "stddev": solver_config.init_stddev,
                    "epochs": solver_config.epochs, "threads": solver_config.threads,
                    "seed": seed, "repeat": repeat,
                    "num_users": data.num_users, "num_items": data.num_items,
                    "num_interactions": data.n_interactions,
                }
                if raw is not None and config.output != "-":
                    write_id_map(config.output + ".user_ids.tsv", raw.user_ids)
                    write_id_map(config.output + ".item_ids.tsv", raw.item_ids)
                model = init_model(solver_config, data.num_users, data.num_items)
                epochs = iterate_epochs(model, data, solver_config,
                                        log_loss=config.log_loss)
                for report in epochs:
                    record = {
                        "record": "epoch", "repeat": repeat, "epoch": report.epoch,
                        "train_seconds": report.train_seconds,
                        "gramian_seconds": report.gramian_seconds,
                        "solve_seconds": report.user_seconds + report.item_seconds,
                        "cache_seconds": report.cache_seconds,
                    }
                    if report.loss is not None:
                        record["loss"] = report.loss
                    due = config.eval_every and (
                        (report.epoch + 1) % config.eval_every == 0
                        or report.epoch + 1 == solver_config.epochs)
                    if due:
                        t0 = time.perf_counter()
                        metrics = evaluate_holdout(model.item_factors, split,
                                                   solver_config)
                        record["eval_seconds"] = time.perf_counter() - t0
                        for k, value in metrics.recall_at.items():
                            record[f"recall_at_{k}"] = value
                        for k, value in metrics.ndcg_at.items():
                            record[f"ndcg_at_{k}"] = value
                        record["num_users_evaluated"] = metrics.num_users_evaluated
                    yield record


def emit_metrics_log(records, stream):
    """Write records as JSON lines, flushing as each line completes."""
    for record in records:
        stream.write(json.dumps(record, sort_keys=True) + "\n")
        stream.flush()


def read_metrics_log(path):
    """Parse a JSON-lines log back into record dicts."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def summarize_sweep(paths) -> str:
    """Aggregate run logs into a tab-delimited table.

    Rows are keyed by (solver, dim, block_size); per key the table reports
    the median per-epoch training seconds pooled over repeats and the mean
    of each final evaluated metric. Malformed logs raise naming the file.
    """
    if not paths:
        raise ValueError("at least one log file is required")
    groups: dict = {}
    for path in paths:
        records = read_metrics_log(path)
        if not records:
            raise ValueError(f"{path}: empty log")
        key = None
        last_metrics = None
        for record in records:
            kind = record.get("record")
            if kind == "config":
                if key is not None and last_metrics:
                    groups[key]["finals"].append(last_metrics)
                key = (record.get("solver"), record.get("dim"), record.get("block_size"))
                if None in key:
                    raise ValueError(f"{path}: config record missing solver/dim/block_size")
                groups.setdefault(key, {"seconds": [], "finals": [], "runs": 0})
                groups[key]["runs"] += 1
                last_metrics = None
            elif kind == "epoch":
                if key is None:
                    raise ValueError(f"{path}: epoch record before any config record")
                missing = [name for name in _EPOCH_KEYS if name not in record]
                if missing:
                    raise ValueError(f"{path}: epoch record missing keys {missing}")
                groups[key]["seconds"].append(record["train_seconds"])
                metrics = {name: value for name, value in record.items()
                           if name.startswith(("recall_at_", "ndcg_at_"))}
                if metrics:
                    last_metrics = metrics
            else:
                raise ValueError(f"{path}: unknown record kind {kind!r}")
        if key is not None and last_metrics:
            groups[key]["finals"].append(last_metrics)

    metric_names: list = []
    for group in groups.values():
        for final in group["finals"]:
            for name in final:
                if name not in metric_names:
                    metric_names.append(name)
    metric_names.sort()
    header = ["solver", "dim", "block_size", "runs", "epochs",
              "median_epoch_seconds"] + metric_names
    lines = ["\t".join(header)]
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2])):
        group = groups[key]
        med = statistics.median(group["seconds"]) if group["seconds"] else float("nan")
        row = [str(key[0]), str(key[1]), str(key[2]), str(group["runs"]),
               str(len(group["seconds"])), f"{med:.6g}"]
        for name in metric_names:
            values = [final[name] for final in group["finals"] if name in final]
            row.append(f"{statistics.fmean(values):.6g}" if values else "nan")
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def _parse_int_list(text):
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_block_list(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        out.append("d" if tok == "d" else int(tok))
    return tuple(out)


def _parse_synthetic(text):
    parts = [tok.strip() for tok in text.split(",")]
    if len(parts) != 5:
        raise argparse.ArgumentTypeError(
            "--synthetic wants 'users,items,per_user,rank,noise'")
    return (int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]),
            float(parts[4]))


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="blockals-bench",
        description="Train and benchmark implicit-feedback factorization solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train, evaluate, and log per-epoch records")
    run.add_argument("--train_data", help="interaction file (delimited, with header)")
    run.add_argument("--holdout_input", help="pre-split holdout input-fold file")
    run.add_argument("--holdout_target", help="pre-split holdout target-fold file")
    run.add_argument("--synthetic", type=_parse_synthetic,
                     help="generate data: 'users,items,per_user,rank,noise'")
    run.add_argument("--solver", choices=("ials", "icd", "ialspp"), default="ialspp")
    run.add_argument("--dim", type=_parse_int_list, default=(64,),
                     help="embedding dimension, or comma list to sweep")
    run.add_argument("--block_size", type=_parse_block_list, default=(None,),
                     help="block size, comma list to sweep; 'd' means the full dim")
    run.add_argument("--alpha0", type=float, default=0.1)
    run.add_argument("--reg", type=float, default=0.003)
    run.add_argument("--reg_exp", type=float, default=1.0)
    run.add_argument("--stddev", type=float, default=0.1)
    run.add_argument("--epochs", type=int, default=16)
    run.add_argument("--eval_every", type=int, default=1,
                     help="epochs between evaluations; 0 disables evaluation")
    run.add_argument("--threads", type=int, default=0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--repeats", type=int, default=1)
    run.add_argument("--holdout_fraction", type=float, default=0.1)
    run.add_argument("--target_fraction", type=float, default=0.2)
    run.add_argument("--log_loss", action="store_true",
                     help="log the exact training loss every epoch (costly)")
    run.add_argument("--output", default="-", help="log path, or - for stdout")

    summ = sub.add_parser("summarize", help="aggregate run logs into a table")
    summ.add_argument("logs", nargs="+", help="JSON-lines logs from 'run'")
    summ.add_argument("--output", default="-", help="table path, or - for stdout")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = ExperimentConfig(
                train_data=args.train_data, holdout_input=args.holdout_input,
                holdout_target=args.holdout_target, synthetic=args.synthetic,
                solver=args.solver, dims=args.dim, block_sizes=args.block_size,
                alpha0=args.alpha0, reg=args.reg, reg_exp=args.reg_exp,
                stddev=args.stddev, epochs=args.epochs, eval_every=args.eval_every,
                threads=args.threads, seed=args.seed, repeats=args.repeats,
                holdout_fraction=args.holdout_fraction,
                target_fraction=args.target_fraction, log_loss=args.log_loss,
                output=args.output)
            if args.output == "-":
                emit_metrics_log(run_experiment(config), sys.stdout)
            else:
                with open(args.output, "w", encoding="utf-8") as fh:
                    emit_metrics_log(run_experiment(config), fh)
        else:
            table = summarize_sweep(args.logs)
            if args.output == "-":
                sys.stdout.write(table)
            else:
                with open(args.output, "w", encoding="utf-8") as fh:
                    fh.write(table)
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

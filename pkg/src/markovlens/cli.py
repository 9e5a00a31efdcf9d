"""Command-line front end.

Subcommands: sample (emit token sequences), verify (certify a constructed
parameter point, exit 0 only if every check passes), train / sweep / depth
(training runs with CSV/JSON artifacts), and interpret (summarize saved
weights). Options can come from a JSON config file via --config; explicit
flags win over the file. Exit codes: 0 success, 1 check or run failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import artifacts
from .constructions import (
    build_global_high_switch,
    build_global_low_switch,
    build_unigram_point,
    certify,
)
from .grad import numerical_hessian
from .landscape import interpret
from .markov import MarkovKernel, sample_batch
from .model import ModelConfig, load_params, save_params
from .training import (
    RunRecord,
    TrainConfig,
    depth_experiment,
    mix_seed,
    sweep_pq,
    train,
)


def _positive_probability(parser: argparse.ArgumentParser, name: str, value: float) -> float:
    if value is None or not 0.0 < value < 1.0:
        parser.error(f"--{name} must lie strictly between 0 and 1 (got {value})")
    return value


def _load_config_file(parser, path: str | None, allowed: set[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fp:
            data = json.load(fp)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"--config: cannot read {path}: {exc}")
    unknown = set(data) - allowed
    if unknown:
        parser.error(f"--config: unknown keys {sorted(unknown)}")
    return data


def _resolve(args, config: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


_TRAIN_KEYS = {
    "p", "q", "states", "tied", "layers", "heads", "embed_dim", "attn_dim",
    "ff_dim", "context", "batch_size", "iterations", "lr", "weight_decay",
    "schedule", "seed", "eval_every", "eval_batches",
}


def _build_train_config(parser, args) -> TrainConfig:
    cfg = _load_config_file(parser, getattr(args, "config", None), _TRAIN_KEYS)
    states = int(_resolve(args, cfg, "states", 2))
    p = _resolve(args, cfg, "p", 0.5)
    if states == 2:
        q = _resolve(args, cfg, "q", 0.8)
        _positive_probability(parser, "p", p)
        _positive_probability(parser, "q", q)
        kernel = MarkovKernel.binary(p, q)
    else:
        _positive_probability(parser, "p", p)
        kernel = MarkovKernel.symmetric(p, states)
    model = ModelConfig(
        embed_dim=int(_resolve(args, cfg, "embed_dim", 8)),
        attn_dim=int(_resolve(args, cfg, "attn_dim", 8)),
        ff_dim=int(_resolve(args, cfg, "ff_dim", 32)),
        context_len=int(_resolve(args, cfg, "context", 64)),
        n_layers=int(_resolve(args, cfg, "layers", 1)),
        vocab_size=states,
        tied=bool(_resolve(args, cfg, "tied", False)),
        n_heads=int(_resolve(args, cfg, "heads", 1)),
    )
    return TrainConfig(
        kernel=kernel,
        model=model,
        batch_size=int(_resolve(args, cfg, "batch_size", 64)),
        iterations=int(_resolve(args, cfg, "iterations", 2000)),
        lr=float(_resolve(args, cfg, "lr", 1e-3)),
        weight_decay=float(_resolve(args, cfg, "weight_decay", 1e-3)),
        schedule=_resolve(args, cfg, "schedule", "cosine"),
        seed=int(_resolve(args, cfg, "seed", 0)),
        eval_every=int(_resolve(args, cfg, "eval_every", 100)),
        eval_batches=int(_resolve(args, cfg, "eval_batches", 20)),
    )


def _ensure_out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _print_run_summary(record: RunRecord) -> None:
    cfg = record.config
    line = (
        f"kernel={cfg.kernel.label()} tied={cfg.model.tied} layers={cfg.model.n_layers} "
        f"seed={cfg.seed} final_loss={artifacts.fmt(record.final_test_loss)} "
        f"class={record.classification}{' FAILED' if record.failed else ''}"
    )
    print(line)


# -- subcommands -----------------------------------------------------------------

def cmd_sample(parser, args) -> int:
    _positive_probability(parser, "p", args.p)
    if args.states == 2:
        _positive_probability(parser, "q", args.q)
        kernel = MarkovKernel.binary(args.p, args.q)
    else:
        kernel = MarkovKernel.symmetric(args.p, args.states)
    if args.count < 1 or args.n < 1:
        parser.error("--count and --n must be >= 1")
    batch = sample_batch(kernel, args.count, args.n, args.seed)
    lines = [" ".join(str(int(t)) for t in row) for row in batch]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            fp.write(text)
    else:
        sys.stdout.write(text)
    return 0


_KIND_MAP = {
    "global-low": "global_low_switch",
    "global-high": "global_high_switch",
    "unigram": "unigram",
}


def cmd_verify(parser, args) -> int:
    _positive_probability(parser, "p", args.p)
    _positive_probability(parser, "q", args.q)
    kernel = MarkovKernel.binary(args.p, args.q)
    kind = _KIND_MAP[args.kind]
    tied = not args.untied
    config = ModelConfig(
        embed_dim=args.embed_dim,
        attn_dim=args.attn_dim,
        ff_dim=args.ff_dim,
        context_len=args.n,
        n_layers=1,
        vocab_size=2,
        tied=tied,
    )
    try:
        if kind == "global_low_switch":
            point = build_global_low_switch(args.p, args.q, config)
        elif kind == "global_high_switch":
            point = build_global_high_switch(args.p, args.q, config)
        else:
            point = build_unigram_point(args.p, args.q, config)
            if not tied:
                kind = "unigram_untied"
    except ValueError as exc:
        # regime violations are check failures, not usage errors
        data = {
            "kind": kind,
            "kernel": {"p": args.p, "q": args.q, "states": 2},
            "all_passed": False,
            "checks": {"construction_feasible": {"value": None, "tolerance": None,
                                                 "pass": False, "note": str(exc)}},
        }
        print(json.dumps(data, indent=2, sort_keys=True))
        return 1
    report = certify(point, kind, kernel, horizon=args.n)
    data = report.to_dict()
    text = json.dumps(artifacts.round9(data), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            fp.write(text + "\n")
    print(text)
    if args.spectrum_csv:
        spec_report = numerical_hessian(point, kernel, args.n)
        artifacts.write_spectrum_csv(spec_report.eigenvalues, args.spectrum_csv)
    return 0 if report.all_passed else 1


def cmd_train(parser, args) -> int:
    config = _build_train_config(parser, args)
    out_dir = _ensure_out_dir(args.out_dir)
    record = train(config)
    _print_run_summary(record)
    artifacts.dump_json(record.to_dict(), os.path.join(out_dir, "run.json"))
    artifacts.write_curve_csv(record, os.path.join(out_dir, "curve.csv"))
    if config.kernel.is_binary:
        artifacts.write_scatter_csv(record, os.path.join(out_dir, "scatter.csv"))
    if record.params is not None:
        save_params(record.params, os.path.join(out_dir, "run.params"))
    return 1 if record.failed else 0


def cmd_sweep(parser, args) -> int:
    config = _build_train_config(parser, args)
    out_dir = _ensure_out_dir(args.out_dir)
    values = np.linspace(0.1, 0.9, args.grid)
    grid = [(float(p), float(q)) for q in values for p in values]
    seeds = list(range(args.seeds))
    rows, cell_means = sweep_pq(grid, config.model.tied, seeds, config, jobs=args.jobs)
    artifacts.write_sweep_csv(rows, os.path.join(out_dir, "sweep.csv"))
    print("p,q,mean_pred_zero")
    for (p, q), mean in cell_means.items():
        print(f"{artifacts.fmt(p)},{artifacts.fmt(q)},{artifacts.fmt(mean)}")
    n_failed = sum(row.failed for row in rows)
    return 1 if n_failed == len(rows) else 0


def cmd_depth(parser, args) -> int:
    config = _build_train_config(parser, args)
    out_dir = _ensure_out_dir(args.out_dir)
    layer_counts = [int(x) for x in args.depths.split(",")]
    seeds = list(range(args.seeds))
    results = depth_experiment(
        layer_counts, config.kernel, config.model.tied, seeds, config, jobs=args.jobs
    )
    summary = {}
    all_failed = True
    for layers, records in results.items():
        for seed, rec in zip(seeds, records):
            artifacts.write_curve_csv(
                rec, os.path.join(out_dir, f"curve_L{layers}_s{seed}.csv")
            )
            all_failed &= rec.failed
        summary[str(layers)] = {
            "classifications": [r.classification for r in records],
            "final_losses": [r.final_test_loss for r in records],
            "unigram_plateaus": [r.unigram_plateau for r in records],
            "failed": [r.failed for r in records],
        }
        print(
            f"layers={layers}: "
            + ", ".join(
                f"seed {s}: {r.classification} ({artifacts.fmt(r.final_test_loss)})"
                for s, r in zip(seeds, records)
            )
        )
    artifacts.dump_json(summary, os.path.join(out_dir, "depth.json"))
    return 1 if all_failed else 0


def cmd_interpret(parser, args) -> int:
    _positive_probability(parser, "p", args.p)
    _positive_probability(parser, "q", args.q)
    try:
        params = load_params(args.params)
    except (OSError, ValueError) as exc:
        parser.error(f"--params: {exc}")
    kernel_seed = args.seed if args.seed is not None else 0
    probe = sample_batch(
        MarkovKernel.binary(args.p, args.q),
        count=args.probe_count,
        length=params.config.context_len,
        seed=mix_seed(kernel_seed, 0x1A7E),
    )
    try:
        report = interpret(params, probe)
    except ValueError as exc:
        parser.error(f"--params: {exc}")
    text = json.dumps(artifacts.round9(report.to_dict()), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            fp.write(text + "\n")
    print(text)
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markovlens",
        description="Single-layer transformers on first-order Markov data: "
        "sampling, landscape certification, training, interpretation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sample = sub.add_parser("sample", help="emit sampled token sequences")
    p_sample.add_argument("--p", type=float, required=True)
    p_sample.add_argument("--q", type=float, default=0.5)
    p_sample.add_argument("--states", type=int, default=2)
    p_sample.add_argument("--n", type=int, required=True, help="tokens per sequence")
    p_sample.add_argument("--count", type=int, default=1)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", type=str, default=None)

    p_verify = sub.add_parser("verify", help="certify a constructed parameter point")
    p_verify.add_argument("--kind", choices=sorted(_KIND_MAP), required=True)
    p_verify.add_argument("--p", type=float, required=True)
    p_verify.add_argument("--q", type=float, required=True)
    tie = p_verify.add_mutually_exclusive_group()
    tie.add_argument("--tied", action="store_true", default=True)
    tie.add_argument("--untied", action="store_true", default=False)
    p_verify.add_argument("--embed-dim", dest="embed_dim", type=int, default=4)
    p_verify.add_argument("--attn-dim", dest="attn_dim", type=int, default=4)
    p_verify.add_argument("--ff-dim", dest="ff_dim", type=int, default=16)
    p_verify.add_argument("--n", type=int, default=8, help="certification horizon")
    p_verify.add_argument("--out", type=str, default=None)
    p_verify.add_argument("--spectrum-csv", type=str, default=None)

    def add_train_flags(p, with_config=True):
        if with_config:
            p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--p", type=float, default=None)
        p.add_argument("--q", type=float, default=None)
        p.add_argument("--states", type=int, default=None)
        tied_group = p.add_mutually_exclusive_group()
        tied_group.add_argument("--tied", dest="tied", action="store_true", default=None)
        tied_group.add_argument("--untied", dest="tied", action="store_false", default=None)
        p.add_argument("--layers", type=int, default=None)
        p.add_argument("--heads", type=int, default=None)
        p.add_argument("--embed-dim", dest="embed_dim", type=int, default=None)
        p.add_argument("--attn-dim", dest="attn_dim", type=int, default=None)
        p.add_argument("--ff-dim", dest="ff_dim", type=int, default=None)
        p.add_argument("--context", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
        p.add_argument("--schedule", choices=["cosine", "constant"], default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--eval-every", dest="eval_every", type=int, default=None)
        p.add_argument("--eval-batches", dest="eval_batches", type=int, default=None)
        p.add_argument("--out-dir", dest="out_dir", type=str, default="runs")
        p.add_argument("--jobs", type=int, default=None)

    p_train = sub.add_parser("train", help="train one model and emit artifacts")
    add_train_flags(p_train)

    p_sweep = sub.add_parser("sweep", help="train over a (p, q) grid")
    add_train_flags(p_sweep)
    p_sweep.add_argument("--grid", type=int, default=9, help="grid points per axis")
    p_sweep.add_argument("--seeds", type=int, default=5, help="runs per cell")

    p_depth = sub.add_parser("depth", help="train at several depths")
    add_train_flags(p_depth)
    p_depth.add_argument(
        "--depths", type=str, default="1,2", help="comma-separated layer counts"
    )
    p_depth.add_argument("--seeds", type=int, default=5)

    p_int = sub.add_parser("interpret", help="summarize saved weights")
    p_int.add_argument("--params", type=str, required=True)
    p_int.add_argument("--p", type=float, default=0.2)
    p_int.add_argument("--q", type=float, default=0.3)
    p_int.add_argument("--probe-count", dest="probe_count", type=int, default=8)
    p_int.add_argument("--seed", type=int, default=None)
    p_int.add_argument("--out", type=str, default=None)
    return parser


_COMMANDS = {
    "sample": cmd_sample,
    "verify": cmd_verify,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "depth": cmd_depth,
    "interpret": cmd_interpret,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return _COMMANDS[args.command](parser, args)


if __name__ == "__main__":
    sys.exit(main())

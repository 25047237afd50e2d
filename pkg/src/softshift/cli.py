"""Command-line front end: ``softshift <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""
import argparse
import math
import os
import sys
from dataclasses import replace

from .data import DOMAINS, SPLITS, LabeledDataset, generate_domain_pair, load_dataset, save_dataset
from .errors import InvalidConfig, SoftShiftError
from .harness import (Cell, convert_table, emit_table, load_config, parse_table, prepare_seed, run_cell,
                      run_experiment, summarize, with_seed_override, _parse_float, fmt_param)
from .mathcore import SeededRng
from .network import load_model, save_model
from .softlabels import compute_mean_soft_labels, load_table, model_fingerprint, save_table


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_config(path, seed):
    if path is None:
        from .harness import ExperimentConfig
        cfg = ExperimentConfig()
    else:
        with open(path) as fh:
            cfg = load_config(fh.read())
    return with_seed_override(cfg, seed)


def _write(path, data, mode="wb"):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, mode) as fh:
        fh.write(data)


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def _dataset_path(root, domain, split):
    return os.path.join(root, f"{domain}_{split}.ds")


def _load_pair(cfg, data_dir, seed):
    """Rebuild the in-memory pair, preferring dataset files when a directory is given."""
    pair = generate_domain_pair(cfg.shift, SeededRng(seed))
    if data_dir is None:
        return pair
    for domain in DOMAINS:
        bucket = pair.source if domain == "source" else pair.target
        for split in SPLITS:
            bucket[split] = load_dataset(_read_bytes(_dataset_path(data_dir, domain, split)))
    par_src = load_dataset(_read_bytes(os.path.join(data_dir, "parallel_source.ds")))
    pair.parallel = replace(pair.parallel, source_features=par_src.features,
                            target_features=pair.target["train"].features,
                            labels=pair.target["train"].labels)
    return pair


def cmd_gen_data(args):
    cfg = _read_config(args.config, args.seed)
    seed = cfg.seeds[0]
    pair = generate_domain_pair(cfg.shift, SeededRng(seed))
    for domain in DOMAINS:
        bucket = pair.source if domain == "source" else pair.target
        for split in SPLITS:
            _write(_dataset_path(args.out, domain, split), save_dataset(bucket[split], cfg.shift, seed))
    par = pair.parallel
    par_ds = LabeledDataset(par.source_features, par.labels, cfg.shift.num_classes, "source", "train")
    _write(os.path.join(args.out, "parallel_source.ds"), save_dataset(par_ds, cfg.shift, seed))
    print(f"wrote datasets for seed {seed} to {args.out}")
    return 0


def cmd_train_source(args):
    cfg = _read_config(args.config, args.seed)
    seed = cfg.seeds[0]
    pair = _load_pair(cfg, args.data, seed)
    ctx = prepare_seed(cfg, seed, pair=pair)
    _write(args.out, save_model(ctx.teacher))
    _write(args.out + ".log", ctx.teacher_run.to_log(), "w")
    print(f"source model: best val acc {ctx.teacher_run.best_val_acc:.4f}, "
          f"fingerprint {ctx.fingerprint}")
    return 0


def cmd_make_table(args):
    model = load_model(_read_bytes(args.model))
    data = load_dataset(_read_bytes(args.data))
    table = compute_mean_soft_labels(model, data, args.temperature)
    _write(args.out, save_table(table))
    if args.text:
        sys.stdout.write(table.as_text())
    print(f"wrote {table.num_classes}x{table.num_classes} table at T={table.temperature:g} to {args.out}")
    return 0


def cmd_adapt(args):
    cfg = _read_config(args.config, args.seed)
    seed = cfg.seeds[0]
    strategy = args.strategy
    T, rho = args.temperature, args.rho
    if strategy in ("kld-reg", "distillation", "mean-soft-label"):
        T = 1.0 if T is None else T
        if rho is None:
            raise UsageError(f"--rho is required for {strategy}")
    cell = Cell(strategy, T, rho)
    pair = _load_pair(cfg, args.data, seed)
    teacher = load_model(_read_bytes(args.model)) if args.model else None
    ctx = prepare_seed(cfg, seed, pair=pair, teacher=teacher)
    if args.table:
        table = load_table(_read_bytes(args.table), model_fingerprint(ctx.teacher))
        table.require_temperature(cell.T)
        ctx.tables[cell.T] = table
    model, run = run_cell(ctx, cell)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, f"{cell.slug}_seed{seed}.ckpt"), save_model(model))
    _write(os.path.join(args.out, f"{cell.slug}_seed{seed}.log"), run.to_log(), "w")
    print(f"{cell.slug} seed {seed}: test acc {run.test_acc:.4f}, best val acc {run.best_val_acc:.4f}")
    return 0


def cmd_grid(args):
    cfg = _read_config(args.config, args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    out = args.out or cfg.output
    results = run_experiment(cfg, log_dir=os.path.join(out, "logs"))
    _write(os.path.join(out, "results.tsv"), emit_table(results, "tsv"))
    _write(os.path.join(out, "results.md"), emit_table(results, "markdown"))
    print(f"{len(results.rows)} runs; results in {out}")
    return 0


def cmd_report(args):
    with open(args.results, encoding="utf-8") as fh:
        text = fh.read()
    sys.stdout.write(convert_table(text, args.format).decode("utf-8"))
    if args.summary:
        print()
        for strategy, (cell, mean, std, n) in summarize(parse_table(text)).items():
            print(f"{strategy:20s} best T={fmt_param(cell.T)} rho={fmt_param(cell.rho)} "
                  f"test_acc {mean:.4f} ± {std:.4f} (n={n})")
    return 0


def build_parser():
    parser = _Parser(prog="softshift", description="Soft-target domain adaptation experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def with_config(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="run a single seed (overrides SOFTSHIFT_SEED)")
        return p

    p = with_config(sub.add_parser("gen-data", help="write synthetic source/target datasets"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = with_config(sub.add_parser("train-source", help="train the source (teacher) model"))
    p.add_argument("--data", help="directory written by gen-data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("make-table", help="compute the per-class mean soft-label table")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="source train dataset file")
    p.add_argument("--temperature", "-T", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--text", action="store_true", help="also print the table")
    p.set_defaults(func=cmd_make_table)

    p = with_config(sub.add_parser("adapt", help="run one adaptation strategy"))
    p.add_argument("--strategy", required=True)
    p.add_argument("--temperature", "-T", type=float)
    p.add_argument("--rho", type=_parse_float, help="soft-loss weight; 'inf' for soft loss only")
    p.add_argument("--data")
    p.add_argument("--model", help="source checkpoint; trained on the fly when omitted")
    p.add_argument("--table", help="mean soft-label table file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt)

    p = with_config(sub.add_parser("grid", help="run the full experiment grid"))
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="re-render a results table")
    p.add_argument("--results", required=True)
    p.add_argument("--format", choices=("tsv", "markdown"), default="markdown")
    p.add_argument("--summary", action="store_true", help="append best cell per strategy")
    p.set_defaults(func=cmd_report)
    return parser


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, InvalidConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SoftShiftError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())

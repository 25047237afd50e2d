"""Experiment grid: one source model per seed, every adaptation strategy on top.

Strategies
----------
source-only         the source model itself, evaluated on the target domain
target-only         trained from scratch on the target train split
source-plus-target  trained from scratch on the shuffled union of both train splits
fine-tune           source-initialised, hard loss on target data
kld-reg             fine-tune plus soft loss against source posteriors on target data, T=1
distillation        as kld-reg with any temperature
teacher-student     soft loss only, source posteriors over parallel source views
mean-soft-label     hard loss plus soft loss against the per-class mean soft label

All adaptation strategies of one seed share the same minibatch shuffle
stream, so strategies that reduce to each other (fine-tune and
mean-soft-label at rho=0, kld-reg and distillation at T=1) give identical
results.
"""
import configparser
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .data import ShiftConfig, concat, generate_domain_pair
from .errors import GridCellError, InvalidConfig, SoftShiftError
from .losses import LossWeights, teacher_soft_targets
from .mathcore import SeededRng
from .network import init_params, mlp_specs
from .softlabels import compute_mean_soft_labels, lookup, model_fingerprint
from .training import (RunResult, TrainConfig, combined_objective, evaluate, hard_objective,
                       soft_objective, train)

STRATEGIES = ("source-only", "target-only", "source-plus-target", "fine-tune", "kld-reg",
              "distillation", "teacher-student", "mean-soft-label")
BASELINES = ("source-only", "target-only", "source-plus-target", "fine-tune", "teacher-student")
DEFAULT_STRATEGIES = ("source-only", "target-only", "source-plus-target", "fine-tune", "kld-reg",
                      "distillation", "mean-soft-label")

SOFT_ONLY = math.inf
COLUMNS = ("strategy", "T", "rho", "seed", "test_acc", "val_acc", "epochs", "halvings")
AGGREGATE_SEED = "mean±std"


@dataclass(frozen=True)
class Cell:
    strategy: str
    T: float = None
    rho: float = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"unknown strategy {self.strategy!r}")
        if self.strategy in BASELINES:
            if self.T is not None or self.rho is not None:
                raise InvalidConfig(f"{self.strategy} takes neither T nor rho")
            return
        if self.T is None or self.rho is None:
            raise InvalidConfig(f"{self.strategy} needs both T and rho")
        if self.strategy == "kld-reg" and self.T != 1:
            raise InvalidConfig("kld-reg is fixed to T=1")
        if math.isinf(self.rho) and self.strategy != "mean-soft-label":
            raise InvalidConfig("the soft-only marker is only valid for mean-soft-label")

    @property
    def weights(self):
        return LossWeights.from_rho(float(self.T), self.rho)

    def sort_key(self):
        return (STRATEGIES.index(self.strategy),
                -1.0 if self.T is None else self.T,
                -1.0 if self.rho is None else self.rho)

    @property
    def slug(self):
        parts = [self.strategy]
        if self.T is not None:
            parts.append(f"T{fmt_param(self.T)}")
            parts.append(f"rho{fmt_param(self.rho)}")
        return "_".join(parts)


def fmt_param(v):
    if v is None:
        return "-"
    if math.isinf(v):
        return "inf"
    return f"{v:g}"


@dataclass(frozen=True)
class ExperimentConfig:
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    train: TrainConfig = field(default_factory=TrainConfig)
    strategies: tuple = DEFAULT_STRATEGIES
    distill_temperatures: tuple = (1.0, 2.0, 5.0)
    mean_soft_temperatures: tuple = (1.0,)
    rhos: tuple = (0.1, 0.2, 0.5, 1.0, SOFT_ONLY)
    seeds: tuple = (0, 1, 2, 3, 4)
    output: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise InvalidConfig("seeds must be non-empty and distinct")
        if not self.strategies:
            raise InvalidConfig("strategy list is empty")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise InvalidConfig(f"unknown strategy {s!r}")
        if not self.rhos or not self.distill_temperatures or not self.mean_soft_temperatures:
            raise InvalidConfig("T and rho grids must be non-empty")

    def cells(self):
        finite = [r for r in self.rhos if not math.isinf(r)]
        out = []
        for s in self.strategies:
            if s in BASELINES:
                out.append(Cell(s))
            elif s == "kld-reg":
                out.extend(Cell(s, 1.0, r) for r in finite)
            elif s == "distillation":
                out.extend(Cell(s, T, r) for T in self.distill_temperatures for r in finite)
            else:
                out.extend(Cell(s, T, r) for T in self.mean_soft_temperatures for r in self.rhos)
        return sorted(set(out), key=Cell.sort_key)

    def layer_specs(self):
        return mlp_specs(self.shift.dim, self.shift.num_classes, self.hidden, self.activation)


@dataclass
class ResultRow:
    cell: Cell
    seed: int
    test_acc: float
    val_acc: float
    epochs: int
    halvings: int
    teacher_fingerprint: str = ""
    log: str = field(default="", compare=False, repr=False)

    def key(self):
        return (*self.cell.sort_key(), self.seed)


@dataclass
class ResultsTable:
    rows: list

    def __post_init__(self):
        self.rows = sorted(self.rows, key=ResultRow.key)
        keys = [(r.cell, r.seed) for r in self.rows]
        if len(keys) != len(set(keys)):
            raise InvalidConfig("duplicate (cell, seed) rows in results")

    def cells(self):
        seen = []
        for r in self.rows:
            if r.cell not in seen:
                seen.append(r.cell)
        return seen

    def select(self, strategy, T=None, rho=None):
        return [r for r in self.rows if r.cell == Cell(strategy, T, rho)]

    def aggregates(self):
        """Per-cell mean and sample std of every numeric column."""
        out = []
        for cell in self.cells():
            rows = [r for r in self.rows if r.cell == cell]
            stats = {}
            for col in ("test_acc", "val_acc", "epochs", "halvings"):
                vals = np.array([getattr(r, col) for r in rows], dtype=np.float64)
                std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
                stats[col] = (float(vals.mean()), std)
            out.append((cell, len(rows), stats))
        return out

    def mean_test(self, cell):
        return float(np.mean([r.test_acc for r in self.rows if r.cell == cell]))


# -- running ---------------------------------------------------------------------

@dataclass
class SeedContext:
    """Everything shared by the strategies of one seed."""

    cfg: ExperimentConfig
    seed: int
    pair: object
    teacher: object
    teacher_run: RunResult
    fingerprint: str
    tables: dict = field(default_factory=dict)

    def table(self, T):
        if T not in self.tables:
            self.tables[T] = compute_mean_soft_labels(self.teacher, self.pair.source["train"], T)
        return self.tables[T]


def prepare_seed(cfg, seed, pair=None, teacher=None):
    root = SeededRng(seed)
    if pair is None:
        pair = generate_domain_pair(cfg.shift, root)
    if teacher is None:
        init = init_params(cfg.layer_specs(), root.child("model", "source"))
        teacher, run = train(init, pair.source["train"], pair.source["validation"],
                             hard_objective(pair.source["train"].labels),
                             replace(cfg.train, seed=seed), rng=root.child("shuffle", "source"))
    else:
        run = RunResult()
    return SeedContext(cfg, seed, pair, teacher, run, model_fingerprint(teacher).hex())


def run_cell(ctx, cell):
    """Train (or reuse) the model for one grid cell; returns ``(model, RunResult)``."""
    cfg, pair, root = ctx.cfg, ctx.pair, SeededRng(ctx.seed)
    tcfg = replace(cfg.train, seed=ctx.seed)
    tgt_train, tgt_val = pair.target["train"], pair.target["validation"]
    labels = tgt_train.labels
    adapt_stream = root.child("shuffle", "adapt")
    s = cell.strategy
    if s == "source-only":
        model, run = ctx.teacher, replace(ctx.teacher_run, val_acc=list(ctx.teacher_run.val_acc))
    elif s in ("target-only", "source-plus-target"):
        init = init_params(cfg.layer_specs(), root.child("model", "scratch"))
        data = tgt_train
        if s == "source-plus-target":
            data = concat(pair.source["train"], tgt_train, root.child("union"), "mixed")
        model, run = train(init, data, tgt_val, hard_objective(data.labels), tcfg,
                           rng=root.child("shuffle", s))
    elif s == "fine-tune":
        model, run = train(ctx.teacher, tgt_train, tgt_val, hard_objective(labels), tcfg,
                           rng=adapt_stream)
    elif s in ("kld-reg", "distillation"):
        targets = teacher_soft_targets(ctx.teacher, tgt_train.features, cell.T, "teacher-on-target")
        model, run = train(ctx.teacher, tgt_train, tgt_val,
                           combined_objective(labels, targets, cell.weights), tcfg, rng=adapt_stream)
    elif s == "teacher-student":
        par = pair.parallel
        targets = teacher_soft_targets(ctx.teacher, par.source_features, 1.0,
                                       "teacher-on-parallel-source")
        model, run = train(ctx.teacher, tgt_train, tgt_val, soft_objective(targets, 1.0), tcfg,
                           features=par.target_features, rng=adapt_stream)
    else:
        table = ctx.table(cell.T)
        table.require_temperature(cell.T)
        targets = lookup(table, labels)
        model, run = train(ctx.teacher, tgt_train, tgt_val,
                           combined_objective(labels, targets, cell.weights), tcfg, rng=adapt_stream)
    run.test_acc = evaluate(model, pair.target["test"])
    return model, run


def _row(ctx, cell, model, run):
    val = evaluate(model, ctx.pair.target["validation"]) if cell.strategy == "source-only" \
        else run.best_val_acc
    return ResultRow(cell, ctx.seed, run.test_acc, val, run.epochs, len(run.halvings),
                     ctx.fingerprint, run.to_log())


def run_seed(cfg, seed, cells=None):
    ctx = prepare_seed(cfg, seed)
    rows = []
    for cell in cells or cfg.cells():
        try:
            model, run = run_cell(ctx, cell)
        except SoftShiftError as exc:
            raise GridCellError(cell.slug, seed, exc) from exc
        rows.append(_row(ctx, cell, model, run))
    return rows


def run_experiment(cfg, log_dir=None):
    """Run every configured cell for every seed and collect a ResultsTable."""
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        chunks = [run_seed(cfg, seed) for seed in cfg.seeds]
    table = ResultsTable([row for chunk in chunks for row in chunk])
    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
        for row in table.rows:
            with open(os.path.join(log_dir, f"{row.cell.slug}_seed{row.seed}.log"), "w") as fh:
                fh.write(row.log)
    return table


# -- presentation ----------------------------------------------------------------

def _fmt(v):
    return f"{v:.4f}"


def _lines(results):
    by_cell = {}
    for r in results.rows:
        by_cell.setdefault(r.cell, []).append(r)
    agg = {cell: (n, stats) for cell, n, stats in results.aggregates()}
    for cell in results.cells():
        for r in by_cell[cell]:
            yield [cell.strategy, fmt_param(cell.T), fmt_param(cell.rho), str(r.seed),
                   _fmt(r.test_acc), _fmt(r.val_acc), str(r.epochs), str(r.halvings)]
        n, stats = agg[cell]
        if n > 1:
            yield [cell.strategy, fmt_param(cell.T), fmt_param(cell.rho), AGGREGATE_SEED,
                   *(f"{_fmt(m)}±{_fmt(s)}" for m, s in
                     (stats[c] for c in ("test_acc", "val_acc", "epochs", "halvings")))]


def emit_table(results, fmt="tsv"):
    if not results.rows:
        raise InvalidConfig("no results to emit")
    buf = io.StringIO()
    if fmt == "tsv":
        buf.write("\t".join(COLUMNS) + "\n")
        for line in _lines(results):
            buf.write("\t".join(line) + "\n")
    elif fmt == "markdown":
        buf.write("| " + " | ".join(COLUMNS) + " |\n")
        buf.write("|" + "|".join("---" for _ in COLUMNS) + "|\n")
        for line in _lines(results):
            buf.write("| " + " | ".join(line) + " |\n")
    else:
        raise InvalidConfig(f"unknown table format {fmt!r}")
    return buf.getvalue().encode("utf-8")


def convert_table(text, fmt="markdown"):
    """Re-delimit emitted TSV text without touching any value.

    Aggregates are not recomputed: the per-seed values in the file are
    already rounded, so recomputing would not reproduce the original lines.
    """
    lines = [ln.split("\t") for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0]) != COLUMNS:
        raise InvalidConfig("not a softshift results table")
    if any(len(ln) != len(COLUMNS) for ln in lines):
        raise InvalidConfig("results table has a malformed line")
    buf = io.StringIO()
    if fmt == "tsv":
        for ln in lines:
            buf.write("\t".join(ln) + "\n")
    elif fmt == "markdown":
        buf.write("| " + " | ".join(lines[0]) + " |\n")
        buf.write("|" + "|".join("---" for _ in COLUMNS) + "|\n")
        for ln in lines[1:]:
            buf.write("| " + " | ".join(ln) + " |\n")
    else:
        raise InvalidConfig(f"unknown table format {fmt!r}")
    return buf.getvalue().encode("utf-8")


def parse_table(text):
    """Read the per-seed rows back from TSV output; aggregate lines are skipped."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split("\t")) != COLUMNS:
        raise InvalidConfig("not a softshift results table")
    rows = []
    for ln in lines[1:]:
        strategy, T, rho, seed, test, val, epochs, halvings = ln.split("\t")
        if seed == AGGREGATE_SEED:
            continue
        cell = Cell(strategy, None if T == "-" else float(T), None if rho == "-" else float(rho))
        rows.append(ResultRow(cell, int(seed), float(test), float(val), int(epochs), int(halvings)))
    return ResultsTable(rows)


def summarize(results):
    """Best mean test accuracy per strategy family, with the cell that achieved it."""
    best = {}
    for cell, n, stats in results.aggregates():
        mean = stats["test_acc"][0]
        if cell.strategy not in best or mean > best[cell.strategy][1]:
            best[cell.strategy] = (cell, mean, stats["test_acc"][1], n)
    return best


# -- config files ----------------------------------------------------------------

def _parse_float(v):
    v = v.strip().lower()
    if v in ("inf", "infinity", "soft-only", "soft_only"):
        return math.inf
    return float(v)


def _convert(kind, raw):
    if kind is int:
        return int(raw)
    if kind is float:
        return _parse_float(raw)
    return raw.strip()


def _list(raw, conv):
    return tuple(conv(x) for x in raw.replace(",", " ").split())


def load_config(text):
    """Parse the ``key = value`` config format with [data] [model] [train] [grid] sections."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfig(f"unreadable config: {exc}") from exc
    allowed = {"data", "model", "train", "grid"}
    extra = set(parser.sections()) - allowed
    if extra:
        raise InvalidConfig(f"unknown config section [{sorted(extra)[0]}]")

    def section_values(name, dc):
        types = {f.name: f.type for f in fields(dc)}
        out = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in types or key == "seed":
                    raise InvalidConfig(f"unknown key {key!r} in [{name}]")
                kind = {"int": int, "float": float}.get(str(getattr(types[key], "__name__", types[key])))
                try:
                    out[key] = _convert(kind, raw)
                except ValueError as exc:
                    raise InvalidConfig(f"[{name}] {key}: {exc}") from exc
        return out

    try:
        shift = ShiftConfig(**section_values("data", ShiftConfig))
        train_cfg = TrainConfig(**section_values("train", TrainConfig))
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
    kwargs = {"shift": shift, "train": train_cfg}
    if parser.has_section("model"):
        for key, raw in parser.items("model"):
            if key == "hidden":
                kwargs["hidden"] = _list(raw, int)
            elif key == "activation":
                kwargs["activation"] = raw.strip()
            else:
                raise InvalidConfig(f"unknown key {key!r} in [model]")
    if parser.has_section("grid"):
        conv = {"strategies": lambda r: _list(r, str), "distill_temperatures": lambda r: _list(r, float),
                "mean_soft_temperatures": lambda r: _list(r, float), "rhos": lambda r: _list(r, _parse_float),
                "seeds": lambda r: _list(r, int), "output": str.strip, "workers": int}
        for key, raw in parser.items("grid"):
            if key not in conv:
                raise InvalidConfig(f"unknown key {key!r} in [grid]")
            try:
                kwargs[key] = conv[key](raw)
            except ValueError as exc:
                raise InvalidConfig(f"[grid] {key}: {exc}") from exc
    return ExperimentConfig(**kwargs)


def with_seed_override(cfg, seed=None, env=None):
    """Apply ``--seed`` (preferred) or ``SOFTSHIFT_SEED`` as a single-seed override."""
    env = os.environ if env is None else env
    if seed is None and env.get("SOFTSHIFT_SEED"):
        try:
            seed = int(env["SOFTSHIFT_SEED"])
        except ValueError as exc:
            raise InvalidConfig(f"SOFTSHIFT_SEED must be an integer: {exc}") from exc
    return cfg if seed is None else replace(cfg, seeds=(int(seed),))

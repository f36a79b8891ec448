"""Command-line interface: ``discourse-lstm <command> [flags]``.

Exit codes: 0 success, 2 input error (missing or malformed files), 3 numeric
failure (divergence), 4 usage error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import AugmentConfig, augment_epoch, corrupt_relations
from .evaluation import evaluate, sensitivity_sweep, write_sweep_csv
from .features import EmbeddingTable, FeaturizationError, Lexicon, Pipeline, featurize_tree
from .inspection import ExportError, UnsupportedVariantError, inspection_report, salience, salience_html
from .model import VARIANTS, ArityError, ConfigError, StateError, load_checkpoint, save_checkpoint
from .synth import TASKS, synth_corpus, synth_lexicon
from .tensor import DimensionError, NumericError
from .training import (
    L2_STRENGTHS, LEARNING_RATES, MEMORY_SIZES, DataError, DivergenceError, TrainConfig, split_train_val, train,
)
from .tree import TreeError, read_trees, tree_stats, write_trees

log = logging.getLogger("discourse_lstm")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_USAGE = 0, 2, 3, 4
SEED_ENV = "DISCOURSE_LSTM_SEED"


class InputError(Exception):
    """Bad or missing input file; maps to exit code 2."""


class UsageError(Exception):
    """Inconsistent flags; maps to exit code 4."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# flag groups


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: ${SEED_ENV}, else 0)")


def _add_data(p, labels=True):
    p.add_argument("--trees", required=True, help="tree file (JSON lines)")
    if labels:
        p.add_argument("--labels", help="CSV of doc_id,label overriding labels in the tree file")
    p.add_argument("--lexicon", help="sentiment lexicon TSV (word, pos, neg)")
    p.add_argument("--embeddings", help="word embedding text file (word v1 ... vd)")
    p.add_argument("--features", choices=["lexicon", "embedding"],
                   help="featurize leaves from text; inferred from --lexicon/--embeddings, "
                        "otherwise features stored in the tree file are used")
    p.add_argument("--no-stem", action="store_true", help="disable Porter stemming of tokens and resource keys")


def _add_train(p, grid=False):
    p.add_argument("--variant", choices=VARIANTS, default=None, help="model variant (default discourse-childsum)")
    if not grid:
        p.add_argument("--n", type=int, default=None, help="memory size (default 10)")
        p.add_argument("--lr", type=float, default=None, help="Adam learning rate (default 1e-3)")
        p.add_argument("--l2", type=float, default=None, help="L2 strength on weight tensors (default 0.001)")
        p.add_argument("--dropout", type=float, default=None, help="DropConnect weight dropout rate (default 0)")
    p.add_argument("--patience", type=int, default=None, help="early-stopping patience in epochs (default 10)")
    p.add_argument("--val-fraction", type=float, default=None, help="validation share (default 0.2)")
    p.add_argument("--max-epochs", type=int, default=None, help="epoch limit (default 100)")
    p.add_argument("--batch-size", type=int, default=None, help="minibatch size (default 16)")
    p.add_argument("--augment", choices=["none", "reorder", "insert", "both"], default=None,
                   help="per-epoch tree augmentation (default none)")
    p.add_argument("--corrupt-fraction", type=float, default=None,
                   help="share of inner-node relations randomized in each training epoch (default 0)")
    p.add_argument("--config", help="JSON file with TrainConfig fields; explicit flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="discourse-lstm",
                     description="Document sentiment from RST discourse trees with Tree-LSTM and Discourse-LSTM models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command", parser_class=_Parser)

    p = sub.add_parser("featurize", help="attach leaf feature vectors computed from EDU text")
    _add_data(p)
    p.add_argument("--out-dir", required=True, help="directory for featurized.jsonl")

    p = sub.add_parser("train", help="train one model and write checkpoint, report and config")
    _add_data(p)
    _add_train(p)
    _add_seed(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (training itself is sequential)")
    p.add_argument("--out-dir", required=True, help="directory for checkpoint.json, report.jsonl, config.json")

    p = sub.add_parser("evaluate", help="score a checkpoint or the sum baseline; optional relation-noise sweep")
    _add_data(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="model checkpoint")
    src.add_argument("--baseline", choices=["sum"], help="evaluate the flat sentiment-sum baseline")
    p.add_argument("--corrupt-fraction", type=float, default=0.0,
                   help="relation-noise share applied to test trees before scoring (default 0)")
    p.add_argument("--sweep", help="comma-separated corruption fractions for a sensitivity table, e.g. 0,0.1,0.2")
    p.add_argument("--sweep-seeds", type=int, default=1, help="number of noise seeds averaged per fraction")
    _add_seed(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (evaluation is sequential)")
    p.add_argument("--out-dir", required=True, help="directory for metrics.json and sensitivity.csv")

    p = sub.add_parser("augment", help="dry run: write one epoch's augmented training set")
    _add_data(p)
    p.add_argument("--augment", choices=["none", "reorder", "insert", "both"], default="both",
                   help="techniques to apply (default both)")
    p.add_argument("--corrupt-fraction", type=float, default=0.0, help="relation-noise share (default 0)")
    _add_seed(p)
    p.add_argument("--out-dir", required=True, help="directory for augmented.jsonl")

    p = sub.add_parser("inspect", help="relation/hierarchy tensor weights and EDU salience")
    p.add_argument("--checkpoint", required=True, help="discourse-variant checkpoint")
    p.add_argument("--tree-file", help="trees whose EDUs get salience scores")
    p.add_argument("--out-json", required=True, help="JSON report path")
    p.add_argument("--out-html", help="self-contained HTML salience page")

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--n-trees", type=int, default=500, help="number of trees (default 500)")
    p.add_argument("--depth", type=int, default=4, help="max leaves per subtree below the root (default 4)")
    p.add_argument("--task", default="nucleus-top-split", help=f"one of {', '.join(TASKS)}")
    _add_seed(p)
    p.add_argument("--out-dir", required=True, help="directory for trees.jsonl, labels.csv, lexicon.tsv")

    p = sub.add_parser("grid", help="train every hyperparameter combination and tabulate val metrics")
    _add_data(p)
    _add_train(p, grid=True)
    p.add_argument("--n", dest="grid_n", help="comma-separated memory sizes (default 10,20,50)")
    p.add_argument("--lr", dest="grid_lr", help="comma-separated learning rates (default 1e-5,1e-4,1e-3)")
    p.add_argument("--l2", dest="grid_l2", help="comma-separated L2 strengths (default 0.001,0.01,0.05)")
    p.add_argument("--dropout", dest="grid_dropout", help="comma-separated dropout rates (default 0)")
    p.add_argument("--grid-config", help="JSON object of lists keyed n, learning_rate, l2, dropout_p")
    p.add_argument("--limit", type=int, default=None, help="stop after this many new cells (staged runs)")
    _add_seed(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out-dir", required=True, help="directory for grid.csv and best.json")
    return parser


# ---------------------------------------------------------------------------
# input helpers


def _seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _exists(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} not found: {path}")
    return p


def read_labels(path: str | Path) -> dict[str, int]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected doc_id,label")
            try:
                out[row[0]] = int(row[1])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise InputError(f"{path}:{lineno}: label {row[1]!r} is not an integer") from None
    return out


def load_trees(args, need_labels: bool = True):
    trees = read_trees(_exists(args.trees, "tree file"))
    if not trees:
        raise InputError(f"{args.trees}: no trees")
    if getattr(args, "labels", None):
        labels = read_labels(_exists(args.labels, "label file"))
        for t in trees:
            if t.doc_id in labels:
                t.label = labels[t.doc_id]
    if need_labels:
        missing = [t.doc_id for t in trees if t.label is None]
        if missing:
            raise InputError(f"{len(missing)} trees lack labels, e.g. {missing[0]!r}")

    mode = args.features
    if mode is None and (args.lexicon or args.embeddings):
        if args.lexicon and args.embeddings:
            raise UsageError("both --lexicon and --embeddings given; choose one with --features")
        mode = "lexicon" if args.lexicon else "embedding"
    stem = not args.no_stem
    if mode == "lexicon":
        if not args.lexicon:
            raise UsageError("--features lexicon needs --lexicon")
        resource = Lexicon.from_tsv(_exists(args.lexicon, "lexicon"), stem_keys=stem)
    elif mode == "embedding":
        if not args.embeddings:
            raise UsageError("--features embedding needs --embeddings")
        resource = EmbeddingTable.from_text(_exists(args.embeddings, "embedding file"), stem_keys=stem)
    else:
        return trees
    pipeline = Pipeline(mode=mode, stem=stem)
    return [featurize_tree(t, pipeline, resource) for t in trees]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def resolve_config(args) -> TrainConfig:
    base = TrainConfig().to_dict()
    if args.config:
        try:
            loaded = json.loads(_exists(args.config, "config file").read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise InputError(f"{args.config}: {e}") from e
        base.update(loaded)
    aug = dict(base["augment"]) if isinstance(base["augment"], dict) else vars(base["augment"])
    flags = {
        "variant": args.variant,
        "n": getattr(args, "n", None),
        "learning_rate": getattr(args, "lr", None),
        "l2": getattr(args, "l2", None),
        "dropout_p": getattr(args, "dropout", None),
        "patience": args.patience,
        "val_fraction": args.val_fraction,
        "max_epochs": args.max_epochs,
        "batch_size": args.batch_size,
    }
    base.update({k: v for k, v in flags.items() if v is not None})
    if args.augment is not None:
        aug.update(vars(AugmentConfig.from_flag(args.augment)))
    if args.corrupt_fraction is not None:
        aug["corruption_fraction"] = args.corrupt_fraction
    seed = _seed(args)
    base["seed"] = seed
    aug["seed"] = seed
    base["augment"] = AugmentConfig(**aug)
    try:
        return TrainConfig.from_dict(base)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


# ---------------------------------------------------------------------------
# commands


def cmd_featurize(args) -> int:
    if args.features is None and not (args.lexicon or args.embeddings):
        raise UsageError("featurize needs --lexicon or --embeddings")
    trees = load_trees(args, need_labels=False)
    out = _out_dir(args.out_dir) / "featurized.jsonl"
    write_trees(trees, out)
    print(f"wrote {len(trees)} trees to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = resolve_config(args)
    trees = load_trees(args)
    out = _out_dir(args.out_dir)

    def report_epoch(rec):
        log.info("epoch %d val_loss %.5f val_acc %.3f", rec.epoch, rec.val_loss, rec.val_accuracy)

    params, report = train(trees, config, on_epoch=report_epoch)
    save_checkpoint(params, out / "checkpoint.json", extra={"train_config": config.to_dict()})
    report.write(out / "report.jsonl")
    _write_json(out / "config.json", {
        "train_config": config.to_dict(),
        "inputs": {"trees": args.trees, "labels": args.labels, "lexicon": args.lexicon,
                   "embeddings": args.embeddings, "features": args.features, "stem": not args.no_stem},
    })
    best = report.best
    if best is not None:
        print(f"best epoch {best.epoch}: val_loss {best.val_loss:.4f} val_accuracy {best.val_accuracy:.4f} "
              f"({report.stop_reason})")
    else:
        print("no epochs run; checkpoint holds the initialization")
    return EXIT_OK


def _fractions(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad fraction list {text!r}") from None
    if not vals or any(not 0.0 <= v <= 1.0 for v in vals):
        raise UsageError(f"fractions must lie in [0, 1]: {text!r}")
    return vals


def cmd_evaluate(args) -> int:
    trees = load_trees(args)
    out = _out_dir(args.out_dir)
    seed = _seed(args)
    if not 0.0 <= args.corrupt_fraction <= 1.0:
        raise UsageError("--corrupt-fraction must lie in [0, 1]")
    model = load_checkpoint(_exists(args.checkpoint, "checkpoint")) if args.checkpoint else "sum"
    test = trees
    if args.corrupt_fraction > 0:
        test = [corrupt_relations(t, args.corrupt_fraction, np.random.default_rng([seed, i]))
                for i, t in enumerate(trees)]
    metrics = evaluate(model, test)
    _write_json(out / "metrics.json", metrics.to_dict())
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    if args.sweep:
        if model == "sum":
            raise UsageError("--sweep needs --checkpoint")
        seeds = [seed + k for k in range(args.sweep_seeds)]
        rows = sensitivity_sweep(model, trees, _fractions(args.sweep), seeds)
        write_sweep_csv(rows, out / "sensitivity.csv")
        print(f"wrote {out / 'sensitivity.csv'}")
    return EXIT_OK


def cmd_augment(args) -> int:
    trees = load_trees(args, need_labels=False)
    seed = _seed(args)
    cfg = AugmentConfig.from_flag(args.augment, args.corrupt_fraction, seed)
    rng = np.random.default_rng(seed)
    if cfg.corruption_fraction > 0:
        trees = [corrupt_relations(t, cfg.corruption_fraction, s) for t, s in zip(trees, rng.spawn(len(trees)))]
    result = augment_epoch(trees, cfg, rng)
    out = _out_dir(args.out_dir) / "augmented.jsonl"
    write_trees(result, out)
    print(f"{len(trees)} trees -> {len(result)} after augmentation; wrote {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    params = load_checkpoint(_exists(args.checkpoint, "checkpoint"))
    trees = read_trees(_exists(args.tree_file, "tree file")) if args.tree_file else []
    report = inspection_report(params, trees)
    Path(args.out_json).write_text(json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    if args.out_html:
        docs = [(t.doc_id, salience(t, params)) for t in trees]
        Path(args.out_html).write_text(salience_html(docs), encoding="utf-8")
    print("relation rank: " + ", ".join(report["relation_weights"]["rank"][:5]) + ", ...")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.task not in TASKS:
        raise UsageError(f"unknown task {args.task!r}; choose from {', '.join(TASKS)}")
    if args.n_trees < 2:
        raise UsageError("--n-trees must be >= 2")
    if args.depth < 1:
        raise UsageError("--depth must be >= 1")
    trees = synth_corpus(args.n_trees, args.task, _seed(args), max_leaves=args.depth)
    out = _out_dir(args.out_dir)
    write_trees(trees, out / "trees.jsonl")
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["doc_id", "label"])
        for t in trees:
            w.writerow([t.doc_id, t.label])
    lex = synth_lexicon()
    with open(out / "lexicon.tsv", "w", encoding="utf-8") as fh:
        fh.write("word\tpos\tneg\n")
        for word in sorted(lex.scores):
            p, n = lex.scores[word]
            fh.write(f"{word}\t{p!r}\t{n!r}\n")
    stats = tree_stats(trees)
    print(f"wrote {len(trees)} {args.task} trees to {out} (mean {stats.mean_edus:.2f} EDUs, "
          f"{sum(t.label for t in trees)} positive)")
    return EXIT_OK


# -- grid ---------------------------------------------------------------------

GRID_FIELDS = ["n", "learning_rate", "l2", "dropout_p", "status", "best_epoch", "val_loss", "val_accuracy",
               "val_balanced_accuracy", "error"]
GRID_KEYS = ("n", "learning_rate", "l2", "dropout_p")


def _list(text: str | None, cast, default):
    if text is None:
        return list(default)
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad value list {text!r}") from None


def grid_axes(args) -> dict[str, list]:
    axes = {
        "n": _list(args.grid_n, int, MEMORY_SIZES),
        "learning_rate": _list(args.grid_lr, float, LEARNING_RATES),
        "l2": _list(args.grid_l2, float, L2_STRENGTHS),
        "dropout_p": _list(args.grid_dropout, float, (0.0,)),
    }
    if args.grid_config:
        try:
            loaded = json.loads(_exists(args.grid_config, "grid config").read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise InputError(f"{args.grid_config}: {e}") from e
        unknown = set(loaded) - set(axes)
        if unknown:
            raise UsageError(f"unknown grid keys: {sorted(unknown)}")
        cast = {"n": int, "learning_rate": float, "l2": float, "dropout_p": float}
        for k, v in loaded.items():
            axes[k] = [cast[k](x) for x in (v if isinstance(v, list) else [v])]
    return axes


def _cell_key(cell: dict) -> tuple:
    return tuple(repr(cast(cell[k])) for k, cast in zip(GRID_KEYS, (int, float, float, float)))


def _run_cell(payload) -> dict:
    trees, split, config = payload
    row = {"n": config.n, "learning_rate": config.learning_rate, "l2": config.l2, "dropout_p": config.dropout_p}
    try:
        params, report = train(trees, config, split=split)
        m = evaluate(params, split[1])
        best = report.best
        row.update(status="ok", best_epoch=report.best_epoch,
                   val_loss=best.val_loss if best else "", val_accuracy=best.val_accuracy if best else "",
                   val_balanced_accuracy=m.balanced_accuracy, error="")
    except (DivergenceError, NumericError, ValueError) as e:
        row.update(status="failed", best_epoch="", val_loss="", val_accuracy="", val_balanced_accuracy="",
                   error=str(e).replace("\n", " "))
    return row


def _read_grid(path: Path) -> dict[tuple, dict]:
    if not path.exists():
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {_cell_key(r): r for r in rows if r.get("status") in ("ok", "failed")}


def _write_grid(path: Path, rows: list[dict]) -> None:
    tmp = path.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=GRID_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in GRID_FIELDS})
    tmp.replace(path)


def cmd_grid(args) -> int:
    base = resolve_config(args)
    axes = grid_axes(args)
    trees = load_trees(args)
    out = _out_dir(args.out_dir)
    path = out / "grid.csv"
    split = split_train_val(trees, base.val_fraction, base.seed)

    cells = []
    for values in itertools.product(*(axes[k] for k in GRID_KEYS)):
        cfg = TrainConfig.from_dict({**base.to_dict(), **dict(zip(GRID_KEYS, values))})
        cells.append(cfg)
    done = _read_grid(path)
    todo = [c for c in cells if _cell_key(vars(c)) not in done]
    if args.limit is not None:
        todo = todo[:args.limit]

    results = dict(done)
    order = [_cell_key(vars(c)) for c in cells]

    def record(row=None):
        # rewritten after every cell so an interrupted run leaves a valid, resumable file
        if row is not None:
            results[_cell_key(row)] = row
        _write_grid(path, [results[k] for k in order if k in results])

    payloads = [(trees, split, c) for c in todo]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for row in pool.map(_run_cell, payloads):
                record(row)
    else:
        for p in payloads:
            record(_run_cell(p))
    record()

    ok = [r for r in results.values() if r["status"] == "ok"]
    print(f"{len(results)}/{len(cells)} cells complete, {len(ok)} ok")
    if ok:
        best = min(ok, key=lambda r: (float(r["val_loss"]), _cell_key(r)))
        summary = {k: (int(best[k]) if k in ("n", "best_epoch") else float(best[k]))
                   for k in GRID_FIELDS if k not in ("status", "error")}
        _write_json(out / "best.json", summary)
        print("best by val loss: " + json.dumps(summary, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "featurize": cmd_featurize, "train": cmd_train, "evaluate": cmd_evaluate, "augment": cmd_augment,
    "inspect": cmd_inspect, "synth": cmd_synth, "grid": cmd_grid,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"discourse-lstm: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NumericError) as e:
        print(f"discourse-lstm: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, FileNotFoundError, IsADirectoryError, TreeError, FeaturizationError, DataError, StateError,
            ArityError, DimensionError, ExportError, UnsupportedVariantError, ConfigError, json.JSONDecodeError,
            UnicodeDecodeError) as e:
        print(f"discourse-lstm: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        print(f"discourse-lstm: input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

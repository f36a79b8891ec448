"""Metrics, the flat sentiment-sum baseline and the relation-noise sweep."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .augment import corrupt_relations
from .model import ModelParams, forward_tree, is_discourse
from .tree import DiscourseTree


class UndefinedMetricError(ValueError):
    pass


@dataclass
class Metrics:
    balanced_accuracy: float
    f1: float
    auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    n_examples: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def confusion(y_true: Sequence[int], y_pred: Sequence[int], positive: int = 1) -> tuple[int, int, int, int]:
    tp = fp = tn = fn = 0
    for t, p in zip(y_true, y_pred):
        if p == positive:
            if t == positive:
                tp += 1
            else:
                fp += 1
        elif t == positive:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def balanced_accuracy_from_counts(tp: int, fp: int, tn: int, fn: int) -> float:
    tpr = tp / (tp + fn) if tp + fn else 0.0
    tnr = tn / (tn + fp) if tn + fp else 0.0
    if tp + fn == 0:
        return tnr
    if tn + fp == 0:
        return tpr
    return (tpr + tnr) / 2.0


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def roc_auc(y_true: Sequence[int], scores: Sequence[float], positive: int = 1) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    y = np.asarray(y_true) == positive
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    ranks = rankdata(s)  # average ranks for ties
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def compute_metrics(y_true: Sequence[int], y_pred: Sequence[int], scores: Sequence[float] | None = None,
                    positive: int = 1) -> Metrics:
    """Binary metrics; ``scores`` are positive-class probabilities (AUC is None without them)."""
    tp, fp, tn, fn = confusion(y_true, y_pred, positive)
    auc = None
    if scores is not None:
        try:
            auc = roc_auc(y_true, scores, positive)
        except UndefinedMetricError:
            warnings.warn("single-class evaluation set: AUC undefined", stacklevel=2)
    return Metrics(balanced_accuracy_from_counts(tp, fp, tn, fn), f1_from_counts(tp, fp, fn), auc,
                   tp, fp, tn, fn, len(y_true))


def macro_f1(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    classes = sorted(set(y_true) | set(y_pred))
    vals = []
    for c in classes:
        tp, fp, _, fn = confusion(y_true, y_pred, c)
        vals.append(f1_from_counts(tp, fp, fn))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# predictors


def sum_baseline(tree: DiscourseTree) -> int:
    """1 iff the leaf sentiment scores sum to more than zero (ties are negative)."""
    total = math.fsum(float(leaf.features.sum()) for leaf in tree.leaves())
    return 1 if total > 0 else 0


def sum_baseline_score(tree: DiscourseTree) -> float:
    return math.fsum(float(leaf.features.sum()) for leaf in tree.leaves())


def predict(trees: Sequence[DiscourseTree], params: ModelParams) -> tuple[list[int], list[float]]:
    preds, scores = [], []
    for t in trees:
        probs = forward_tree(t, params).probs
        preds.append(int(np.argmax(probs)))
        scores.append(float(probs[1]) if len(probs) > 1 else float(probs[0]))
    return preds, scores


def evaluate(predictor: ModelParams | str | Callable[[DiscourseTree], int], dataset: Sequence[DiscourseTree]) -> Metrics:
    """Score a model checkpoint, the string ``"sum"`` (flat baseline) or any tree -> class callable."""
    y = [t.label for t in dataset]
    if any(v is None for v in y):
        raise ValueError("evaluate needs labeled trees")
    if isinstance(predictor, ModelParams):
        preds, scores = predict(dataset, predictor)
    elif predictor == "sum":
        preds = [sum_baseline(t) for t in dataset]
        scores = [sum_baseline_score(t) for t in dataset]
    else:
        preds = [predictor(t) for t in dataset]
        scores = [float(p) for p in preds]
    return compute_metrics(y, preds, scores)


# ---------------------------------------------------------------------------
# relation-noise sensitivity


@dataclass
class SweepRow:
    fraction: float
    balanced_accuracy: float
    f1: float
    auc: float | None
    seed_count: int


def _tree_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, index])


def sensitivity_sweep(params: ModelParams, testset: Sequence[DiscourseTree], fractions: Sequence[float],
                      seeds: Sequence[int] = (0,),
                      retrain: Callable[[float, int], ModelParams] | None = None) -> list[SweepRow]:
    """Evaluate under test-time relation noise, averaged over ``seeds``.

    Tree ``i`` under seed ``s`` is corrupted with generator ``(s, i)``
    regardless of the fraction, so larger fractions corrupt a superset of
    the nodes hit at smaller ones.  ``retrain(fraction, seed)``, if given,
    supplies a model trained on equally corrupted training data.
    """
    if not is_discourse(params.variant):
        warnings.warn(f"{params.variant} ignores relation types; the sweep will be flat", stacklevel=2)
    rows = []
    for frac in fractions:
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"fraction {frac} outside [0, 1]")
        per_seed = []
        for s in seeds:
            model = retrain(frac, s) if retrain is not None else params
            noisy = [corrupt_relations(t, frac, np.random.default_rng(_tree_seed(s, i))) for i, t in enumerate(testset)]
            per_seed.append(evaluate(model, noisy))
        aucs = [m.auc for m in per_seed if m.auc is not None]
        rows.append(SweepRow(
            fraction=frac,
            balanced_accuracy=float(np.mean([m.balanced_accuracy for m in per_seed])),
            f1=float(np.mean([m.f1 for m in per_seed])),
            auc=float(np.mean(aucs)) if aucs else None,
            seed_count=len(per_seed),
        ))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fraction", "balanced_accuracy", "f1", "auc", "seed_count"])
        for r in rows:
            w.writerow([r.fraction, r.balanced_accuracy, r.f1, "" if r.auc is None else r.auc, r.seed_count])

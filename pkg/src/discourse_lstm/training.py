"""Training loop: cross-entropy + L2, Adam, early stopping, augmentation, DropConnect."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .augment import AugmentConfig, augment_epoch, corrupt_relations
from .model import (VARIANTS, ConfigError, ModelParams, Weights, check_tree, init_params, is_bias,
                    run_tree)
from .tensor import NumericError, Tape
from .tree import NUM_RELATIONS, DiscourseTree

log = logging.getLogger(__name__)

#: Tuning grid for the recursive models.
MEMORY_SIZES = (10, 20, 50)
LEARNING_RATES = (1e-5, 1e-4, 1e-3)
L2_STRENGTHS = (0.001, 0.01, 0.05)
DROPOUT_RATES = (0.0, 0.1, 0.2, 0.5, 0.7)


class DataError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    def __init__(self, epoch: int, batch: int, detail: str = ""):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}" + (f": {detail}" if detail else ""))
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    variant: str = "discourse-childsum"
    n: int = 10
    learning_rate: float = 1e-3
    l2: float = 0.001
    patience: int = 10
    val_fraction: float = 0.2
    max_epochs: int = 100
    batch_size: int = 16
    dropout_p: float = 0.0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    n_classes: int | None = None

    def __post_init__(self):
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.learning_rate < 0 or self.l2 < 0:
            raise ConfigError("learning_rate and l2 must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# data split


def split_train_val(dataset: Sequence[DiscourseTree], val_fraction: float, seed: int = 0
                    ) -> tuple[list[DiscourseTree], list[DiscourseTree]]:
    """Stratified, seeded split; the validation share per class uses largest remainders."""
    if len(dataset) < 5:
        raise ConfigError(f"need at least 5 trees to split, got {len(dataset)}")
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    n_val = int(round(val_fraction * len(dataset)))
    n_val = min(max(n_val, 1), len(dataset) - 1)

    by_label: dict = {}
    for i, t in enumerate(dataset):
        by_label.setdefault(t.label, []).append(i)
    labels = sorted(by_label, key=lambda x: (x is None, x))
    quotas = {y: val_fraction * len(by_label[y]) for y in labels}
    take = {y: int(np.floor(q)) for y, q in quotas.items()}
    leftover = n_val - sum(take.values())
    for y in sorted(labels, key=lambda y: (-(quotas[y] - take[y]), labels.index(y)))[:max(leftover, 0)]:
        take[y] += 1

    val_idx: list[int] = []
    for y in labels:
        idx = np.array(by_label[y])
        rng.shuffle(idx)
        val_idx.extend(int(i) for i in idx[:take[y]])
    val_set = set(val_idx)
    train = [t for i, t in enumerate(dataset) if i not in val_set]
    val = [t for i, t in enumerate(dataset) if i in val_set]
    return train, val


# ---------------------------------------------------------------------------
# loss


def _label(tree: DiscourseTree) -> int:
    if tree.label is None:
        raise DataError(f"tree {tree.doc_id!r} has no label")
    return tree.label


def l2_penalty(weights: Weights | dict, names: Sequence[str], l2: float) -> T.Tensor | None:
    if l2 == 0.0 or not names:
        return None
    terms = [T.sum_squares(weights[k]) for k in names]
    return T.scale(T.add(*terms), l2)


def loss_tensor(tree: DiscourseTree, weights: Weights, l2: float = 0.0) -> T.Tensor:
    """Cross-entropy at the root plus ``l2 * sum ||W||^2`` over weight tensors."""
    label = _label(tree)
    out = run_tree(tree, weights)
    xent = T.softmax_xent(out.logits, label)
    pen = l2_penalty(weights, [k for k in weights.tensors if not is_bias(k)], l2)
    return xent if pen is None else T.add(xent, pen)


def loss(tree: DiscourseTree, params: ModelParams, l2: float = 0.0) -> float:
    return float(loss_tensor(tree, Weights.bind(params), l2).data)


def tree_gradients(tree: DiscourseTree, params: ModelParams, masks: dict | None = None
                   ) -> tuple[float, dict[str, np.ndarray], int]:
    """Cross-entropy, its gradient w.r.t. every parameter, and the predicted class."""
    tape = Tape()
    w = Weights.bind(params, tape, masks)
    out = run_tree(tree, w)
    xent = T.softmax_xent(out.logits, _label(tree))
    grads = T.backward(tape, xent).by_name()
    return float(xent.data), grads, out.prediction


def evaluate_loss(trees: Sequence[DiscourseTree], params: ModelParams) -> tuple[float, float]:
    """Mean cross-entropy and accuracy, inference mode."""
    if not trees:
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    for t in trees:
        w = Weights.bind(params)
        out = run_tree(t, w)
        total += float(T.softmax_xent(out.logits, _label(t)).data)
        correct += int(out.prediction == t.label)
    return total / len(trees), correct / len(trees)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params.tensors[k] = params.tensors[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def dropout_masks(params: ModelParams, p: float, rng: np.random.Generator) -> dict[str, np.ndarray] | None:
    """DropConnect masks over weight tensors, pre-scaled by 1/(1-p)."""
    if p <= 0.0:
        return None
    keep = 1.0 - p
    return {k: (rng.random(params[k].shape) < keep) / keep for k in params.weight_names}


def batch_step(params: ModelParams, batch: Sequence[DiscourseTree], l2: float, opt: Adam,
               masks: dict | None = None) -> tuple[float, int]:
    """One averaged-gradient Adam update; returns (mean xent, #correct)."""
    acc = params.zeros_like()
    total, correct = 0.0, 0
    for tree in batch:
        xent, grads, pred = tree_gradients(tree, params, masks)
        total += xent
        correct += int(pred == tree.label)
        for k, g in grads.items():
            acc[k] += g
    scale = 1.0 / len(batch)
    for k in acc:
        acc[k] *= scale
        if l2 and not is_bias(k):
            acc[k] += 2.0 * l2 * params[k]
    for k, g in acc.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {k}")
    opt.step(params, acc)
    return total / len(batch), correct


# ---------------------------------------------------------------------------
# early stopping


class EarlyStopping:
    """Tracks the best validation loss; ``update`` returns True when patience runs out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    n_train: int


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = "max_epochs"
    wall_time: float = 0.0

    @property
    def best(self) -> EpochRecord | None:
        for e in self.epochs:
            if e.epoch == self.best_epoch:
                return e
        return None

    def to_jsonl(self) -> str:
        """One JSON object per epoch plus a summary line.

        Wall time is left out so that identical runs give identical files.
        """
        lines = [json.dumps({"type": "epoch", **asdict(e)}, sort_keys=True) for e in self.epochs]
        lines.append(json.dumps({"type": "summary", "best_epoch": self.best_epoch,
                                 "stop_reason": self.stop_reason}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def infer_dims(trees: Sequence[DiscourseTree]) -> tuple[int, int]:
    d_in = None
    labels = set()
    for t in trees:
        labels.add(_label(t))
        for leaf in t.leaves():
            if leaf.features is None:
                raise DataError(f"tree {t.doc_id!r}: leaf {leaf.id} is not featurized")
            d = leaf.features.shape[0]
            if d_in is None:
                d_in = d
            elif d != d_in:
                raise DataError(f"tree {t.doc_id!r}: feature dimension {d} != {d_in}")
    if d_in is None:
        raise DataError("no featurized leaves in dataset")
    return d_in, max(2, max(labels) + 1)


def train(dataset: Sequence[DiscourseTree], config: TrainConfig, init: ModelParams | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None,
          split: tuple[list[DiscourseTree], list[DiscourseTree]] | None = None,
          ) -> tuple[ModelParams, TrainReport]:
    """Fit a model and return the parameters of the best-validation-loss epoch.

    All randomness (split, init, shuffling, augmentation, dropout) derives
    from ``config.seed``.  ``split`` overrides the internal train/val split.
    """
    started = time.perf_counter()
    train_set, val_set = split if split is not None else split_train_val(dataset, config.val_fraction, config.seed)
    d_in, C = infer_dims(list(train_set) + list(val_set))
    if config.n_classes is not None:
        C = config.n_classes
    for t in list(train_set) + list(val_set):
        check_tree(t, config.variant, d_in)

    master = np.random.default_rng(config.seed)
    init_rng, shuffle_rng, aug_rng, drop_rng, corrupt_rng = master.spawn(5)
    params = init.copy() if init is not None else init_params(config.variant, config.n, d_in, C, NUM_RELATIONS, init_rng)
    best = params.copy()
    opt = Adam(config.learning_rate)
    stopper = EarlyStopping(config.patience)
    report = TrainReport()

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        epoch_set = [train_set[i] for i in order]
        if config.augment.corruption_fraction > 0:
            streams = corrupt_rng.spawn(len(epoch_set))
            epoch_set = [corrupt_relations(t, config.augment.corruption_fraction, s) for t, s in zip(epoch_set, streams)]
        if config.augment.enabled:
            epoch_set = augment_epoch(epoch_set, config.augment, aug_rng.spawn(1)[0])
            epoch_set = [epoch_set[i] for i in shuffle_rng.permutation(len(epoch_set))]

        for b, start in enumerate(range(0, len(epoch_set), config.batch_size)):
            batch = epoch_set[start:start + config.batch_size]
            masks = dropout_masks(params, config.dropout_p, drop_rng)
            try:
                batch_step(params, batch, config.l2, opt, masks)
            except NumericError as e:
                raise DivergenceError(epoch, b, str(e)) from e

        train_loss, train_acc = evaluate_loss(train_set, params)
        val_loss, val_acc = evaluate_loss(val_set, params)
        if not np.isfinite(val_loss) or not np.isfinite(train_loss):
            raise DivergenceError(epoch, -1, "non-finite loss after epoch")
        rec = EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc, len(epoch_set))
        report.epochs.append(rec)
        log.info("epoch %d train %.4f/%.3f val %.4f/%.3f", epoch, train_loss, train_acc, val_loss, val_acc)
        if on_epoch is not None:
            on_epoch(rec)
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best = params.copy()
        if stop:
            report.stop_reason = "patience"
            break

    report.best_epoch = stopper.best_epoch
    report.wall_time = time.perf_counter() - started
    return best, report

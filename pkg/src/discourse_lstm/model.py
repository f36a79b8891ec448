"""Tree-LSTM and Discourse-LSTM cells, forward pass and checkpoints.

Parameter naming (``g`` ranges over the gates i, f, o, u):

* ``W_g``  input weights, ``[n, d_in]``
* ``U_g``  child-sum recurrent weights, ``[n, n]``
* ``U_g1``/``U_g2`` (g in i, o, u) and ``U_f11 .. U_f22``  N-ary weights, ``[n, n]``
* ``b_g``  biases, ``[n]``
* ``W_s``/``b_s``  softmax head, ``[C, n]`` / ``[C]``

Discourse variants give every ``U`` and ``b`` a leading relation axis of
extent ``R`` and add the hierarchy transforms ``W_h``/``W_c`` of shape
``[2, n, n]`` (index 0 nucleus, 1 satellite).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tape, Tensor
from .tree import NUM_RELATIONS, DiscourseTree, Hierarchy, RelationType, postorder

VARIANTS = ("childsum", "nary", "discourse-childsum", "discourse-nary")
GATES = ("i", "f", "o", "u")
CHECKPOINT_FORMAT = "discourse-lstm-checkpoint"


class ConfigError(ValueError):
    pass


class ArityError(ValueError):
    pass


class StateError(ValueError):
    pass


class LabelError(ValueError):
    pass


def is_discourse(variant: str) -> bool:
    return variant.startswith("discourse-")


def is_nary(variant: str) -> bool:
    return variant.endswith("nary")


def recurrent_names(variant: str) -> list[str]:
    if is_nary(variant):
        return [f"U_{g}{m}" for g in ("i", "o", "u") for m in (1, 2)] + [
            f"U_f{k}{m}" for k in (1, 2) for m in (1, 2)
        ]
    return [f"U_{g}" for g in GATES]


def param_shapes(variant: str, n: int, d_in: int, C: int, R: int = NUM_RELATIONS) -> dict[str, tuple[int, ...]]:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    for name, v in (("n", n), ("d_in", d_in), ("C", C), ("R", R)):
        if not isinstance(v, (int, np.integer)) or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    disc = is_discourse(variant)
    lead = (R,) if disc else ()
    shapes: dict[str, tuple[int, ...]] = {}
    for g in GATES:
        shapes[f"W_{g}"] = (n, d_in)
    for name in recurrent_names(variant):
        shapes[name] = lead + (n, n)
    for g in GATES:
        shapes[f"b_{g}"] = lead + (n,)
    if disc:
        shapes["W_h"] = (2, n, n)
        shapes["W_c"] = (2, n, n)
    shapes["W_s"] = (C, n)
    shapes["b_s"] = (C,)
    return shapes


def is_bias(name: str) -> bool:
    return name.startswith("b_")


@dataclass
class ModelParams:
    variant: str
    n: int
    d_in: int
    C: int
    R: int
    tensors: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        expected = param_shapes(self.variant, self.n, self.d_in, self.C, self.R)
        if set(expected) != set(self.tensors):
            missing = set(expected) - set(self.tensors)
            extra = set(self.tensors) - set(expected)
            raise ConfigError(f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, shape in expected.items():
            a = np.asarray(self.tensors[k], dtype=np.float64)
            if a.shape != shape:
                raise ConfigError(f"{k}: shape {list(a.shape)} != expected {list(shape)}")
            if not np.isfinite(a).all():
                raise ConfigError(f"{k}: non-finite entries")
            self.tensors[k] = a

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def weight_names(self) -> list[str]:
        return [k for k in self.tensors if not is_bias(k)]

    def copy(self) -> ModelParams:
        return ModelParams(self.variant, self.n, self.d_in, self.C, self.R,
                           {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def init_params(variant: str, n: int, d_in: int, C: int = 2, R: int = NUM_RELATIONS,
                rng: np.random.Generator | int | None = 0) -> ModelParams:
    """Weights ~ U(-1/sqrt(n), 1/sqrt(n)), biases zero."""
    shapes = param_shapes(variant, n, d_in, C, R)
    rng = np.random.default_rng(rng)
    bound = 1.0 / np.sqrt(n)
    tensors = {}
    for name, shape in shapes.items():
        tensors[name] = np.zeros(shape) if is_bias(name) else rng.uniform(-bound, bound, size=shape)
    return ModelParams(variant, n, d_in, C, R, tensors)


def zero_params(variant: str, n: int, d_in: int, C: int = 2, R: int = NUM_RELATIONS) -> ModelParams:
    shapes = param_shapes(variant, n, d_in, C, R)
    return ModelParams(variant, n, d_in, C, R, {k: np.zeros(s) for k, s in shapes.items()})


def tie_discourse(plain: ModelParams, R: int = NUM_RELATIONS) -> ModelParams:
    """Discourse params equivalent to ``plain``: identity hierarchy, tied relation slices."""
    if is_discourse(plain.variant):
        raise ConfigError("tie_discourse expects a plain Tree-LSTM")
    variant = "discourse-" + plain.variant
    n = plain.n
    tensors = {}
    for k, v in plain.tensors.items():
        if k.startswith("U_") or k in ("b_i", "b_f", "b_o", "b_u"):
            tensors[k] = np.repeat(v[None], R, axis=0)
        else:
            tensors[k] = v.copy()
    eye = np.stack([np.eye(n), np.eye(n)])
    tensors["W_h"] = eye.copy()
    tensors["W_c"] = eye.copy()
    return ModelParams(variant, n, plain.d_in, plain.C, R, tensors)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ModelParams, path: str | Path, extra: Mapping | None = None) -> None:
    # json writes floats via repr, which round-trips float64 exactly
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "variant": params.variant,
        "n": params.n,
        "d_in": params.d_in,
        "C": params.C,
        "R": params.R,
        "relations": [RelationType.from_index(i).value for i in range(min(params.R, NUM_RELATIONS))],
        "hierarchies": [h.value for h in Hierarchy],
        "tensors": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in params.tensors.items()},
    }
    if extra:
        doc["meta"] = dict(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a model checkpoint")
    tensors = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["tensors"].items()}
    return ModelParams(doc["variant"], doc["n"], doc["d_in"], doc["C"], doc["R"], tensors)


# ---------------------------------------------------------------------------
# cells


@dataclass
class NodeState:
    c: Tensor
    h: Tensor
    node_id: int = -1


class Weights:
    """Parameter tensors bound to one tape, with per-relation slices cached.

    Slicing ``U_i[r]`` once per tree rather than once per node keeps the tape
    short; the values are the same either way.
    """

    def __init__(self, variant: str, tensors: Mapping[str, Tensor], n: int, d_in: int):
        self.variant = variant
        self.tensors = tensors
        self.n = n
        self.d_in = d_in
        self._slices: dict[tuple[str, int], Tensor] = {}

    @classmethod
    def bind(cls, params: ModelParams, tape: Tape | None = None,
             masks: Mapping[str, np.ndarray] | None = None) -> Weights:
        """Watch every parameter on ``tape``; ``masks`` multiply weights (DropConnect)."""
        tape = tape if tape is not None else Tape(record=False)
        tensors = {}
        for k, v in params.tensors.items():
            t = tape.watch(k, v)
            if masks is not None and k in masks:
                t = T.mul(t, masks[k])
            tensors[k] = t
        return cls(params.variant, tensors, params.n, params.d_in)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def slice(self, name: str, k: int) -> Tensor:
        key = (name, k)
        s = self._slices.get(key)
        if s is None:
            s = self._slices[key] = T.take(self.tensors[name], k)
        return s

    def at(self, name: str, r: int | None) -> Tensor:
        return self.tensors[name] if r is None else self.slice(name, r)


def _as_input(x) -> Tensor | None:
    if x is None or isinstance(x, Tensor):
        return x
    return T.constant(np.asarray(x, dtype=np.float64).reshape(-1))


def _gate(x: Tensor | None, W: Tensor, terms: Sequence[tuple[Tensor, Tensor]], b: Tensor) -> Tensor:
    pairs = [(W, x)] if x is not None else []
    pairs.extend(terms)
    return T.affine(pairs, b)


def _state_key(h: Tensor, c: Tensor, tau: Hierarchy | None) -> tuple:
    return (h.data.tobytes(), c.data.tobytes(), -1 if tau is None else tau.index)


def _check_x(x: Tensor | None, w: Weights) -> None:
    if x is not None and x.shape != (w.d_in,):
        raise DimensionError(f"input has shape {list(x.shape)}, expected [{w.d_in}]")


def _check_child(st: NodeState, n: int) -> None:
    if st.h.shape != (n,) or st.c.shape != (n,):
        raise DimensionError(f"child state has shape {list(st.h.shape)}/{list(st.c.shape)}, expected [{n}]")


def _childsum_core(x, hs, cs, w: Weights, r: int | None, node_id: int) -> NodeState:
    U = {g: w.at(f"U_{g}", r) for g in GATES}
    b = {g: w.at(f"b_{g}", r) for g in GATES}
    h_sum = None
    if hs:
        h_sum = hs[0] if len(hs) == 1 else T.add(*hs)

    def terms(g: str) -> list:
        return [] if h_sum is None else [(U[g], h_sum)]

    i = T.sigmoid(_gate(x, w["W_i"], terms("i"), b["i"]))
    o = T.sigmoid(_gate(x, w["W_o"], terms("o"), b["o"]))
    u = T.tanh(_gate(x, w["W_u"], terms("u"), b["u"]))
    c = T.mul(i, u)
    if hs:
        forgets = [T.mul(T.sigmoid(_gate(x, w["W_f"], [(U["f"], hk)], b["f"])), ck) for hk, ck in zip(hs, cs)]
        c = T.add(c, *forgets)
    h = T.mul(o, T.tanh(c))
    return NodeState(c, h, node_id)


def _nary_core(x, hs, cs, w: Weights, r: int | None, node_id: int) -> NodeState:
    b = {g: w.at(f"b_{g}", r) for g in GATES}
    if not hs:
        i = T.sigmoid(_gate(x, w["W_i"], [], b["i"]))
        o = T.sigmoid(_gate(x, w["W_o"], [], b["o"]))
        u = T.tanh(_gate(x, w["W_u"], [], b["u"]))
        c = T.mul(i, u)
        return NodeState(c, T.mul(o, T.tanh(c)), node_id)

    def terms(g: str) -> list:
        return [(w.at(f"U_{g}{m + 1}", r), hs[m]) for m in range(2)]

    i = T.sigmoid(_gate(x, w["W_i"], terms("i"), b["i"]))
    o = T.sigmoid(_gate(x, w["W_o"], terms("o"), b["o"]))
    u = T.tanh(_gate(x, w["W_u"], terms("u"), b["u"]))
    parts = [T.mul(i, u)]
    for k in range(2):
        fk = T.sigmoid(_gate(x, w["W_f"], [(w.at(f"U_f{k + 1}{m + 1}", r), hs[m]) for m in range(2)], b["f"]))
        parts.append(T.mul(fk, cs[k]))
    c = T.add(*parts)
    return NodeState(c, T.mul(o, T.tanh(c)), node_id)


def childsum_cell(x, children: Sequence[NodeState], weights: Weights, node_id: int = -1) -> NodeState:
    """Child-sum Tree-LSTM transition.

    Children are summed in a canonical order keyed on their state bytes so
    that the result is bit-identical under any permutation of ``children``.
    """
    x = _as_input(x)
    _check_x(x, weights)
    for st in children:
        _check_child(st, weights.n)
    kids = sorted(children, key=lambda s: _state_key(s.h, s.c, None))
    return _childsum_core(x, [s.h for s in kids], [s.c for s in kids], weights, None, node_id)


def nary_cell(x, children: Sequence[NodeState], weights: Weights, node_id: int = -1) -> NodeState:
    x = _as_input(x)
    _check_x(x, weights)
    if children and len(children) != 2:
        raise ArityError(f"node {node_id}: N-ary cell needs exactly 2 children, got {len(children)}")
    for st in children:
        _check_child(st, weights.n)
    return _nary_core(x, [s.h for s in children], [s.c for s in children], weights, None, node_id)


def _hierarchy_transform(children, weights: Weights, node_id: int):
    hs, cs = [], []
    for st, tau in children:
        if not isinstance(tau, Hierarchy):
            raise LabelError(f"node {node_id}: child {st.node_id} has no hierarchy label")
        _check_child(st, weights.n)
        hs.append(T.matvec(weights.slice("W_h", tau.index), st.h))
        cs.append(T.matvec(weights.slice("W_c", tau.index), st.c))
    return hs, cs


def discourse_childsum_cell(x, children: Sequence[tuple[NodeState, Hierarchy]], relation: int | RelationType,
                            weights: Weights, node_id: int = -1) -> NodeState:
    x = _as_input(x)
    _check_x(x, weights)
    r = relation.index if isinstance(relation, RelationType) else int(relation)
    for _, tau in children:
        if not isinstance(tau, Hierarchy):
            raise LabelError(f"node {node_id}: child without hierarchy label")
    kids = sorted(children, key=lambda p: _state_key(p[0].h, p[0].c, p[1]))
    hs, cs = _hierarchy_transform(kids, weights, node_id)
    return _childsum_core(x, hs, cs, weights, r, node_id)


def discourse_nary_cell(x, children: Sequence[tuple[NodeState, Hierarchy]], relation: int | RelationType,
                        weights: Weights, node_id: int = -1) -> NodeState:
    x = _as_input(x)
    _check_x(x, weights)
    if children and len(children) != 2:
        raise ArityError(f"node {node_id}: N-ary cell needs exactly 2 children, got {len(children)}")
    r = relation.index if isinstance(relation, RelationType) else int(relation)
    hs, cs = _hierarchy_transform(children, weights, node_id)
    return _nary_core(x, hs, cs, weights, r, node_id)


# ---------------------------------------------------------------------------
# whole trees


@dataclass
class TreeOutput:
    probs: np.ndarray
    logits: Tensor
    root: NodeState
    states: dict[int, NodeState]

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.probs))


def check_tree(tree: DiscourseTree, variant: str, d_in: int | None = None) -> None:
    for node in tree.nodes.values():
        if node.is_leaf:
            if node.features is None:
                raise StateError(f"{tree.doc_id}: leaf {node.id} is not featurized")
            if d_in is not None and node.features.shape != (d_in,):
                raise DimensionError(f"{tree.doc_id}: leaf {node.id} has {node.features.shape[0]} features, model expects {d_in}")
        elif is_nary(variant) and len(node.children) != 2:
            raise ArityError(f"{tree.doc_id}: node {node.id} has {len(node.children)} children; N-ary models need 2")


def run_tree(tree: DiscourseTree, weights: Weights) -> TreeOutput:
    """Postorder evaluation of ``tree`` with already-bound weights."""
    variant = weights.variant
    check_tree(tree, variant, weights.d_in)
    disc = is_discourse(variant)
    nary = is_nary(variant)
    states: dict[int, NodeState] = {}
    for nid in postorder(tree):
        node = tree.nodes[nid]
        x = T.constant(node.features) if node.is_leaf else None
        kids = [states[c] for c in node.children]
        if disc:
            pairs = [(states[c], tree.nodes[c].hierarchy) for c in node.children]
            cell = discourse_nary_cell if nary else discourse_childsum_cell
            states[nid] = cell(x, pairs, node.relation.index, weights, nid)
        else:
            cell = nary_cell if nary else childsum_cell
            states[nid] = cell(x, kids, weights, nid)
    root = states[tree.root]
    logits = T.affine([(weights["W_s"], root.h)], weights["b_s"])
    return TreeOutput(T.softmax(logits.data), logits, root, states)


def forward_tree(tree: DiscourseTree, params: ModelParams, tape: Tape | None = None) -> TreeOutput:
    return run_tree(tree, Weights.bind(params, tape))


def predict_proba(tree: DiscourseTree, params: ModelParams) -> np.ndarray:
    return forward_tree(tree, params).probs

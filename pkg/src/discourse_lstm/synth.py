"""Synthetic labeled discourse-tree corpora for desk-scale experiments.

Leaf scores are multiples of 1/8 in [-1, 1], so every partial sum is exact
in float64 and "flat sum is exactly zero" really means zero.  Each EDU is a
single token (``pos3``, ``neg5`` ...) whose lexicon entry reproduces the
score, so corpora can be re-featurized from text with :func:`synth_lexicon`.

Tasks
-----
nucleus-top-split
    The root joins a nucleus and a satellite subtree whose scores cancel
    exactly; the label is the sign of the nucleus subtree's sum.  Only the
    hierarchy labels reveal which side matters.
relation-dependent
    The label is 1 iff the root relation is the designated one (Contrast by
    default); no other node carries that relation.
bag-equivalent
    The label is the sign of the flat score sum, so discourse structure adds
    nothing over the sum baseline.
"""

from __future__ import annotations

import numpy as np

from .features import Lexicon
from .tree import RST_RELATIONS, DiscourseNode, DiscourseTree, Hierarchy, RelationType

TASKS = ("nucleus-top-split", "relation-dependent", "bag-equivalent")
GRID = 8  # scores are k / GRID


def _word(k: int) -> str:
    return f"pos{k}" if k > 0 else f"neg{-k}"


def synth_lexicon() -> Lexicon:
    scores = {}
    for k in range(1, GRID + 1):
        scores[f"pos{k}"] = (k / GRID, 0.0)
        scores[f"neg{k}"] = (0.0, k / GRID)
    return Lexicon(scores)


class _Builder:
    def __init__(self, rng: np.random.Generator, relations: tuple[RelationType, ...]):
        self.rng = rng
        self.relations = relations
        self.nodes: dict[int, DiscourseNode] = {}

    def _new(self, **kw) -> DiscourseNode:
        node = DiscourseNode(id=len(self.nodes), **kw)
        self.nodes[node.id] = node
        return node

    def shape(self, n_leaves: int, hierarchy: Hierarchy | None) -> tuple[DiscourseNode, list[DiscourseNode]]:
        """Random binary tree over ``n_leaves`` leaves; returns (root, leaves in order)."""
        if n_leaves == 1:
            leaf = self._new(relation=RelationType.LEAF_UNIT, hierarchy=hierarchy)
            return leaf, [leaf]
        node = self._new(relation=self.relations[int(self.rng.integers(len(self.relations)))], hierarchy=hierarchy)
        split = int(self.rng.integers(1, n_leaves))
        pattern = [(Hierarchy.NUCLEUS, Hierarchy.SATELLITE), (Hierarchy.SATELLITE, Hierarchy.NUCLEUS),
                   (Hierarchy.NUCLEUS, Hierarchy.NUCLEUS)][int(self.rng.integers(3))]
        left, ll = self.shape(split, pattern[0])
        right, rl = self.shape(n_leaves - split, pattern[1])
        node.children = [left.id, right.id]
        return node, ll + rl


def _fill(leaves: list[DiscourseNode], ks: list[int]) -> None:
    for leaf, k in zip(leaves, ks):
        leaf.edu_text = _word(k)
        leaf.features = np.array([k / GRID])


def _draw_scores(rng: np.random.Generator, n: int) -> list[int]:
    ks = rng.integers(1, GRID + 1, size=n) * rng.choice([-1, 1], size=n)
    return [int(k) for k in ks]


def _signed_scores(rng: np.random.Generator, n: int, positive: bool) -> list[int]:
    while True:
        ks = _draw_scores(rng, n)
        s = sum(ks)
        if s != 0:
            return ks if (s > 0) == positive else [-k for k in ks]


def synth_tree(task: str, label: int, rng: np.random.Generator, max_leaves: int = 4,
               designated: RelationType = RelationType.CONTRAST, doc_id: str = "") -> DiscourseTree:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {TASKS}")
    if max_leaves < 1:
        raise ValueError("max_leaves must be >= 1")

    if task == "nucleus-top-split":
        b = _Builder(rng, RST_RELATIONS)
        root = b._new(relation=RST_RELATIONS[int(rng.integers(len(RST_RELATIONS)))], hierarchy=None)
        k = int(rng.integers(1, max_leaves + 1))
        nuc, nuc_leaves = b.shape(k, Hierarchy.NUCLEUS)
        sat, sat_leaves = b.shape(k, Hierarchy.SATELLITE)
        ks = _signed_scores(rng, k, positive=label == 1)
        _fill(nuc_leaves, ks)
        _fill(sat_leaves, [-ks[i] for i in rng.permutation(k)])
        root.children = [nuc.id, sat.id] if rng.integers(2) == 0 else [sat.id, nuc.id]
    elif task == "relation-dependent":
        others = tuple(r for r in RST_RELATIONS if r is not designated)
        b = _Builder(rng, others)
        root = b._new(relation=designated if label == 1 else others[int(rng.integers(len(others)))], hierarchy=None)
        sides = []
        all_leaves = []
        for h in [(Hierarchy.NUCLEUS, Hierarchy.SATELLITE), (Hierarchy.SATELLITE, Hierarchy.NUCLEUS)][int(rng.integers(2))]:
            sub, leaves = b.shape(int(rng.integers(1, max_leaves + 1)), h)
            sides.append(sub.id)
            all_leaves += leaves
        root.children = sides
        _fill(all_leaves, _draw_scores(rng, len(all_leaves)))
    else:
        b = _Builder(rng, RST_RELATIONS)
        n = int(rng.integers(2, 2 * max_leaves + 1))
        root, leaves = b.shape(n, None)
        _fill(leaves, _signed_scores(rng, n, positive=label == 1))

    return DiscourseTree(nodes=b.nodes, root=root.id, label=int(label), doc_id=doc_id)


def synth_corpus(n_trees: int, task: str = "nucleus-top-split", seed: int = 0, max_leaves: int = 4,
                 designated: RelationType = RelationType.CONTRAST) -> list[DiscourseTree]:
    """``n_trees`` trees with exactly balanced labels (up to one for odd counts)."""
    if n_trees < 2:
        raise ValueError("n_trees must be >= 2")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n_trees) % 2)
    return [synth_tree(task, int(y), rng, max_leaves, designated, doc_id=f"{task}-{i:05d}")
            for i, y in enumerate(labels)]

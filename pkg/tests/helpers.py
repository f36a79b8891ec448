"""Random trees and parameters shared by the test modules."""

from __future__ import annotations

import numpy as np

from discourse_lstm.model import init_params
from discourse_lstm.tree import RST_RELATIONS, DiscourseNode, DiscourseTree, Hierarchy, RelationType


def random_tree(rng: np.random.Generator, n_leaves: int | None = None, max_leaves: int = 8, d_in: int = 1,
                binary: bool = True, label: int | None = None, with_text: bool = True,
                doc_id: str = "doc") -> DiscourseTree:
    """Random discourse tree with featurized leaves.

    Binary trees with ``k`` leaves have ``2k - 1`` nodes.  Non-binary trees
    allow up to 4 children per inner node.
    """
    if n_leaves is None:
        n_leaves = int(rng.integers(1, max_leaves + 1))
    nodes: dict[int, DiscourseNode] = {}
    counter = iter(range(10_000))

    def build(k: int, hierarchy) -> int:
        nid = next(counter)
        if k == 1:
            feats = rng.normal(size=d_in)
            text = f"edu{nid}" if with_text else None
            nodes[nid] = DiscourseNode(nid, RelationType.LEAF_UNIT, hierarchy, [], text, feats)
            return nid
        arity = 2 if binary else int(rng.integers(2, min(k, 4) + 1))
        cuts = np.sort(rng.choice(np.arange(1, k), size=arity - 1, replace=False))
        sizes = np.diff(np.concatenate([[0], cuts, [k]]))
        node = DiscourseNode(nid, RST_RELATIONS[int(rng.integers(len(RST_RELATIONS)))], hierarchy)
        nodes[nid] = node
        node.children = [build(int(s), Hierarchy.NUCLEUS if rng.random() < 0.5 else Hierarchy.SATELLITE)
                         for s in sizes]
        return nid

    root = build(n_leaves, None)
    if label is None:
        label = int(rng.integers(2))
    return DiscourseTree(nodes, root, label, doc_id)


def random_params(variant: str, rng: np.random.Generator, n: int = 4, d_in: int = 1, C: int = 2,
                  scale: float = 0.6):
    """Parameters with non-zero biases so every term of every gate is exercised."""
    params = init_params(variant, n, d_in, C, rng=rng)
    for k, v in params.tensors.items():
        params.tensors[k] = rng.uniform(-scale, scale, size=v.shape)
    return params

"""Tree augmentation: node reordering, artificial leaf insertion, relation noise.

All operations return fresh copies; the input tree is never modified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tree import RST_RELATIONS, DiscourseNode, DiscourseTree, Hierarchy


class NotApplicableError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    reorder: bool = False
    insert: bool = False
    corruption_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.corruption_fraction <= 1.0:
            raise ValueError(f"corruption_fraction must lie in [0, 1], got {self.corruption_fraction}")

    @classmethod
    def from_flag(cls, flag: str, corruption_fraction: float = 0.0, seed: int = 0) -> AugmentConfig:
        flags = {"none": (False, False), "reorder": (True, False), "insert": (False, True), "both": (True, True)}
        try:
            reorder, insert = flags[flag]
        except KeyError:
            raise ValueError(f"unknown augmentation {flag!r}; choose from {sorted(flags)}") from None
        return cls(reorder, insert, corruption_fraction, seed)

    @property
    def enabled(self) -> bool:
        return self.reorder or self.insert


# ---------------------------------------------------------------------------
# node reordering


def reorder_candidates(tree: DiscourseTree) -> list[int]:
    """Inner, non-root nodes with two children whose parent is binary."""
    parents = tree.parent_map()
    out = []
    for nid, node in tree.nodes.items():
        if nid == tree.root or len(node.children) != 2:
            continue
        if len(tree.nodes[parents[nid]].children) == 2:
            out.append(nid)
    return sorted(out)


def reorder_node(tree: DiscourseTree, node_id: int, rng: np.random.Generator | None = None) -> DiscourseTree:
    """Rotate inner node ``n`` into its sibling's slot.

    ``P(n(l, r), m)`` becomes ``P(l, n(r, m))`` and ``P(m, n(l, r))`` becomes
    ``P(n(m, l), r)``.  The left-to-right leaf order is unchanged and every
    node keeps its own relation and hierarchy label.  ``rng`` is accepted for
    interface symmetry; the rotation itself is deterministic.
    """
    if node_id not in tree.nodes:
        raise NotApplicableError(f"no node {node_id}")
    if node_id == tree.root:
        raise NotApplicableError("cannot reorder the root")
    node = tree.nodes[node_id]
    if len(node.children) != 2:
        raise NotApplicableError(f"node {node_id} needs exactly 2 children, has {len(node.children)}")
    parent_id = tree.parent_map()[node_id]
    if len(tree.nodes[parent_id].children) != 2:
        raise NotApplicableError(f"parent of node {node_id} is not binary")

    out = tree.copy()
    P = out.nodes[parent_id]
    n = out.nodes[node_id]
    l, r = n.children
    if P.children[0] == node_id:
        m = P.children[1]
        P.children = [l, node_id]
        n.children = [r, m]
    else:
        m = P.children[0]
        P.children = [node_id, r]
        n.children = [m, l]
    return out


# ---------------------------------------------------------------------------
# artificial leaf insertion


def split_features(sigma: np.ndarray, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (omega*sigma, (1-omega)*sigma) with left + right == sigma exactly.

    The larger share is formed by multiplication and the smaller one by
    subtraction; the larger share is at least sigma/2, so by Sterbenz's
    lemma the subtraction is exact and no feature mass is lost to rounding.
    """
    big_left = omega >= 0.5
    left = np.where(big_left, omega * sigma, 0.0)
    right = np.where(big_left, 0.0, (1.0 - omega) * sigma)
    left = np.where(big_left, left, sigma - right)
    right = np.where(big_left, sigma - left, right)
    return left, right


def insert_candidates(tree: DiscourseTree) -> list[int]:
    return sorted(nid for nid, n in tree.nodes.items() if n.is_leaf and n.features is not None)


def insert_leaf(tree: DiscourseTree, node_id: int, rng: np.random.Generator,
                omega: np.ndarray | None = None) -> DiscourseTree:
    """Split leaf ``n`` into two children carrying ``omega*s`` and ``(1-omega)*s``.

    ``n`` becomes an inner node with a uniformly drawn relation; the new
    children get independent uniform hierarchy labels.  The left child keeps
    the EDU text, the right one gets an empty string.  ``omega`` may be given
    explicitly; otherwise it is drawn elementwise from U[0, 1].
    """
    if node_id not in tree.nodes:
        raise NotApplicableError(f"no node {node_id}")
    src = tree.nodes[node_id]
    if not src.is_leaf:
        raise NotApplicableError(f"node {node_id} is not a leaf")
    if src.features is None:
        raise NotApplicableError(f"leaf {node_id} is not featurized")

    sigma = src.features
    if omega is None:
        omega = rng.uniform(0.0, 1.0, size=sigma.shape)
    omega = np.broadcast_to(np.asarray(omega, dtype=np.float64), sigma.shape)
    left, right = split_features(sigma, omega)

    relation = RST_RELATIONS[int(rng.integers(len(RST_RELATIONS)))]
    h_left, h_right = (Hierarchy.NUCLEUS, Hierarchy.SATELLITE)[int(rng.integers(2))], \
        (Hierarchy.NUCLEUS, Hierarchy.SATELLITE)[int(rng.integers(2))]

    out = tree.copy()
    n = out.nodes[node_id]
    next_id = max(out.nodes) + 1
    lid, rid = next_id, next_id + 1
    out.nodes[lid] = DiscourseNode(lid, n.relation, h_left, [], n.edu_text, left)
    out.nodes[rid] = DiscourseNode(rid, n.relation, h_right, [], "", right)
    n.relation = relation
    n.children = [lid, rid]
    n.edu_text = None
    n.features = None
    return out


# ---------------------------------------------------------------------------
# per-epoch driver


def augment_epoch(trainset: list[DiscourseTree], config: AugmentConfig,
                  rng: np.random.Generator | int | None = None) -> list[DiscourseTree]:
    """Originals plus at most one modified copy per enabled technique per tree.

    Each tree draws from its own child generator spawned from ``rng`` so the
    result does not depend on how trees are scheduled.
    """
    rng = np.random.default_rng(config.seed if rng is None else rng)
    streams = rng.spawn(len(trainset))
    out: list[DiscourseTree] = []
    for tree, trng in zip(trainset, streams):
        out.append(tree)
        if config.reorder:
            cands = reorder_candidates(tree)
            if cands:
                out.append(reorder_node(tree, cands[int(trng.integers(len(cands)))], trng))
        if config.insert:
            cands = insert_candidates(tree)
            if cands:
                out.append(insert_leaf(tree, cands[int(trng.integers(len(cands)))], trng))
    return out


# ---------------------------------------------------------------------------
# relation noise


def n_corrupted(fraction: float, n_inner: int) -> int:
    # round first: 0.1 * 40 is 4.000000000000001 in binary floating point
    return min(n_inner, math.ceil(round(fraction * n_inner, 9)))


def corrupt_relations(tree: DiscourseTree, fraction: float, rng: np.random.Generator | int | None) -> DiscourseTree:
    """Redraw the relation of ceil(fraction * #inner) uniformly chosen inner nodes.

    The node order and the replacement draws are taken before ``fraction``
    is applied, so with a fixed seed the nodes corrupted at a smaller
    fraction are a subset of those at a larger one (with the same new
    labels).  A redraw may coincide with the original label.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    rng = np.random.default_rng(rng)
    inner = sorted(nid for nid, n in tree.nodes.items() if n.children)
    order = rng.permutation(len(inner))
    draws = rng.integers(len(RST_RELATIONS), size=len(inner))
    out = tree.copy()
    for pos in range(n_corrupted(fraction, len(inner))):
        out.nodes[inner[order[pos]]].relation = RST_RELATIONS[int(draws[pos])]
    return out

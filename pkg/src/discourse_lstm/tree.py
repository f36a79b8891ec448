"""RST discourse trees: data model, JSON-lines I/O, validation and traversal.

A relation lives on the parent node and names the relation among its
children.  Leaves carry the reserved ``LEAF_UNIT`` relation so every node
indexes a relation slice in the discourse models.  The root has no
hierarchy label; every other node is a nucleus or a satellite.
"""

from __future__ import annotations

import copy
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)


class TreeError(ValueError):
    """Raised for malformed tree records; carries the offending node id."""

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message if node_id is None else f"node {node_id}: {message}")
        self.node_id = node_id


class RelationType(Enum):
    # index order is part of the checkpoint format; append only
    ELABORATION = "Elaboration"
    JOINT = "Joint"
    SAME_UNIT = "Same-unit"
    BACKGROUND = "Background"
    ATTRIBUTION = "Attribution"
    COMPARISON = "Comparison"
    TEMPORAL = "Temporal"
    ENABLEMENT = "Enablement"
    CONTRAST = "Contrast"
    SUMMARY = "Summary"
    CONDITION = "Condition"
    MANNER_MEANS = "Manner-means"
    CAUSE = "Cause"
    EXPLANATION = "Explanation"
    EVALUATION = "Evaluation"
    TEXTUAL_ORGANIZATION = "Textual-organization"
    TOPIC_CHANGE = "Topic-change"
    TOPIC_COMMENT = "Topic-comment"
    LEAF_UNIT = "LeafUnit"

    @property
    def index(self) -> int:
        return _REL_INDEX[self]

    @classmethod
    def from_index(cls, i: int) -> RelationType:
        return _RELATIONS[i]

    @classmethod
    def parse(cls, s: str) -> RelationType:
        key = _norm_label(s)
        try:
            return _REL_BY_KEY[key]
        except KeyError:
            raise TreeError(f"unknown relation {s!r}") from None

    def __str__(self) -> str:
        return self.value


_RELATIONS: tuple[RelationType, ...] = tuple(RelationType)
_REL_INDEX = {r: i for i, r in enumerate(_RELATIONS)}


def _norm_label(s: str) -> str:
    return re.sub(r"[\s_]+", "-", s.strip().lower())


_REL_BY_KEY = {_norm_label(r.value): r for r in _RELATIONS}

#: The 18 rhetorical relations (everything except the internal leaf slot).
RST_RELATIONS: tuple[RelationType, ...] = _RELATIONS[:-1]
NUM_RELATIONS = len(_RELATIONS)  # 19, including LEAF_UNIT


class Hierarchy(Enum):
    NUCLEUS = "nucleus"
    SATELLITE = "satellite"

    @property
    def index(self) -> int:
        return 0 if self is Hierarchy.NUCLEUS else 1

    @classmethod
    def parse(cls, s: str) -> Hierarchy:
        try:
            return cls(s.strip().lower())
        except (ValueError, AttributeError):
            raise TreeError(f"unknown hierarchy {s!r}") from None


@dataclass
class DiscourseNode:
    id: int
    relation: RelationType
    hierarchy: Hierarchy | None = None
    children: list[int] = field(default_factory=list)
    edu_text: str | None = None
    features: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class DiscourseTree:
    nodes: dict[int, DiscourseNode]
    root: int
    label: int | None = None
    doc_id: str = ""

    def __getitem__(self, node_id: int) -> DiscourseNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def copy(self) -> DiscourseTree:
        return copy.deepcopy(self)

    def parent_map(self) -> dict[int, int]:
        return {c: n.id for n in self.nodes.values() for c in n.children}

    def leaves(self) -> list[DiscourseNode]:
        """Leaves in document (left-to-right) order."""
        return [self.nodes[i] for i in postorder(self) if self.nodes[i].is_leaf]

    def inner_nodes(self) -> list[DiscourseNode]:
        return [self.nodes[i] for i in postorder(self) if not self.nodes[i].is_leaf]

    def depth(self) -> int:
        best = 0
        stack = [(self.root, 1)]
        while stack:
            i, d = stack.pop()
            best = max(best, d)
            stack.extend((c, d + 1) for c in self.nodes[i].children)
        return best

    def is_binary(self) -> bool:
        return all(len(n.children) in (0, 2) for n in self.nodes.values())

    @property
    def featurized(self) -> bool:
        return all(n.features is not None for n in self.nodes.values() if n.is_leaf)

    def structurally_equal(self, other: DiscourseTree) -> bool:
        return tree_to_record(self) == tree_to_record(other)


def postorder(tree: DiscourseTree) -> list[int]:
    """Children before parents; leaves come out in document order."""
    out: list[int] = []
    stack: list[tuple[int, bool]] = [(tree.root, False)]
    while stack:
        i, expanded = stack.pop()
        if expanded:
            out.append(i)
            continue
        stack.append((i, True))
        for c in reversed(tree.nodes[i].children):
            stack.append((c, False))
    return out


# ---------------------------------------------------------------------------
# (de)serialization


def parse_tree(record: dict) -> DiscourseTree:
    """Build and validate a tree from a nested JSON record.

    Node ids are assigned in preorder.  A record may also carry explicit
    ``id`` fields; duplicates and repeated children are rejected.
    """
    if not isinstance(record, dict) or "root" not in record:
        raise TreeError("record has no 'root'")
    nodes: dict[int, DiscourseNode] = {}
    seen_objects: set[int] = set()
    counter = [0]

    def build(rec, is_root: bool) -> int:
        if not isinstance(rec, dict):
            raise TreeError(f"node record must be an object, got {type(rec).__name__}")
        if id(rec) in seen_objects:
            raise TreeError("node appears twice (cycle or shared child)")
        seen_objects.add(id(rec))
        node_id = rec.get("id", counter[0])
        counter[0] += 1
        if not isinstance(node_id, int) or isinstance(node_id, bool):
            raise TreeError(f"invalid node id {node_id!r}")
        if node_id in nodes:
            raise TreeError("duplicate node id", node_id)

        hier = rec.get("hierarchy")
        if is_root:
            hierarchy = None  # a root label, if present, carries no meaning
        else:
            if hier is None:
                raise TreeError("non-root node lacks a hierarchy label", node_id)
            hierarchy = Hierarchy.parse(hier)

        kids = rec.get("children") or []
        node = DiscourseNode(id=node_id, relation=RelationType.LEAF_UNIT, hierarchy=hierarchy)
        nodes[node_id] = node
        if kids:
            if "text" in rec or "features" in rec:
                raise TreeError("inner node carries text or features", node_id)
            if len(kids) < 2:
                raise TreeError(f"inner node has {len(kids)} child; need 0 or >= 2", node_id)
            if "relation" not in rec:
                raise TreeError("inner node lacks a relation", node_id)
            try:
                node.relation = RelationType.parse(rec["relation"])
            except TreeError as e:
                raise TreeError(str(e), node_id) from None
            if node.relation is RelationType.LEAF_UNIT:
                raise TreeError("LeafUnit is reserved for leaves", node_id)
            node.children = [build(k, False) for k in kids]
            if len(set(node.children)) != len(node.children):
                raise TreeError("child listed twice", node_id)
            if not any(nodes[c].hierarchy is Hierarchy.NUCLEUS for c in node.children):
                log.warning("node %s (%s) has no nucleus child", node_id, node.relation)
        else:
            text = rec.get("text")
            feats = rec.get("features")
            if text is not None and not isinstance(text, str):
                raise TreeError("leaf text must be a string", node_id)
            if not text and feats is None:
                raise TreeError("leaf has neither text nor features", node_id)
            node.edu_text = text
            if feats is not None:
                node.features = np.asarray(feats, dtype=np.float64).reshape(-1)
        return node_id

    root = build(record["root"], True)
    label = record.get("label")
    if label is not None and (not isinstance(label, int) or isinstance(label, bool) or label < 0):
        raise TreeError(f"invalid label {label!r}")
    return DiscourseTree(nodes=nodes, root=root, label=label, doc_id=str(record.get("doc_id", "")))


def tree_to_record(tree: DiscourseTree, with_features: bool = True) -> dict:
    def emit(i: int) -> dict:
        n = tree.nodes[i]
        rec: dict = {}
        if n.hierarchy is not None:
            rec["hierarchy"] = n.hierarchy.value
        if n.children:
            rec["relation"] = n.relation.value
            rec["children"] = [emit(c) for c in n.children]
        else:
            if n.edu_text is not None:
                rec["text"] = n.edu_text
            if with_features and n.features is not None:
                rec["features"] = [float(v) for v in n.features]
        return rec

    out: dict = {"doc_id": tree.doc_id}
    if tree.label is not None:
        out["label"] = tree.label
    out["root"] = emit(tree.root)
    return out


def format_tree(tree: DiscourseTree, with_features: bool = True) -> str:
    return json.dumps(tree_to_record(tree, with_features), ensure_ascii=False)


def read_trees(path: str | Path) -> list[DiscourseTree]:
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                trees.append(parse_tree(json.loads(line)))
            except (json.JSONDecodeError, TreeError) as e:
                raise TreeError(f"{path}:{lineno}: {e}") from e
    return trees


def write_trees(trees: Iterable[DiscourseTree], path: str | Path, with_features: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trees:
            fh.write(format_tree(t, with_features) + "\n")


def iter_edges(tree: DiscourseTree) -> Iterator[tuple[int, int]]:
    for n in tree.nodes.values():
        for c in n.children:
            yield n.id, c


# ---------------------------------------------------------------------------
# corpus statistics


@dataclass
class TreeStats:
    counts: dict[str, int]
    percentages: dict[str, float]
    n_trees: int
    mean_edus: float
    max_depth: int


def tree_stats(corpus: Iterable[DiscourseTree]) -> TreeStats:
    corpus = list(corpus)
    if not corpus:
        raise ValueError("tree_stats: empty corpus")
    counter: Counter = Counter()
    edus = 0
    depth = 0
    for t in corpus:
        for n in t.nodes.values():
            if n.children:
                counter[n.relation.value] += 1
            else:
                edus += 1
        depth = max(depth, t.depth())
    total = sum(counter.values())
    counts = {r.value: counter.get(r.value, 0) for r in RST_RELATIONS}
    pct = {k: (100.0 * v / total if total else 0.0) for k, v in counts.items()}
    return TreeStats(counts=counts, percentages=pct, n_trees=len(corpus),
                     mean_edus=edus / len(corpus), max_depth=depth)

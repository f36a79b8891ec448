import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discourse_lstm.tree import (
    NUM_RELATIONS, RST_RELATIONS, DiscourseTree, Hierarchy, RelationType, TreeError, format_tree, iter_edges,
    parse_tree, postorder, read_trees, tree_stats, write_trees,
)
from helpers import random_tree

FIG2 = json.loads(open(__file__.replace("test_tree.py", "fixtures/example_review.jsonl")).readline())

TABLE1 = ["Elaboration", "Joint", "Same-unit", "Background", "Attribution", "Comparison", "Temporal", "Enablement",
          "Contrast", "Summary", "Condition", "Manner-means", "Cause", "Explanation", "Evaluation",
          "Textual-organization", "Topic-change", "Topic-comment"]


def test_relation_enum_matches_table_and_leaf_slot():
    assert [r.value for r in RST_RELATIONS] == TABLE1
    assert NUM_RELATIONS == 19
    assert RelationType.LEAF_UNIT.index == 18
    for i in range(NUM_RELATIONS):
        assert RelationType.from_index(i).index == i


@pytest.mark.parametrize("text,expected", [
    ("elaboration", RelationType.ELABORATION), ("SAME-UNIT", RelationType.SAME_UNIT),
    ("manner means", RelationType.MANNER_MEANS), ("Topic_Comment", RelationType.TOPIC_COMMENT),
])
def test_relation_parse_is_case_insensitive(text, expected):
    assert RelationType.parse(text) is expected


def test_relation_parse_format_round_trip():
    for r in RelationType:
        assert RelationType.parse(str(r)) is r


def test_example_review_tree():
    t = parse_tree(FIG2)
    assert len(t.leaves()) == 3 and len(t.inner_nodes()) == 2
    assert [leaf.edu_text for leaf in t.leaves()] == ["All in all,", "I enjoyed this comedy.",
                                                      "The jokes land and the cast is great."]
    assert t.nodes[t.root].hierarchy is None
    assert t.nodes[t.root].relation is RelationType.ELABORATION
    order = postorder(t)
    assert order[-1] == t.root
    assert [i for i in order if t.nodes[i].is_leaf] == [leaf.id for leaf in t.leaves()]
    assert all(leaf.relation is RelationType.LEAF_UNIT for leaf in t.leaves())


def test_single_leaf_document():
    t = parse_tree({"doc_id": "one", "root": {"text": "Great."}})
    assert len(t) == 1 and not t.inner_nodes() and postorder(t) == [t.root]


def test_postorder_balanced_seven_nodes():
    leaf = lambda h: {"hierarchy": h, "text": "x"}
    sub = lambda h: {"hierarchy": h, "relation": "Joint", "children": [leaf("nucleus"), leaf("nucleus")]}
    t = parse_tree({"root": {"relation": "Joint", "children": [sub("nucleus"), sub("nucleus")]}})
    order = postorder(t)
    assert len(order) == 7 and order[6] == t.root
    pos = {nid: k for k, nid in enumerate(order)}
    for parent, child in iter_edges(t):
        assert pos[child] < pos[parent]


def _bad(mutate):
    rec = copy.deepcopy(FIG2)
    mutate(rec)
    with pytest.raises(TreeError):
        parse_tree(rec)


def test_validation_rejects_invalid_records():
    root = lambda r: r["root"]
    _bad(lambda r: root(r)["children"].append(root(r)["children"][0]))  # child listed twice
    _bad(lambda r: root(r).update(relation="Sarcasm"))
    _bad(lambda r: root(r).update(text="inner text"))
    _bad(lambda r: root(r)["children"][0].pop("hierarchy"))
    _bad(lambda r: root(r)["children"][0].update(hierarchy="core"))
    _bad(lambda r: root(r)["children"][0]["children"].pop())  # one child
    _bad(lambda r: root(r)["children"][1].update(text=""))  # empty leaf
    _bad(lambda r: root(r).update(relation="LeafUnit"))
    _bad(lambda r: r.pop("root"))
    _bad(lambda r: r.update(label=-1))


def test_duplicate_ids_and_cycles_rejected():
    rec = copy.deepcopy(FIG2)
    rec["root"]["id"] = 5
    rec["root"]["children"][1]["id"] = 5
    with pytest.raises(TreeError, match="duplicate"):
        parse_tree(rec)
    rec = copy.deepcopy(FIG2)
    rec["root"]["children"][0]["children"][0] = rec["root"]  # cycle
    with pytest.raises(TreeError):
        parse_tree(rec)


def test_error_carries_node_id():
    rec = copy.deepcopy(FIG2)
    rec["root"]["children"][0]["relation"] = "Nonsense"
    with pytest.raises(TreeError) as e:
        parse_tree(rec)
    assert e.value.node_id == 1


def test_missing_nucleus_is_only_a_warning(caplog):
    rec = copy.deepcopy(FIG2)
    rec["root"]["children"][0]["hierarchy"] = "satellite"
    parse_tree(rec)
    assert "no nucleus" in caplog.text


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), binary=st.booleans())
def test_round_trip_and_leaf_order(seed, binary):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, max_leaves=10, d_in=2, binary=binary)
    back = parse_tree(json.loads(format_tree(t)))
    assert back.structurally_equal(t)
    assert [leaf.edu_text for leaf in back.leaves()] == [leaf.edu_text for leaf in t.leaves()]
    for a, b in zip(back.leaves(), t.leaves()):
        assert np.array_equal(a.features, b.features)
    assert format_tree(back) == format_tree(t)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), which=st.integers(0, 4))
def test_mutated_records_are_rejected(seed, which):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, n_leaves=int(rng.integers(2, 8)))
    rec = json.loads(format_tree(t))
    inner = []

    def walk(node, is_root):
        if node.get("children"):
            inner.append(node)
            for c in node["children"]:
                walk(c, False)
    walk(rec["root"], True)
    node = inner[int(rng.integers(len(inner)))]
    if which == 0:
        node["children"].append(node["children"][0])
    elif which == 1:
        node["relation"] = "Unknown-relation"
    elif which == 2:
        node["text"] = "oops"
    elif which == 3:
        node["children"] = node["children"][:1]
    else:
        node["children"][0].pop("hierarchy")
    with pytest.raises(TreeError):
        parse_tree(rec)


def test_read_write_jsonl(tmp_path):
    rng = np.random.default_rng(0)
    trees = [random_tree(rng, doc_id=f"d{i}") for i in range(5)]
    p = tmp_path / "t.jsonl"
    write_trees(trees, p)
    back = read_trees(p)
    assert all(a.structurally_equal(b) for a, b in zip(trees, back))
    p.write_text(p.read_text() + "{not json\n")
    with pytest.raises(TreeError, match=":6:"):
        read_trees(p)


def test_tree_stats_examples():
    t = parse_tree({"root": {"relation": "Elaboration", "children": [
        {"hierarchy": "nucleus", "text": "a"},
        {"hierarchy": "satellite", "relation": "Elaboration", "children": [
            {"hierarchy": "nucleus", "text": "b"}, {"hierarchy": "satellite", "text": "c"}]}]}})
    s = tree_stats([t])
    nonzero = lambda d: {k: v for k, v in d.items() if v}
    assert nonzero(s.percentages) == {"Elaboration": 100.0} and s.mean_edus == 3 and s.max_depth == 3

    def two(rel):
        return parse_tree({"root": {"relation": rel, "children": [
            {"hierarchy": "nucleus", "text": "a"}, {"hierarchy": "nucleus", "text": "b"}]}})
    s = tree_stats([two("Joint"), two("Contrast")])
    assert nonzero(s.percentages) == {"Joint": 50.0, "Contrast": 50.0}
    with pytest.raises(ValueError):
        tree_stats([])


def test_tree_stats_matches_brute_force_count():
    rng = np.random.default_rng(7)
    corpus = [random_tree(rng, max_leaves=9, binary=bool(i % 2)) for i in range(100)]
    counts: dict = {}
    for t in corpus:
        for n in t.nodes.values():
            if n.children:
                counts[n.relation.value] = counts.get(n.relation.value, 0) + 1
    s = tree_stats(corpus)
    assert {k: v for k, v in s.counts.items() if v} == counts
    assert abs(sum(s.percentages.values()) - 100.0) <= 0.01
    assert s.mean_edus == pytest.approx(np.mean([len(t.leaves()) for t in corpus]))


def test_copy_is_deep():
    t = parse_tree(FIG2)
    c = t.copy()
    c.nodes[c.root].relation = RelationType.JOINT
    assert t.nodes[t.root].relation is RelationType.ELABORATION
    assert isinstance(t, DiscourseTree) and Hierarchy.parse("Nucleus") is Hierarchy.NUCLEUS

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discourse_lstm import tensor as T
from discourse_lstm.model import (
    VARIANTS, ArityError, ConfigError, LabelError, NodeState, StateError, Weights, childsum_cell,
    discourse_childsum_cell, discourse_nary_cell, forward_tree, init_params, load_checkpoint, nary_cell,
    run_tree, save_checkpoint, tie_discourse, zero_params,
)
from discourse_lstm.tensor import DimensionError, Tape, grad_check
from discourse_lstm.training import loss_tensor
from discourse_lstm.tree import DiscourseNode, DiscourseTree, Hierarchy, RelationType
from helpers import random_params, random_tree
from oracle import oracle_forward

N, S = Hierarchy.NUCLEUS, Hierarchy.SATELLITE


def state(c, h=None):
    c = np.asarray(c, dtype=float)
    return NodeState(T.constant(c), T.constant(np.zeros_like(c) if h is None else np.asarray(h, float)))


def test_init_params_shapes_and_determinism():
    p = init_params("childsum", 10, 1, rng=3)
    assert p["W_i"].shape == (10, 1) and p["U_f"].shape == (10, 10) and p["W_s"].shape == (2, 10)
    assert np.all(np.abs(p["U_i"]) <= 1 / np.sqrt(10)) and not p["b_i"].any()
    q = init_params("childsum", 10, 1, rng=3)
    assert all(p[k].tobytes() == q[k].tobytes() for k in p.tensors)
    d = init_params("discourse-childsum", 10, 1, R=19)
    assert d["U_i"].shape == (19, 10, 10) and d["b_u"].shape == (19, 10) and d["W_h"].shape == (2, 10, 10)
    nd = init_params("discourse-nary", 4, 3)
    assert nd["U_f21"].shape == (19, 4, 4) and nd["U_u2"].shape == (19, 4, 4)
    with pytest.raises(ConfigError):
        init_params("childsum", 0, 1)
    with pytest.raises(ConfigError):
        init_params("lstm", 4, 1)


def test_zero_param_cell_closed_forms():
    w = Weights.bind(zero_params("childsum", 3, 2))
    leaf = childsum_cell(np.array([0.7, -2.0]), [], w)
    assert not leaf.c.data.any() and not leaf.h.data.any()
    v = np.array([1.0, -0.5, 2.0])
    one = childsum_cell(None, [state(v)], w)
    assert np.array_equal(one.c.data, 0.5 * v)
    assert np.array_equal(one.h.data, 0.5 * np.tanh(0.5 * v))

    wn = Weights.bind(zero_params("nary", 3, 2))
    c1, c2 = np.array([1.0, 2, 3]), np.array([-1.0, 0.5, 4])
    assert np.allclose(nary_cell(None, [state(c1), state(c2)], wn).c.data, 0.5 * (c1 + c2), atol=0, rtol=1e-15)

    wd = Weights.bind(zero_params("discourse-childsum", 3, 2))
    assert not discourse_childsum_cell(np.ones(2), [], RelationType.LEAF_UNIT, wd).c.data.any()


def test_arity_and_label_errors():
    wn = Weights.bind(zero_params("nary", 2, 1))
    with pytest.raises(ArityError):
        nary_cell(None, [state([1, 1])] * 3, wn, node_id=7)
    wd = Weights.bind(zero_params("discourse-childsum", 2, 1))
    with pytest.raises(LabelError):
        discourse_childsum_cell(None, [(state([1, 1]), None)], 0, wd)
    with pytest.raises(DimensionError):
        childsum_cell(None, [state([1, 1, 1])], Weights.bind(zero_params("childsum", 2, 1)))
    with pytest.raises(DimensionError):
        childsum_cell(np.ones(3), [], Weights.bind(zero_params("childsum", 2, 1)))


def test_forward_tree_errors():
    rng = np.random.default_rng(0)
    t = random_tree(rng, n_leaves=4, binary=False)
    t.leaves()[0].features = None
    with pytest.raises(StateError):
        forward_tree(t, init_params("childsum", 3, 1))
    t3 = DiscourseTree({0: DiscourseNode(0, RelationType.JOINT, None, [1, 2, 3]),
                        **{i: DiscourseNode(i, RelationType.LEAF_UNIT, N, [], "x", np.ones(1)) for i in (1, 2, 3)}}, 0)
    with pytest.raises(ArityError):
        forward_tree(t3, init_params("nary", 3, 1))
    forward_tree(t3, init_params("childsum", 3, 1))  # child-sum takes any arity


@pytest.mark.parametrize("variant", VARIANTS)
def test_zero_model_gives_uniform_probs(variant):
    rng = np.random.default_rng(1)
    probs = forward_tree(random_tree(rng, n_leaves=5), zero_params(variant, 4, 1, C=3)).probs
    assert np.array_equal(probs, np.full(3, 1 / 3))


@pytest.mark.parametrize("variant", VARIANTS)
def test_single_leaf_is_one_cell_plus_head(variant):
    rng = np.random.default_rng(2)
    P = random_params(variant, rng, n=4, d_in=2)
    t = random_tree(rng, n_leaves=1, d_in=2)
    out = forward_tree(t, P)
    expect, _ = oracle_forward(t, P.tensors, variant)
    assert np.abs(out.probs - expect).max() <= 1e-15
    assert len(out.states) == 1


@pytest.mark.parametrize("variant", VARIANTS)
def test_seven_node_fixture_matches_oracle(variant):
    rng = np.random.default_rng(11)
    P = random_params(variant, rng, n=5, d_in=3)
    t = random_tree(rng, n_leaves=4, d_in=3)
    assert len(t) == 7
    out = forward_tree(t, P)
    probs, states = oracle_forward(t, P.tensors, variant)
    assert np.abs(out.probs - probs).max() <= 1e-12
    for nid, (c, h) in states.items():
        assert np.abs(out.states[nid].c.data - c).max() <= 1e-12
        assert np.abs(out.states[nid].h.data - h).max() <= 1e-12
    assert abs(out.probs.sum() - 1.0) <= 1e-12


def test_nary_is_position_sensitive():
    rng = np.random.default_rng(5)
    P = random_params("nary", rng, n=4)
    w = Weights.bind(P)
    a, b = state(rng.normal(size=4), rng.normal(size=4)), state(rng.normal(size=4), rng.normal(size=4))
    assert not np.array_equal(nary_cell(None, [a, b], w).h.data, nary_cell(None, [b, a], w).h.data)


def test_discourse_nary_swap_symmetry():
    rng = np.random.default_rng(6)
    P = random_params("discourse-nary", rng, n=4)
    for g in "iou":
        P.tensors[f"U_{g}2"] = P[f"U_{g}1"].copy()
    P.tensors["U_f22"] = P["U_f11"].copy()
    P.tensors["U_f21"] = P["U_f12"].copy()
    w = Weights.bind(P)
    a, b = state(rng.normal(size=4), rng.normal(size=4)), state(rng.normal(size=4), rng.normal(size=4))
    x = rng.normal(size=1)
    one = discourse_nary_cell(x, [(a, N), (b, S)], 3, w)
    two = discourse_nary_cell(x, [(b, S), (a, N)], 3, w)
    assert np.abs(one.h.data - two.h.data).max() <= 1e-14
    assert np.abs(one.c.data - two.c.data).max() <= 1e-14


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nary=st.booleans())
def test_reduction_to_plain_model(seed, nary):
    rng = np.random.default_rng(seed)
    plain = random_params("nary" if nary else "childsum", rng, n=4, d_in=2)
    t = random_tree(rng, max_leaves=7, d_in=2, binary=nary)
    a = forward_tree(t, plain).probs
    b = forward_tree(t, tie_discourse(plain)).probs
    assert np.abs(a - b).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), discourse=st.booleans())
def test_childsum_permutation_invariance(seed, discourse):
    rng = np.random.default_rng(seed)
    variant = "discourse-childsum" if discourse else "childsum"
    P = random_params(variant, rng, n=4, d_in=2)
    t = random_tree(rng, max_leaves=9, d_in=2, binary=False)
    base = forward_tree(t, P)
    shuffled = t.copy()
    for node in shuffled.nodes.values():
        if node.children:
            node.children = [node.children[i] for i in rng.permutation(len(node.children))]
    out = forward_tree(shuffled, P)
    assert out.probs.tobytes() == base.probs.tobytes()


@pytest.mark.parametrize("variant", VARIANTS)
def test_gradient_check_seven_nodes(variant):
    rng = np.random.default_rng(21)
    P = random_params(variant, rng, n=3, d_in=2)
    t = random_tree(rng, n_leaves=4, d_in=2)

    def f(tape, tensors):
        return loss_tensor(t, Weights(variant, tensors, P.n, P.d_in), l2=0.01)

    rep = grad_check(f, P.tensors, eps=1e-5, tol=1e-4,
                     entries={k: [idx for idx in np.ndindex(v.shape)][:40] for k, v in P.tensors.items()
                              if v.ndim == 3})
    assert rep.passed, rep.max_rel_error


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(4)
    for variant in VARIANTS:
        P = random_params(variant, rng, n=3, d_in=2, C=3)
        P.tensors["W_s"][0, 0] = 0.1 + 0.2  # a value whose shortest repr matters
        save_checkpoint(P, tmp_path / "ck.json", extra={"note": "x"})
        Q = load_checkpoint(tmp_path / "ck.json")
        assert Q.variant == variant and (Q.n, Q.d_in, Q.C, Q.R) == (3, 2, 3, 19)
        assert all(P[k].tobytes() == Q[k].tobytes() for k in P.tensors)
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "bad.json")


def test_probability_simplex_and_determinism():
    rng = np.random.default_rng(9)
    for variant in VARIANTS:
        P = random_params(variant, rng, n=4, d_in=1, C=4, scale=2.0)
        t = random_tree(rng, max_leaves=10)
        p1, p2 = forward_tree(t, P).probs, forward_tree(t, P).probs
        assert np.all(p1 >= 0) and abs(p1.sum() - 1) <= 1e-12 and p1.tobytes() == p2.tobytes()


def test_dropout_masks_enter_through_bind():
    rng = np.random.default_rng(3)
    P = random_params("childsum", rng, n=3)
    t = random_tree(rng, n_leaves=3)
    masks = {"W_s": np.zeros_like(P["W_s"])}
    tape = Tape()
    out = run_tree(t, Weights.bind(P, tape, masks))
    assert np.array_equal(out.logits.data, P["b_s"])

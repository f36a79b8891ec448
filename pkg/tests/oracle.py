"""Straight-line reference evaluator for the four recursive models.

Written directly from the transition equations with plain numpy and
recursion; it shares no code with ``discourse_lstm.model`` beyond reading
the tree and the parameter dictionary.
"""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _leaf_state(x, P, r):
    b = (lambda g: P["b_" + g][r]) if r is not None else (lambda g: P["b_" + g])
    i = sigmoid(P["W_i"] @ x + b("i"))
    o = sigmoid(P["W_o"] @ x + b("o"))
    u = np.tanh(P["W_u"] @ x + b("u"))
    c = i * u
    return c, o * np.tanh(c)


def _childsum(x, hs, cs, P, r):
    U = (lambda g: P["U_" + g][r]) if r is not None else (lambda g: P["U_" + g])
    b = (lambda g: P["b_" + g][r]) if r is not None else (lambda g: P["b_" + g])
    h_tilde = np.sum(hs, axis=0)
    i = sigmoid(P["W_i"] @ x + U("i") @ h_tilde + b("i"))
    o = sigmoid(P["W_o"] @ x + U("o") @ h_tilde + b("o"))
    u = np.tanh(P["W_u"] @ x + U("u") @ h_tilde + b("u"))
    c = i * u
    for hk, ck in zip(hs, cs):
        f = sigmoid(P["W_f"] @ x + U("f") @ hk + b("f"))
        c = c + f * ck
    return c, o * np.tanh(c)


def _nary(x, hs, cs, P, r):
    U = (lambda name: P[name][r]) if r is not None else (lambda name: P[name])
    b = (lambda g: P["b_" + g][r]) if r is not None else (lambda g: P["b_" + g])
    h1, h2 = hs
    i = sigmoid(P["W_i"] @ x + U("U_i1") @ h1 + U("U_i2") @ h2 + b("i"))
    o = sigmoid(P["W_o"] @ x + U("U_o1") @ h1 + U("U_o2") @ h2 + b("o"))
    u = np.tanh(P["W_u"] @ x + U("U_u1") @ h1 + U("U_u2") @ h2 + b("u"))
    f1 = sigmoid(P["W_f"] @ x + U("U_f11") @ h1 + U("U_f12") @ h2 + b("f"))
    f2 = sigmoid(P["W_f"] @ x + U("U_f21") @ h1 + U("U_f22") @ h2 + b("f"))
    c = i * u + f1 * cs[0] + f2 * cs[1]
    return c, o * np.tanh(c)


def oracle_forward(tree, P: dict, variant: str):
    """Return (probs, {node_id: (c, h)})."""
    discourse = variant.startswith("discourse")
    nary = variant.endswith("nary")
    d_in = P["W_i"].shape[1]
    states = {}

    def visit(nid):
        node = tree.nodes[nid]
        r = node.relation.index if discourse else None
        if not node.children:
            states[nid] = _leaf_state(np.asarray(node.features, dtype=float), P, r)
            return states[nid]
        kids = [visit(k) for k in node.children]
        hs = [h for _, h in kids]
        cs = [c for c, _ in kids]
        if discourse:
            taus = [tree.nodes[k].hierarchy.index for k in node.children]
            hs = [P["W_h"][t] @ h for t, h in zip(taus, hs)]
            cs = [P["W_c"][t] @ c for t, c in zip(taus, cs)]
        x = np.zeros(d_in)
        states[nid] = (_nary if nary else _childsum)(x, hs, cs, P, r)
        return states[nid]

    _, h_root = visit(tree.root)
    z = P["W_s"] @ h_root + P["b_s"]
    e = np.exp(z - z.max())
    return e / e.sum(), states


def oracle_loss(tree, P: dict, variant: str, l2: float = 0.0) -> float:
    probs, _ = oracle_forward(tree, P, variant)
    penalty = sum(float(np.sum(v * v)) for k, v in P.items() if not k.startswith("b_"))
    return -float(np.log(probs[tree.label])) + l2 * penalty

"""Dense float64 tensors with a reverse-mode gradient tape.

Every tree gets its own :class:`Tape`.  Parameters enter the tape through
:meth:`Tape.watch`, operations append records, and :func:`backward` walks the
records in reverse id order accumulating vector-Jacobian products.

A tape built with ``record=False`` evaluates the same operations without
keeping closures, which is what inference and finite-difference probes use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

MAX_RANK = 3


class DimensionError(ValueError):
    pass


class EmptyTapeError(RuntimeError):
    pass


class NumericError(ArithmeticError):
    pass


class Tensor:
    """A value living on a tape.  ``id`` is None for constants."""

    __slots__ = ("data", "id", "tape")

    def __init__(self, data: np.ndarray, id: int | None = None, tape: Tape | None = None):
        self.data = data
        self.id = id
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, id={self.id})"


class _Rows:
    """Gradient that is nonzero only at one leading index of its target."""

    __slots__ = ("k", "g")

    def __init__(self, k: int, g: np.ndarray):
        self.k = k
        self.g = g


@dataclass
class Tape:
    record: bool = True
    # records are (output id, input ids, vjp closure)
    nodes: list[tuple[int, tuple, Callable]] = field(default_factory=list)
    names: dict[str, int] = field(default_factory=dict)
    _next_id: int = 0
    _shapes: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def _new_id(self, shape: tuple[int, ...]) -> int:
        i = self._next_id
        self._next_id += 1
        self._shapes[i] = shape
        return i

    def watch(self, name: str, array: np.ndarray) -> Tensor:
        """Register a parameter so its gradient is reported under ``name``."""
        array = _as_array(array)
        if name in self.names:
            raise ValueError(f"parameter {name!r} already watched on this tape")
        t = Tensor(array, self._new_id(array.shape), self)
        self.names[name] = t.id
        return t

    def emit(self, value: np.ndarray, inputs: Sequence[Tensor], vjp: Callable, check: bool = True) -> Tensor:
        # sum() propagates nan/inf, and is cheaper than isfinite().all() on tiny arrays
        if check and not math.isfinite(value.sum()):
            raise NumericError(f"non-finite value produced (shape {list(value.shape)})")
        out = Tensor(value, self._new_id(value.shape), self)
        if self.record:
            self.nodes.append((out.id, tuple([t.id for t in inputs]), vjp))
        return out

    def __len__(self) -> int:
        return self._next_id


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim > MAX_RANK:
        raise DimensionError(f"rank {a.ndim} exceeds the supported maximum of {MAX_RANK}")
    return a


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(_as_array(x))


def _tape_of(*args: Tensor) -> Tape:
    for a in args:
        if a.tape is not None:
            return a.tape
    # all-constant expression: evaluate on a throwaway tape
    return Tape(record=False)


def _check_same(op: str, *args: Tensor) -> None:
    s = args[0].shape
    for a in args[1:]:
        if a.shape != s:
            raise DimensionError(f"{op}: shape mismatch {list(s)} vs {list(a.shape)}")


# ---------------------------------------------------------------------------
# primitives


def matvec(W, x) -> Tensor:
    W, x = constant(W), constant(x)
    if W.data.ndim != 2 or x.data.ndim != 1 or W.shape[1] != x.shape[0]:
        raise DimensionError(f"matvec: cannot multiply {list(W.shape)} by {list(x.shape)}")
    Wd, xd = W.data, x.data

    def vjp(g):
        return np.outer(g, xd), Wd.T @ g

    return _tape_of(W, x).emit(Wd @ xd, (W, x), vjp)


def affine(terms: Sequence[tuple], bias=None) -> Tensor:
    """Fused ``sum_i W_i @ x_i + bias``; one tape record instead of 2k."""
    pairs = [(constant(W), constant(x)) for W, x in terms]
    ins: list[Tensor] = []
    out = None
    for W, x in pairs:
        if W.data.ndim != 2 or x.data.ndim != 1 or W.shape[1] != x.shape[0]:
            raise DimensionError(f"affine: cannot multiply {list(W.shape)} by {list(x.shape)}")
        y = W.data @ x.data
        out = y if out is None else out + y
        ins += (W, x)
    if bias is not None:
        bias = constant(bias)
        if out is not None and bias.shape != out.shape:
            raise DimensionError(f"affine: bias {list(bias.shape)} vs output {list(out.shape)}")
        out = bias.data.copy() if out is None else out + bias.data
        ins.append(bias)
    if out is None:
        raise DimensionError("affine: no terms")
    mats = [(W.data, x.data) for W, x in pairs]
    has_bias = bias is not None

    def vjp(g):
        grads = []
        for Wd, xd in mats:
            grads += (np.outer(g, xd), Wd.T @ g)
        if has_bias:
            grads.append(g)
        return tuple(grads)

    return _tape_of(*ins).emit(out, ins, vjp)


def add(*args) -> Tensor:
    args = tuple(constant(a) for a in args)
    _check_same("add", *args)
    out = args[0].data
    for a in args[1:]:
        out = out + a.data
    if len(args) == 1:
        out = out.copy()
    n = len(args)
    return _tape_of(*args).emit(out, args, lambda g: (g,) * n)


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_same("mul", a, b)
    ad, bd = a.data, b.data
    return _tape_of(a, b).emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def sigmoid(x) -> Tensor:
    x = constant(x)
    s = expit(x.data)  # branch-free and overflow-safe for large |x|
    return _tape_of(x).emit(s, (x,), lambda g: (g * s * (1.0 - s),), check=False)


def tanh(x) -> Tensor:
    x = constant(x)
    t = np.tanh(x.data)
    return _tape_of(x).emit(t, (x,), lambda g: (g * (1.0 - t * t),), check=False)


_ELEMENTWISE = {"add": add, "mul": mul, "sigmoid": sigmoid, "tanh": tanh}


def elementwise(op: str, *args) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def take(T, k: int) -> Tensor:
    """Slice the leading axis: [R, n, m] -> [n, m] (or [R, n] -> [n])."""
    T = constant(T)
    if T.data.ndim < 2:
        raise DimensionError(f"take: need rank >= 2, got {list(T.shape)}")
    if not 0 <= k < T.shape[0]:
        raise IndexError(f"take: index {k} out of range for leading extent {T.shape[0]}")
    return _tape_of(T).emit(T.data[k], (T,), lambda g: (_Rows(k, g),), check=False)


def sum_all(x) -> Tensor:
    x = constant(x)
    shape = x.shape
    return _tape_of(x).emit(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def sum_squares(x) -> Tensor:
    x = constant(x)
    xd = x.data
    return _tape_of(x).emit(np.array(np.dot(xd.ravel(), xd.ravel())), (x,), lambda g: (2.0 * float(g) * xd,))


def scale(x, c: float) -> Tensor:
    x = constant(x)
    return _tape_of(x).emit(x.data * c, (x,), lambda g: (g * c,))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_xent(logits, label: int) -> Tensor:
    """-log softmax(logits)[label] as a scalar tensor."""
    logits = constant(logits)
    if logits.data.ndim != 1 or logits.shape[0] < 2:
        raise DimensionError(f"softmax_xent: need rank-1 logits with C >= 2, got {list(logits.shape)}")
    C = logits.shape[0]
    if not 0 <= label < C:
        raise IndexError(f"label {label} out of range for {C} classes")
    z = logits.data - logits.data.max()
    lse = np.log(np.exp(z).sum())
    loss = lse - z[label]
    p = np.exp(z - lse)

    def vjp(g):
        d = p.copy()
        d[label] -= 1.0
        return (float(g) * d,)

    return _tape_of(logits).emit(np.array(loss), (logits,), vjp)


# ---------------------------------------------------------------------------
# reverse pass


class Gradients:
    """Gradient store keyed by tape id, with name lookup for watched params."""

    def __init__(self, tape: Tape, grads: list):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, t: Tensor | int) -> np.ndarray:
        i = t.id if isinstance(t, Tensor) else t
        g = self._grads[i]
        return np.zeros(self._tape._shapes[i]) if g is None else g

    def by_name(self) -> dict[str, np.ndarray]:
        return {name: self[i] for name, i in self._tape.names.items()}


def backward(tape: Tape, loss: Tensor) -> Gradients:
    if not tape.record:
        raise EmptyTapeError("tape was built with record=False")
    if not tape.nodes:
        raise EmptyTapeError("backward called on an empty tape")
    if loss.tape is not tape or loss.id is None:
        raise ValueError("loss is not a value on this tape")
    if loss.data.size != 1:
        raise DimensionError(f"loss must be scalar, got shape {list(loss.shape)}")

    grads: list = [None] * len(tape)
    owned = [False] * len(tape)
    grads[loss.id] = np.ones_like(loss.data)

    for out, inputs, vjp in reversed(tape.nodes):
        g = grads[out]
        if g is None:
            continue
        for i, gi in zip(inputs, vjp(g)):
            if i is None:
                continue
            if isinstance(gi, _Rows):
                if not owned[i]:
                    base = np.zeros(tape._shapes[i]) if grads[i] is None else grads[i].copy()
                    grads[i], owned[i] = base, True
                grads[i][gi.k] += gi.g
            elif grads[i] is None:
                grads[i] = gi
            else:
                grads[i] = grads[i] + gi
                owned[i] = True

    for name, i in tape.names.items():
        if grads[i] is not None and not np.isfinite(grads[i]).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    return Gradients(tape, grads)


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckResult:
    name: str
    checked: int
    max_rel_error: float
    worst_index: tuple[int, ...] | None
    passed: bool


@dataclass
class GradCheckReport:
    results: dict[str, GradCheckResult]
    tol: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.results.values()), default=0.0)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps ~zero gradients from dividing by noise."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    f: Callable[[Tape, dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
    tol: float = 1e-4,
    entries: dict[str, Sequence[tuple[int, ...]]] | None = None,
) -> GradCheckReport:
    """Compare tape gradients of ``f`` with central differences.

    ``f(tape, tensors)`` must build a scalar loss from the watched tensors.
    ``entries`` restricts which coordinates are probed per parameter; by
    default every coordinate of every parameter is checked.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def evaluate(p, record):
        tape = Tape(record=record)
        tensors = {k: tape.watch(k, v) for k, v in p.items()}
        out = f(tape, tensors)
        val = float(out.data)
        if not np.isfinite(val):
            raise NumericError("grad_check: objective is not finite")
        return tape, out, val

    tape, loss, _ = evaluate(params, True)
    analytic = backward(tape, loss).by_name() if tape.nodes else {k: np.zeros_like(v) for k, v in params.items()}

    results = {}
    for name, value in params.items():
        idxs = list(np.ndindex(value.shape)) if entries is None or name not in entries else list(entries[name])
        worst, worst_idx = 0.0, None
        for idx in idxs:
            orig = value[idx]
            value[idx] = orig + eps
            fp = evaluate(params, False)[2]
            value[idx] = orig - eps
            fm = evaluate(params, False)[2]
            value[idx] = orig
            numeric = (fp - fm) / (2.0 * eps)
            err = relative_error(float(analytic[name][idx]), numeric)
            if err > worst or worst_idx is None:
                worst, worst_idx = err, idx
        results[name] = GradCheckResult(name, len(idxs), worst, worst_idx, worst <= tol)
    return GradCheckReport(results, tol)

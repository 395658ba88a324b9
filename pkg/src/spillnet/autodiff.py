"""Dense float64 tensors with taped reverse-mode gradients and Adam.

A Tensor wraps a numpy float64 array. Values created through
``Tape.parameter``/``Tape.leaf`` or derived from them are recorded on the
tape; values without a tape compute the same math without recording, which
is the inference path. The tape is append-only, so node order is already
topological and ``backward`` is a single reverse sweep that visits each
node at most once. Saved values needed by a node's backward rule live in
its closure.

Everything is 64-bit and pure: repeated evaluation of the same inputs is
bit-identical. No sparse storage, no GPU, no mixed precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DimensionError

Array = np.ndarray

# Slope convention for graph-attention scoring; callers may override per call.
DEFAULT_LEAKY_SLOPE = 0.2


def _as_f64(data) -> Array:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    """A dense float64 array, optionally linked to a tape node."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: "Tape | None" = None, node_id: int | None = None):
        self.data = _as_f64(data)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        state = "recorded" if self.tape is not None else "plain"
        return f"Tensor(shape={self.shape}, {state})"


class _Node:
    # Saved values for the backward rule are captured in the closure.
    __slots__ = ("tag", "inputs", "backward")

    def __init__(self, tag: str, inputs: tuple, backward):
        self.tag = tag
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Append-only computation record confined to one logical thread."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._param_ids: dict[str, int] = {}
        self._param_shapes: dict[str, tuple[int, ...]] = {}

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    def _record(self, tag: str, input_ids: tuple, out_data: Array, backward) -> Tensor:
        self._nodes.append(_Node(tag, input_ids, backward))
        return Tensor(out_data, self, len(self._nodes) - 1)

    def leaf(self, data) -> Tensor:
        """Record an input value. The caller must not mutate ``data``."""
        return self._record("leaf", (), _as_f64(data), None)

    def parameter(self, name: str, data) -> Tensor:
        """Record a named learnable leaf; gradients are reported under ``name``."""
        if name in self._param_ids:
            raise ContractError(f"parameter {name!r} registered twice on one tape")
        t = self.leaf(data)
        self._param_ids[name] = t.node_id
        self._param_shapes[name] = t.data.shape
        return t

    @property
    def parameter_names(self) -> list[str]:
        return list(self._param_ids)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ContractError("operands were recorded on different tapes")
    return tape


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data + b.data
    tape = _tape_of(a, b)
    if tape is None:
        return Tensor(out)
    a_id, b_id = a.node_id, b.node_id
    a_shape, b_shape = a.data.shape, b.data.shape

    def bwd(g, acc):
        if a_id is not None:
            acc(a_id, _unbroadcast(g, a_shape))
        if b_id is not None:
            acc(b_id, _unbroadcast(g, b_shape))

    return tape._record("add", (a_id, b_id), out, bwd)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data - b.data
    tape = _tape_of(a, b)
    if tape is None:
        return Tensor(out)
    a_id, b_id = a.node_id, b.node_id
    a_shape, b_shape = a.data.shape, b.data.shape

    def bwd(g, acc):
        if a_id is not None:
            acc(a_id, _unbroadcast(g, a_shape))
        if b_id is not None:
            acc(b_id, _unbroadcast(-g, b_shape))

    return tape._record("sub", (a_id, b_id), out, bwd)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data * b.data
    tape = _tape_of(a, b)
    if tape is None:
        return Tensor(out)
    a_id, b_id = a.node_id, b.node_id
    a_data, b_data = a.data, b.data

    def bwd(g, acc):
        if a_id is not None:
            acc(a_id, _unbroadcast(g * b_data, a_data.shape))
        if b_id is not None:
            acc(b_id, _unbroadcast(g * a_data, b_data.shape))

    return tape._record("mul", (a_id, b_id), out, bwd)


def neg(a) -> Tensor:
    a = _lift(a)
    out = -a.data
    tape = _tape_of(a)
    if tape is None:
        return Tensor(out)
    a_id = a.node_id

    def bwd(g, acc):
        if a_id is not None:
            acc(a_id, -g)

    return tape._record("neg", (a_id,), out, bwd)


def _unary(tag: str, a: Tensor, out: Array, factor_fn) -> Tensor:
    """Record a unary op whose input gradient is ``g * factor``."""
    tape = _tape_of(a)
    if tape is None:
        return Tensor(out)
    a_id = a.node_id

    def bwd(g, acc):
        if a_id is not None:
            acc(a_id, g * factor_fn())

    return tape._record(tag, (a_id,), out, bwd)


def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.data)
    return _unary("tanh", a, out, lambda: 1.0 - out * out)


def sigmoid(a) -> Tensor:
    a = _lift(a)
    # split by sign to avoid overflow in exp
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _unary("sigmoid", a, out, lambda: out * (1.0 - out))


def exp(a) -> Tensor:
    a = _lift(a)
    out = np.exp(a.data)
    return _unary("exp", a, out, lambda: out)


def log(a) -> Tensor:
    a = _lift(a)
    out = np.log(a.data)
    return _unary("log", a, out, lambda: 1.0 / a.data)


def clamp_min(a, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient passes only where a > floor."""
    a = _lift(a)
    out = np.maximum(a.data, floor)
    passed = a.data > floor
    return _unary("clamp_min", a, out, lambda: passed.astype(np.float64))


def leaky_relu(a, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    """max(x, slope*x). Gradient is 1 for x>0 and slope for x<=0 (the 0- side
    is used at exactly zero)."""
    if not 0.0 < slope < 1.0:
        raise ContractError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    a = _lift(a)
    x = a.data
    out = np.where(x > 0, x, slope * x)
    return _unary("leaky_relu", a, out, lambda: np.where(x > 0, 1.0, slope))


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise DimensionError(f"matmul supports 1-D and 2-D operands, got shapes {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {ad.shape} @ {bd.shape}")
    out = ad @ bd
    tape = _tape_of(a, b)
    if tape is None:
        return Tensor(out)
    a_id, b_id = a.node_id, b.node_id

    def bwd(g, acc):
        if ad.ndim == 2 and bd.ndim == 2:
            if a_id is not None:
                acc(a_id, g @ bd.T)
            if b_id is not None:
                acc(b_id, ad.T @ g)
        elif ad.ndim == 2:  # (m,k) @ (k,) -> (m,)
            if a_id is not None:
                acc(a_id, np.outer(g, bd))
            if b_id is not None:
                acc(b_id, ad.T @ g)
        elif bd.ndim == 2:  # (k,) @ (k,n) -> (n,)
            if a_id is not None:
                acc(a_id, bd @ g)
            if b_id is not None:
                acc(b_id, np.outer(ad, g))
        else:  # (k,) @ (k,) -> scalar
            if a_id is not None:
                acc(a_id, g * bd)
            if b_id is not None:
                acc(b_id, g * ad)

    return tape._record("matmul", (a_id, b_id), out, bwd)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    out = a.data.reshape(shape)
    tape = _tape_of(a)
    if tape is None:
        return Tensor(out)
    a_id, a_shape = a.node_id, a.data.shape

    def bwd(g, acc):
        if a_id is not None:
            acc(a_id, g.reshape(a_shape))

    return tape._record("reshape", (a_id,), out, bwd)


def transpose(a) -> Tensor:
    a = _lift(a)
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {a.shape}")
    out = a.data.T.copy()
    tape = _tape_of(a)
    if tape is None:
        return Tensor(out)
    a_id = a.node_id

    def bwd(g, acc):
        if a_id is not None:
            acc(a_id, g.T)

    return tape._record("transpose", (a_id,), out, bwd)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ContractError("concat needs at least one tensor")
    out = np.concatenate([p.data for p in parts], axis=axis)
    tape = _tape_of(*parts)
    if tape is None:
        return Tensor(out)
    ids = tuple(p.node_id for p in parts)
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def bwd(g, acc):
        for pid, lo, hi in zip(ids, bounds[:-1], bounds[1:]):
            if pid is not None:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                acc(pid, g[tuple(index)])

    return tape._record("concat", ids, out, bwd)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along ``axis`` starting at ``start``."""
    a = _lift(a)
    if start < 0 or length < 0 or start + length > a.data.shape[axis]:
        raise DimensionError(
            f"narrow [{start}:{start + length}) exceeds axis {axis} of shape {a.shape}"
        )
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    out = a.data[tuple(index)]
    tape = _tape_of(a)
    if tape is None:
        return Tensor(out)
    a_id, a_shape = a.node_id, a.data.shape

    def bwd(g, acc):
        if a_id is None:
            return
        full = np.zeros(a_shape)
        full[tuple(index)] = g
        acc(a_id, full)

    return tape._record("narrow", (a_id,), out, bwd)


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    tape = _tape_of(a)
    if tape is None:
        return Tensor(out)
    a_id, a_shape = a.node_id, a.data.shape

    def bwd(g, acc):
        if a_id is None:
            return
        if axis is None:
            acc(a_id, np.full(a_shape, g.flat[0]))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            acc(a_id, np.broadcast_to(gg, a_shape).copy())

    return tape._record("sum", (a_id,), out, bwd)


def tensor_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def masked_softmax(scores, mask) -> tuple[Tensor, Array | bool]:
    """Softmax over the last axis restricted to masked-in entries.

    Masked-out entries are exactly zero. Positions whose mask row is all
    false produce an all-zero row; the second return value flags support
    per row (a plain bool for 1-D input) and the caller decides how to
    treat empty rows.
    """
    scores = _lift(scores)
    m = np.asarray(mask, dtype=bool)
    if m.shape != scores.data.shape:
        raise DimensionError(f"mask shape {m.shape} does not match scores shape {scores.data.shape}")
    x = scores.data
    masked = np.where(m, x, -np.inf)
    mx = masked.max(axis=-1, keepdims=True)
    mx_safe = np.where(np.isfinite(mx), mx, 0.0)
    # shift masked-out entries to the row max so exp never overflows
    e = np.exp(np.where(m, x, mx_safe) - mx_safe)
    e = np.where(m, e, 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    probs = e / np.where(denom > 0, denom, 1.0)
    has_support = m.any(axis=-1)
    if has_support.ndim == 0:
        has_support = bool(has_support)

    tape = _tape_of(scores)
    if tape is None:
        return Tensor(probs), has_support
    s_id = scores.node_id

    def bwd(g, acc):
        if s_id is None:
            return
        inner = (probs * g).sum(axis=-1, keepdims=True)
        acc(s_id, probs * (g - inner))

    return tape._record("masked_softmax", (s_id,), probs, bwd), has_support


# ---------------------------------------------------------------------------
# backward sweep
# ---------------------------------------------------------------------------


def backward(root: Tensor) -> dict[str, Tensor]:
    """Gradients of a scalar ``root`` for every named parameter on its tape.

    Parameters the sweep never reaches get zero gradients.
    """
    tape = root.tape
    if tape is None:
        raise ContractError("backward root is not linked to a tape")
    if root.data.size != 1:
        raise ContractError(f"backward expects a scalar root, got shape {root.shape}")

    nodes = tape._nodes
    grads: list[Array | None] = [None] * (root.node_id + 1)
    grads[root.node_id] = np.ones_like(root.data)

    def acc(node_id: int, value: Array) -> None:
        cur = grads[node_id]
        grads[node_id] = value if cur is None else cur + value

    for nid in range(root.node_id, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        fn = nodes[nid].backward
        if fn is not None:
            fn(g, acc)

    out: dict[str, Tensor] = {}
    for name, nid in tape._param_ids.items():
        g = grads[nid] if nid < len(grads) else None
        out[name] = Tensor(np.zeros(tape._param_shapes[name]) if g is None else g)
    return out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def _data(x) -> Array:
    return x.data if isinstance(x, Tensor) else _as_f64(x)


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus the shared step counter."""

    m: dict[str, Array]
    v: dict[str, Array]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 0.001

    @classmethod
    def initial(cls, params: Mapping[str, Array], learning_rate: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            m={k: np.zeros_like(_data(p)) for k, p in params.items()},
            v={k: np.zeros_like(_data(p)) for k, p in params.items()},
            step=0, beta1=beta1, beta2=beta2, eps=eps, learning_rate=learning_rate,
        )


def adam_step(params: Mapping[str, Array], grads: Mapping[str, Array],
              state: AdamState) -> tuple[dict[str, Array], AdamState]:
    """One bias-corrected Adam update. Purely functional; inputs unchanged."""
    if set(params) != set(grads):
        missing = set(params) ^ set(grads)
        raise ContractError(f"parameter/gradient name sets differ on: {sorted(missing)}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params: dict[str, Array] = {}
    new_m: dict[str, Array] = {}
    new_v: dict[str, Array] = {}
    for name in params:
        p = _data(params[name])
        g = _data(grads[name])
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {name!r} shape {p.shape}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params[name] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(new_m, new_v, t, b1, b2, state.eps, state.learning_rate)


# ---------------------------------------------------------------------------
# initialization and finite-difference checking
# ---------------------------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> Array:
    """Glorot/Xavier uniform init.

    Fans: vectors use (n, 1), matrices (rows, cols), 3-D tensors treat the
    leading two axes as input and the trailing axis as output slices.
    """
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    elif len(shape) == 2:
        fan_in, fan_out = shape[1], shape[0]
    elif len(shape) == 3:
        fan_in, fan_out = shape[0] * shape[1], shape[2]
    else:
        raise DimensionError(f"glorot_uniform supports up to 3-D shapes, got {shape}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def numeric_gradients(fn: Callable[[Mapping[str, Array]], float],
                      params: Mapping[str, Array], step: float = 1e-5) -> dict[str, Array]:
    """Central finite differences of ``fn`` at ``params``, one component at a time."""
    base = {k: _data(v).copy() for k, v in params.items()}
    out: dict[str, Array] = {}
    for name, arr in base.items():
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = fn(base)
            flat[i] = keep - step
            down = fn(base)
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * step)
        out[name] = grad
    return out


def gradient_gap(analytic: Array, numeric: Array, floor: float = 1e-8) -> float:
    """Worst-case mixed error: relative where magnitudes exceed ``floor``,
    absolute below it."""
    a = _data(analytic)
    n = _data(numeric)
    if a.shape != n.shape:
        raise DimensionError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    rel = np.where(scale >= floor, diff / np.maximum(scale, floor), diff)
    return float(rel.max()) if rel.size else 0.0


def compare_gradient_maps(analytic: Mapping[str, Array], numeric: Mapping[str, Array],
                          floor: float = 1e-8) -> dict[str, float]:
    """Per-parameter worst-case gap between two gradient maps."""
    if set(analytic) != set(numeric):
        missing = set(analytic) ^ set(numeric)
        raise ContractError(f"gradient maps disagree on names: {sorted(missing)}")
    return {name: gradient_gap(analytic[name], numeric[name], floor) for name in analytic}

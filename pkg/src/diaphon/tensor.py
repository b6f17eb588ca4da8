"""Dense float64 tensors with reverse-mode autodiff and Adam.

Deliberately small: exactly the operations the transducer needs, on numpy
float64 buffers. Values are treated as immutable once wrapped; backward
passes only touch gradient buffers. All reductions (log_softmax, logsumexp)
act on the last axis.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

NEG_INF = float("-inf")


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class GradientError(ValueError):
    """Backward-pass contract violation (non-scalar loss, missing grads)."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (decoding, analysis)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            if g.shape == self.data.shape:
                self.grad = g.copy()  # g may be shared with other consumers
            else:
                self.grad = np.array(np.broadcast_to(g, self.data.shape))
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all routing goes through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    # interior results skip the public constructor's contiguity normalization
    out = Tensor.__new__(Tensor)
    if type(data) is not np.ndarray or data.dtype != np.float64:
        data = np.asarray(data, dtype=np.float64)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                out.requires_grad = True
                out._parents = parents
                out._backward = backward
                break
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# forward ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy semantics, including stacked batches.

    Supports 1-D operands the way numpy does (vector promoted to a row or
    column and the added axis dropped from the result).
    """
    a, b = as_tensor(a), as_tensor(b)
    a2 = a.data[None, :] if a.ndim == 1 else a.data
    b2 = b.data[:, None] if b.ndim == 1 else b.data
    if a2.shape[-1] != b2.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ for {a.shape} @ {b.shape}")
    k = a2.shape[-1]
    flat_weight = b2.ndim == 2 and a2.ndim > 2  # stacked batch @ 2-D weight
    if flat_weight:
        out = (a2.reshape(-1, k) @ b2).reshape(a2.shape[:-1] + (b2.shape[-1],))
    else:
        out = a2 @ b2
    if b.ndim == 1:
        out = out[..., 0]
    if a.ndim == 1:
        out = out[0] if b.ndim == 1 else out[..., 0, :]

    def backward(g):
        g2 = g
        if a.ndim == 1 and b.ndim == 1:
            g2 = g.reshape(1, 1)
        elif a.ndim == 1:
            g2 = np.expand_dims(g, -2)
        elif b.ndim == 1:
            g2 = np.expand_dims(g, -1)
        if a.requires_grad:
            if flat_weight:
                ga = (g2.reshape(-1, g2.shape[-1]) @ b2.T).reshape(a2.shape)
            else:
                ga = g2 @ np.swapaxes(b2, -1, -2)
            if a.ndim == 1:
                ga = ga.reshape(-1, a.shape[0]).sum(axis=0)
            else:
                ga = _unbroadcast(ga, a.shape)
            a.accumulate_grad(ga)
        if b.requires_grad:
            if flat_weight:
                gb = a2.reshape(-1, k).T @ g2.reshape(-1, g2.shape[-1])
            else:
                gb = np.swapaxes(a2, -1, -2) @ g2
                if b.ndim == 1:
                    gb = gb.reshape(-1, b.shape[0], 1).sum(axis=0)[:, 0]
                else:
                    gb = _unbroadcast(gb, b.shape)
            b.accumulate_grad(gb)

    return _make(out, (a, b), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[t.shape for t in tensors]}"
        )
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _make(data, tuple(tensors), backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: shapes differ: {sorted(shapes)}")
    data = np.stack([t.data for t in tensors], axis=axis)
    pos = axis % data.ndim

    def backward(g):
        for k, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate_grad(np.take(g, k, axis=pos))

    return _make(data, tuple(tensors), backward)


def slice_axis(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    t = as_tensor(t)
    n = t.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"slice: [{start}:{stop}] out of range for axis {axis} of {t.shape}")
    idx = [slice(None)] * t.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def backward(g):
        if t.requires_grad:
            full = np.zeros_like(t.data)
            full[idx] = g
            t.accumulate_grad(full)

    return _make(t.data[idx], (t,), backward)


def swap_axes(t: Tensor, ax0: int, ax1: int) -> Tensor:
    t = as_tensor(t)

    def backward(g):
        if t.requires_grad:
            t.accumulate_grad(np.swapaxes(g, ax0, ax1))

    return _make(np.swapaxes(t.data, ax0, ax1), (t,), backward)


def reshape(t: Tensor, shape) -> Tensor:
    t = as_tensor(t)
    old = t.shape

    def backward(g):
        if t.requires_grad:
            t.accumulate_grad(g.reshape(old))

    return _make(t.data.reshape(shape), (t,), backward)


def sigmoid(t: Tensor) -> Tensor:
    t = as_tensor(t)
    out = _sigmoid_raw(t.data)

    def backward(g):
        if t.requires_grad:
            t.accumulate_grad(g * out * (1.0 - out))

    return _make(out, (t,), backward)


def tanh(t: Tensor) -> Tensor:
    t = as_tensor(t)
    out = np.tanh(t.data)

    def backward(g):
        if t.requires_grad:
            t.accumulate_grad(g * (1.0 - out * out))

    return _make(out, (t,), backward)


def _lse_raw(x: np.ndarray) -> np.ndarray:
    """logsumexp over the last axis; rows of all -inf give -inf, no NaN."""
    m = np.max(x, axis=-1)
    finite = np.isfinite(m)
    m_safe = np.where(finite, m, 0.0)
    s = np.exp(x - m_safe[..., None]).sum(axis=-1)
    with np.errstate(divide="ignore"):
        return np.where(finite, m_safe + np.log(s), m)


def logsumexp(t: Tensor) -> Tensor:
    """Reduce the last axis to log(sum(exp(x))). Shift-invariant and -inf safe."""
    t = as_tensor(t)
    out = _lse_raw(t.data)

    def backward(g):
        if t.requires_grad:
            w = np.exp(t.data - np.where(np.isfinite(out), out, 0.0)[..., None])
            w[~np.isfinite(out)] = 0.0
            t.accumulate_grad(g[..., None] * w)

    return _make(out, (t,), backward)


def log_softmax(t: Tensor) -> Tensor:
    """x - logsumexp(x) over the last axis."""
    t = as_tensor(t)
    lse = _lse_raw(t.data)
    out = t.data - lse[..., None]

    def backward(g):
        if t.requires_grad:
            t.accumulate_grad(g - np.exp(out) * g.sum(axis=-1, keepdims=True))

    return _make(out, (t,), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Row gather: out[k] = table[ids[k]]. Gradient scatter-adds into rows."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: id out of range for table {table.shape}")
    data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            table.accumulate_grad(full)

    return _make(data, (table,), backward)


def take_last(t: Tensor, idx) -> Tensor:
    """Gather one entry per row along the last axis; idx.shape == t.shape[:-1]."""
    t = as_tensor(t)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != t.shape[:-1]:
        raise ShapeError(f"take_last: index shape {idx.shape} does not match {t.shape[:-1]}")
    data = np.take_along_axis(t.data, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        if t.requires_grad:
            full = np.zeros_like(t.data)
            np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
            t.accumulate_grad(full)

    return _make(data, (t,), backward)


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # float64-exact for all inputs: exp(-x) saturates to inf/0 and the
    # division lands on exactly 0.0 or 1.0 accordingly
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def lstm_cell_state(gates: Tensor, c_prev: Tensor) -> Tensor:
    """Fused memory-cell update: for gates = [i | f | g | o] pre-activations
    (last axis, equal quarters), returns sigmoid(f) * c_prev +
    sigmoid(i) * tanh(g). One node instead of eight keeps recurrent graphs
    small; the output-gate quarter gets zero gradient here."""
    gates, c_prev = as_tensor(gates), as_tensor(c_prev)
    w = gates.shape[-1] // 4
    if gates.shape[-1] != 4 * w or c_prev.shape[-1] != w:
        raise ShapeError(f"lstm_cell_state: gates {gates.shape} vs cell {c_prev.shape}")
    x = gates.data
    i = _sigmoid_raw(x[..., :w])
    f = _sigmoid_raw(x[..., w : 2 * w])
    g = np.tanh(x[..., 2 * w : 3 * w])
    out = f * c_prev.data + i * g

    def backward(dc):
        if gates.requires_grad:
            dgates = np.zeros_like(x)
            dgates[..., :w] = dc * g * i * (1.0 - i)
            dgates[..., w : 2 * w] = dc * c_prev.data * f * (1.0 - f)
            dgates[..., 2 * w : 3 * w] = dc * i * (1.0 - g * g)
            gates.accumulate_grad(dgates)
        if c_prev.requires_grad:
            c_prev.accumulate_grad(dc * f)

    return _make(out, (gates, c_prev), backward)


def lstm_cell_output(gates: Tensor, c_new: Tensor) -> Tensor:
    """Fused hidden-state readout sigmoid(o) * tanh(c_new), where o is the
    last quarter of the gate pre-activations."""
    gates, c_new = as_tensor(gates), as_tensor(c_new)
    w = gates.shape[-1] // 4
    if gates.shape[-1] != 4 * w or c_new.shape[-1] != w:
        raise ShapeError(f"lstm_cell_output: gates {gates.shape} vs cell {c_new.shape}")
    o = _sigmoid_raw(gates.data[..., 3 * w :])
    t = np.tanh(c_new.data)
    out = o * t

    def backward(dh):
        if gates.requires_grad:
            dgates = np.zeros_like(gates.data)
            dgates[..., 3 * w :] = dh * t * o * (1.0 - o)
            gates.accumulate_grad(dgates)
        if c_new.requires_grad:
            c_new.accumulate_grad(dh * o * (1.0 - t * t))

    return _make(out, (gates, c_new), backward)


def monotone_dp_step(alpha: Tensor, scores: Tensor, emit: Tensor, valid) -> Tensor:
    """One forward step of the monotone-alignment dynamic program, fused.

    out(j) = emit(j) + scores(j) + logsumexp_{i <= j}[alpha(i) - Z(i)] with
    Z(i) = logsumexp_{j' >= i} scores(j'), Z clamped to 0 at invalid rows
    (alpha is -inf there). `valid` is a constant (B, L) mask of real input
    positions; invalid columns of `scores` must already hold -inf.

    The hand-derived backward routes gradients through both logsumexps with
    softmax weights, all bounded in (0, 1] because each weight's log is a
    difference against the covering logsumexp.
    """
    alpha, scores, emit = as_tensor(alpha), as_tensor(scores), as_tensor(emit)
    valid = np.asarray(valid, dtype=bool)
    b, l = alpha.shape
    if scores.shape != (b, l) or emit.shape != (b, l) or valid.shape != (b, l):
        raise ShapeError("monotone_dp_step: mismatched (B, L) operands")
    row = np.arange(l)[:, None]
    col = np.arange(l)[None, :]
    suffix_mask = col >= row  # [i, j']: positions j' at or after i
    prefix_mask = col <= row  # [j, i]: positions i at or before j

    s = scores.data
    z = _lse_raw(np.where(suffix_mask, s[:, None, :], NEG_INF))  # (B, L_i)
    beta = alpha.data - np.where(valid, z, 0.0)  # -inf rows stay -inf
    m = _lse_raw(np.where(prefix_mask, beta[:, None, :], NEG_INF))  # (B, L_j)
    out = emit.data + s + m

    def backward(g):
        if emit.requires_grad:
            emit.accumulate_grad(g)
        finite_m = np.isfinite(m)
        w1 = np.exp(
            np.where(
                prefix_mask & finite_m[:, :, None],
                beta[:, None, :] - np.where(finite_m, m, 0.0)[:, :, None],
                NEG_INF,
            )
        )  # (B, j, i): posterior over the previous position
        dbeta = np.einsum("bj,bji->bi", g, w1)
        if alpha.requires_grad:
            alpha.accumulate_grad(dbeta)
        if scores.requires_grad:
            dz = np.where(valid, -dbeta, 0.0)
            finite_z = np.isfinite(z)
            w2 = np.exp(
                np.where(
                    suffix_mask & finite_z[:, :, None],
                    s[:, None, :] - np.where(finite_z, z, 0.0)[:, :, None],
                    NEG_INF,
                )
            )  # (B, i, j'): suffix-renormalized transition weights
            scores.accumulate_grad(g + np.einsum("bi,bij->bj", dz, w2))

    return _make(out, (alpha, scores, emit), backward)


def gather_axis1(t: Tensor, idx) -> Tensor:
    """out[b, j, ...] = t[b, idx[b, j], ...] for a (B, T, ...) tensor."""
    t = as_tensor(t)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[0] != t.shape[0]:
        raise ShapeError(f"gather_axis1: index shape {idx.shape} for tensor {t.shape}")
    rows = np.arange(t.shape[0])[:, None]
    data = t.data[rows, idx]

    def backward(g):
        if t.requires_grad:
            full = np.zeros_like(t.data)
            np.add.at(full, (rows, idx), g)
            t.accumulate_grad(full)

    return _make(data, (t,), backward)


def heaviside_st(t: Tensor) -> Tensor:
    """Binarize: negative -> 0.0, non-negative -> 1.0.

    Backward is the straight-through identity: the incoming gradient passes
    to the pre-activation unchanged (no clipping).
    """
    t = as_tensor(t)
    out = np.where(t.data < 0.0, 0.0, 1.0)

    def backward(g):
        if t.requires_grad:
            t.accumulate_grad(g)

    return _make(out, (t,), backward)


def where(cond, a, b) -> Tensor:
    """Elementwise select on a constant boolean mask."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    data = np.where(cond, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(np.where(cond, g, 0.0), a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(np.where(cond, 0.0, g), b.shape))

    return _make(data, (a, b), backward)


def sum_all(t: Tensor) -> Tensor:
    t = as_tensor(t)

    def backward(g):
        if t.requires_grad:
            t.accumulate_grad(np.full_like(t.data, float(g)))

    return _make(np.asarray(t.data.sum()), (t,), backward)


# ---------------------------------------------------------------------------
# backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into .grad for every reachable tensor.

    Gradients add onto existing buffers; callers zero them between steps.
    """
    if loss.ndim != 0:
        raise GradientError(f"backward: loss must be scalar, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack_ = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
            if node is not loss:
                node.grad = None  # interior grads are transient


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# init and optimization


def seeded_rng(seed) -> np.random.Generator:
    """Deterministic PCG64 stream for a fixed seed (LCG-family, documented).

    Accepts an int or a tuple mixing ints and short strings; strings are
    folded to ints bytewise so distinct purposes get distinct streams.
    """
    def fold(s):
        if isinstance(s, str):
            return int.from_bytes(s.encode("utf-8"), "little")
        return int(s) & ((1 << 64) - 1)  # SeedSequence wants non-negative ints

    if isinstance(seed, (tuple, list)):
        entropy = [fold(s) for s in seed]
    else:
        entropy = fold(seed)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def glorot_init(shape, rng: np.random.Generator, requires_grad: bool = True) -> Tensor:
    """Uniform on +-sqrt(6 / (fan_in + fan_out)).

    Matrices are laid out (fan_in, fan_out); vectors use their length for
    both fans; the empty shape draws a scalar with both fans equal to 1.
    """
    shape = tuple(shape)
    if len(shape) == 0:
        fan_in = fan_out = 1
    elif len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        fan_in, fan_out = shape[-2], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=requires_grad)


@dataclass
class AdamState:
    """Adam moments for a fixed parameter list, with bias correction."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate: float = 0.001, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params, state: AdamState) -> None:
    """One Adam update over params; gradients are left untouched."""
    params = list(params)
    if len(params) != len(state.m):
        raise GradientError("adam_step: state was built for a different parameter list")
    for p in params:
        if p.grad is None:
            raise GradientError("adam_step: parameter has no gradient")
        if p.grad.shape != p.data.shape:
            raise ShapeError("adam_step: gradient shape mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, m, v in zip(params, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * (p.grad * p.grad)
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


def clip_gradients(params, max_norm: float) -> None:
    norm = global_grad_norm(params)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale

"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation is a plain function that computes its value
with numpy and, when gradients are being tracked, records its parents and a
small context on the output tensor. The backward rule for each operation
lives in the ``BACKWARD`` registry under the operation's name, so a rule can
be inspected or swapped out (the gradient checker uses this for fault
injection).

Calling :func:`backward` on a scalar walks the recorded graph in reverse
topological order and accumulates into ``.grad`` of every leaf tensor that
has ``requires_grad=True``. Repeated calls accumulate; use ``zero_grad``.
"""

from __future__ import annotations

import contextlib
import os
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DomainError, NumericalError, ShapeError

# Bounds applied before arccos so its derivative stays finite.
ARCCOS_EPS = 1e-7

DEBUG = os.environ.get("CHEBYODO_DEBUG", "") not in ("", "0")

_state = threading.local()

BACKWARD: dict[str, Callable] = {}


def register_backward(name: str):
    def deco(fn):
        BACKWARD[name] = fn
        return fn

    return deco


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, benchmarks)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """N-dimensional float64 array that can take part in autodiff.

    Leaf tensors are created by the user (``Tensor(data, requires_grad=True)``);
    every other tensor is produced by an operation and remembers its parents
    while gradients are enabled.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "parents", "ctx", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op: str | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.ctx = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, like=self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)

    def sum(self, axis=None):
        return reduce("sum", self, axis)

    def mean(self, axis=None):
        return reduce("mean", self, axis)


def _raise_item():
    raise ShapeError("item() requires a tensor with exactly one element")


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if like is not None and arr.ndim == 0:
        arr = np.full(like.shape, float(arr))
    return Tensor(arr)


def _result(data: np.ndarray, op: str, parents: tuple, ctx=None) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out.op, out.parents, out.ctx = op, parents, ctx
    else:
        out.op, out.parents, out.ctx = None, (), None
    if DEBUG and not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite output from op {op!r}")
    return out


# ---------------------------------------------------------------------------
# graph traversal
# ---------------------------------------------------------------------------


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` with every parent before its children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every ``requires_grad`` leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not attached to any tensor that requires grad")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.op is None:
            if node.grad is None:
                node.grad = np.array(g, dtype=np.float64, copy=True).reshape(node.shape)
            else:
                node.grad += g
            continue
        parent_grads = BACKWARD[node.op](node.ctx, g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, "tanh", (x,), y)


@register_backward("tanh")
def _tanh_bw(y, g):
    return (g * (1.0 - y * y),)


def arccos(x: Tensor) -> Tensor:
    if np.any(np.abs(x.data) > 1.0):
        raise DomainError("arccos input outside [-1, 1]; clamp first")
    return _result(np.arccos(x.data), "arccos", (x,), x.data)


@register_backward("arccos")
def _arccos_bw(xd, g):
    return (-g / np.sqrt(1.0 - xd * xd),)


def cos(x: Tensor) -> Tensor:
    return _result(np.cos(x.data), "cos", (x,), x.data)


@register_backward("cos")
def _cos_bw(xd, g):
    return (-g * np.sin(xd),)


def sin(x: Tensor) -> Tensor:
    return _result(np.sin(x.data), "sin", (x,), x.data)


@register_backward("sin")
def _sin_bw(xd, g):
    return (g * np.cos(xd),)


def cos_multiples(theta: Tensor, degree: int, axis: int = -2) -> Tensor:
    """Stack ``cos(n * theta)`` for n = 0..degree along a new ``axis``.

    Uses the angle-addition recurrence from one ``cos`` and one ``sin``
    instead of evaluating ``degree`` separate cosines.
    """
    if degree < 0:
        raise ContractError("degree must be >= 0")
    c1, s1 = np.cos(theta.data), np.sin(theta.data)
    cosines, sines = [np.ones_like(c1)], [np.zeros_like(c1)]
    for _ in range(degree):
        c, s = cosines[-1], sines[-1]
        cosines.append(c * c1 - s * s1)
        sines.append(s * c1 + c * s1)
    return _result(np.stack(cosines, axis=axis), "cos_multiples", (theta,), (np.stack(sines, axis=axis), axis))


@register_backward("cos_multiples")
def _cos_multiples_bw(ctx, g):
    sines, axis = ctx
    shape = [1] * sines.ndim
    shape[axis] = -1
    n = np.arange(sines.shape[axis], dtype=np.float64).reshape(shape)
    return (-(g * sines * n).sum(axis=axis),)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _result(y, "exp", (x,), y)


@register_backward("exp")
def _exp_bw(y, g):
    return (g * y,)


def square(x: Tensor) -> Tensor:
    return _result(x.data * x.data, "square", (x,), x.data)


@register_backward("square")
def _square_bw(xd, g):
    return (2.0 * g * xd,)


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise DomainError("sqrt of a negative value")
    y = np.sqrt(x.data)
    return _result(y, "sqrt", (x,), y)


@register_backward("sqrt")
def _sqrt_bw(y, g):
    return (0.5 * g / y,)


def relu(x: Tensor) -> Tensor:
    # np.maximum propagates NaN, so a corrupted activation stays visible
    return _result(np.maximum(x.data, 0.0), "relu", (x,), x.data > 0)


@register_backward("relu")
def _relu_bw(mask, g):
    return (g * mask,)


def neg(x: Tensor) -> Tensor:
    return _result(-x.data, "neg", (x,))


@register_backward("neg")
def _neg_bw(_, g):
    return (-g,)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a constant (no gradient flows to ``c``)."""
    c = float(c)
    return _result(x.data * c, "scale", (x,), c)


@register_backward("scale")
def _scale_bw(c, g):
    return (g * c,)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    mask = (x.data >= lo) & (x.data <= hi)
    return _result(np.clip(x.data, lo, hi), "clamp", (x,), mask)


@register_backward("clamp")
def _clamp_bw(mask, g):
    return (g * mask,)


def _binary_operands(x, y, opname):
    x = _as_tensor(x)
    y = _as_tensor(y)
    if x.shape != y.shape and x.size != 1 and y.size != 1:
        raise ShapeError(f"{opname}: shapes {x.shape} and {y.shape} differ")
    return x, y


def _fold(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to a size-1 operand, or pass it through."""
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(x, y) -> Tensor:
    x, y = _binary_operands(x, y, "add")
    return _result(x.data + y.data, "add", (x, y), (x.shape, y.shape))


@register_backward("add")
def _add_bw(shapes, g):
    return _fold(g, shapes[0]), _fold(g, shapes[1])


def sub(x, y) -> Tensor:
    x, y = _binary_operands(x, y, "sub")
    return _result(x.data - y.data, "sub", (x, y), (x.shape, y.shape))


@register_backward("sub")
def _sub_bw(shapes, g):
    return _fold(g, shapes[0]), _fold(-g, shapes[1])


def mul(x, y) -> Tensor:
    if not isinstance(y, Tensor) and np.ndim(y) == 0:
        return scale(x, y)
    if not isinstance(x, Tensor) and np.ndim(x) == 0:
        return scale(y, x)
    x, y = _binary_operands(x, y, "mul")
    return _result(x.data * y.data, "mul", (x, y), (x.data, y.data))


@register_backward("mul")
def _mul_bw(ctx, g):
    xd, yd = ctx
    return _fold(g * yd, xd.shape), _fold(g * xd, yd.shape)


def div(x, y) -> Tensor:
    if not isinstance(y, Tensor) and np.ndim(y) == 0:
        if y == 0:
            raise DomainError("division by zero")
        return scale(x, 1.0 / y)
    x, y = _binary_operands(x, y, "div")
    if np.any(y.data == 0):
        raise DomainError("division by zero")
    out = x.data / y.data
    return _result(out, "div", (x, y), (x.shape, y.shape, out, y.data))


@register_backward("div")
def _div_bw(ctx, g):
    xshape, yshape, out, yd = ctx
    gx = g / yd
    return _fold(gx, xshape), _fold(-gx * out, yshape)


def elementwise(op_name: str, x: Tensor, y=None) -> Tensor:
    """Dispatch by name, for callers that pick the operation at runtime."""
    unary = {
        "tanh": tanh,
        "arccos": arccos,
        "cos": cos,
        "sin": sin,
        "exp": exp,
        "square": square,
        "sqrt": sqrt,
        "relu": relu,
        "neg": neg,
    }
    binary = {"add": add, "sub": sub, "mul": mul, "div": div}
    if op_name in unary:
        return unary[op_name](x)
    if op_name in binary:
        if y is None:
            raise ContractError(f"{op_name} needs a second operand")
        return binary[op_name](x, y)
    if op_name == "scale":
        return scale(x, y)
    if op_name == "clamp":
        lo, hi = y
        return clamp(x, lo, hi)
    raise ContractError(f"unknown elementwise op {op_name!r}")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes must agree or be absent."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions {a.shape} x {b.shape} differ")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions {a.shape[:-2]} and {b.shape[:-2]} differ")
    return _result(np.matmul(a.data, b.data), "matmul", (a, b), (a.data, b.data))


@register_backward("matmul")
def _matmul_bw(ctx, g):
    ad, bd = ctx
    ga = np.matmul(g, np.swapaxes(bd, -1, -2))
    gb = np.matmul(np.swapaxes(ad, -1, -2), g)
    if ga.ndim > ad.ndim:
        ga = ga.sum(axis=tuple(range(ga.ndim - ad.ndim)))
    if gb.ndim > bd.ndim:
        gb = gb.sum(axis=tuple(range(gb.ndim - bd.ndim)))
    return ga, gb


def conv1d(
    x: Tensor,
    weight: Tensor,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
    depthwise: bool = False,
) -> Tensor:
    """Grouped 1-D cross-correlation.

    ``x`` is ``(C_in, L)`` or batched ``(B, C_in, L)``; ``weight`` is
    ``(C_out, C_in // groups, K)``. ``depthwise=True`` forces
    ``groups == C_in`` and requires ``C_out == C_in``.
    """
    if x.ndim not in (2, 3) or weight.ndim != 3:
        raise ShapeError(f"conv1d: bad ranks x{x.shape} w{weight.shape}")
    if stride < 1 or padding < 0 or groups < 1:
        raise ShapeError("conv1d: stride >= 1, padding >= 0 and groups >= 1 required")
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    B, cin, L = xd.shape
    cout, cg, K = weight.shape
    if depthwise:
        if groups not in (1, cin):
            raise ShapeError("conv1d: depthwise requires groups == C_in")
        groups = cin
        if cout != cin:
            raise ShapeError("conv1d: depthwise requires C_out == C_in")
    if cin % groups or cout % groups:
        raise ShapeError(f"conv1d: channels {cin}->{cout} not divisible by groups={groups}")
    if cg != cin // groups:
        raise ShapeError(f"conv1d: weight expects {cg} channels per group, input gives {cin // groups}")
    lout = (L + 2 * padding - K) // stride + 1
    if lout < 1:
        raise ShapeError(f"conv1d: output length {lout} < 1")
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    wd = weight.data
    span = stride * (lout - 1) + 1
    if cg == 1 and cout == cin:
        # depthwise fast path: one filter per channel
        out = np.zeros((B, cin, lout))
        for k in range(K):
            out += wd[None, :, 0, k, None] * xp[:, :, k : k + span : stride]
        cols = None
    else:
        win = sliding_window_view(xp, K, axis=2)[:, :, : span : stride]  # (B, C, Lout, K)
        cog = cout // groups
        cols = (
            win.reshape(B, groups, cg, lout, K)
            .transpose(1, 2, 4, 0, 3)
            .reshape(groups, cg * K, B * lout)
        )
        out = np.matmul(wd.reshape(groups, cog, cg * K), cols)
        out = out.reshape(groups, cog, B, lout).transpose(2, 0, 1, 3).reshape(B, cout, lout)
    if unbatched:
        out = out[0]
    out = np.ascontiguousarray(out)
    ctx = dict(xp=xp, cols=cols, w=wd, stride=stride, padding=padding, groups=groups,
               L=L, lout=lout, unbatched=unbatched)
    return _result(out, "conv1d", (x, weight), ctx)


@register_backward("conv1d")
def _conv1d_bw(ctx, g):
    xp, cols, wd = ctx["xp"], ctx["cols"], ctx["w"]
    stride, padding, groups = ctx["stride"], ctx["padding"], ctx["groups"]
    L, lout = ctx["L"], ctx["lout"]
    if ctx["unbatched"]:
        g = g[None]
    B, cin, _ = xp.shape
    cout, cg, K = wd.shape
    span = stride * (lout - 1) + 1
    gxp = np.zeros_like(xp)
    if cols is None:
        gw = np.zeros_like(wd)
        for k in range(K):
            seg = xp[:, :, k : k + span : stride]
            gw[:, 0, k] = np.einsum("bcl,bcl->c", g, seg)
            gxp[:, :, k : k + span : stride] += wd[None, :, 0, k, None] * g
    else:
        cog = cout // groups
        go = g.reshape(B, groups, cog, lout).transpose(1, 2, 0, 3).reshape(groups, cog, B * lout)
        gw = np.matmul(go, cols.transpose(0, 2, 1)).reshape(wd.shape)
        gcols = np.matmul(wd.reshape(groups, cog, cg * K).transpose(0, 2, 1), go)
        gcols = gcols.reshape(groups, cg, K, B, lout).transpose(3, 0, 1, 2, 4).reshape(B, cin, K, lout)
        for k in range(K):
            gxp[:, :, k : k + span : stride] += gcols[:, :, k]
    gx = gxp[:, :, padding : padding + L] if padding else gxp
    if ctx["unbatched"]:
        gx = gx[0]
    return np.ascontiguousarray(gx), gw


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} invalid for shape {x.shape}")
    return axis % x.ndim


def reduce(op_name: str, x: Tensor, axis: int | None = None) -> Tensor:
    """Reduce along ``axis`` keeping it as size 1; ``axis=None`` reduces to a 0-d scalar."""
    if axis is not None:
        axis = _check_axis(x, axis)
    if op_name == "sum":
        out = x.data.sum(axis=axis, keepdims=axis is not None)
        return _result(np.asarray(out), "sum", (x,), (x.shape, axis))
    if op_name == "mean":
        out = x.data.mean(axis=axis, keepdims=axis is not None)
        return _result(np.asarray(out), "mean", (x,), (x.shape, axis))
    if op_name == "l2norm":
        out = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=axis is not None))
        out = np.asarray(out)
        return _result(out, "l2norm", (x,), (x.data, out, axis))
    raise ContractError(f"unknown reduction {op_name!r}")


def _spread(g, shape, axis):
    return np.broadcast_to(g, shape)


@register_backward("sum")
def _sum_bw(ctx, g):
    shape, axis = ctx
    return (np.array(_spread(g, shape, axis)),)


@register_backward("mean")
def _mean_bw(ctx, g):
    shape, axis = ctx
    n = int(np.prod(shape)) if axis is None else shape[axis]
    return (np.array(_spread(g, shape, axis)) / n,)


@register_backward("l2norm")
def _l2norm_bw(ctx, g):
    xd, norm, axis = ctx
    safe = np.where(norm > 0, norm, 1.0)
    return (np.where(norm > 0, g / safe, 0.0) * xd,)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(str(e)) from None
    return _result(out, "reshape", (x,), x.shape)


@register_backward("reshape")
def _reshape_bw(shape, g):
    return (g.reshape(shape),)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    return _result(np.ascontiguousarray(np.swapaxes(x.data, a, b)), "swapaxes", (x,), (a, b))


@register_backward("swapaxes")
def _swapaxes_bw(ctx, g):
    a, b = ctx
    return (np.ascontiguousarray(np.swapaxes(g, a, b)),)


def expand(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Repeat size-1 axes of ``x`` up to ``shape`` (same rank required)."""
    shape = tuple(shape)
    if len(shape) != x.ndim or any(s != t and s != 1 for s, t in zip(x.shape, shape)):
        raise ShapeError(f"cannot expand {x.shape} to {shape}")
    out = np.ascontiguousarray(np.broadcast_to(x.data, shape))
    return _result(out, "expand", (x,), x.shape)


@register_backward("expand")
def _expand_bw(shape, g):
    axes = tuple(i for i, (s, t) in enumerate(zip(shape, g.shape)) if s == 1 and t != 1)
    return (g.sum(axis=axes, keepdims=True) if axes else g,)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    axis = _check_axis(tensors[0], axis)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(str(e)) from None
    sizes = [t.shape[axis] for t in tensors]
    return _result(out, "concat", tuple(tensors), (axis, np.cumsum(sizes)[:-1]))


@register_backward("concat")
def _concat_bw(ctx, g):
    axis, splits = ctx
    return tuple(np.split(g, splits, axis=axis))


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    expanded = []
    for t in tensors:
        ax = axis % (t.ndim + 1)
        expanded.append(reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]))
    return concat(expanded, axis=axis)


def getitem(x: Tensor, idx) -> Tensor:
    return _result(np.ascontiguousarray(x.data[idx]), "getitem", (x,), (x.shape, idx))


@register_backward("getitem")
def _getitem_bw(ctx, g):
    shape, idx = ctx
    out = np.zeros(shape)
    np.add.at(out, idx, g)
    return (out,)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically shifted softmax along ``axis``."""
    axis = _check_axis(x, axis)
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    e /= e.sum(axis=axis, keepdims=True)
    return _result(e, "softmax", (x,), (e, axis))


@register_backward("softmax")
def _softmax_bw(ctx, g):
    y, axis = ctx
    return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

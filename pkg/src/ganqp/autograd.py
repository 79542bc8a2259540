"""Minimal reverse-mode automatic differentiation over float64 arrays.

Every primitive's vector-Jacobian product is itself written with
``Tensor`` operations, so gradients can be differentiated again
(``create_graph=True``).  That is what the gradient-penalty objective needs.

The graph is implicit: each ``Tensor`` produced by an operation keeps
references to its parents and to the vjp closure.  Piecewise-linear
primitives (``relu``, ``abs``, ``clip``) use a constant mask in their vjp,
which makes their second derivative exactly zero everywhere (the
subgradient convention at the kink is 0 for relu/clip boundaries and
``sign(0) = 0`` for abs).
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradError",
    "ShapeError",
    "NonFiniteError",
    "DomainError",
    "as_tensor",
    "grad",
    "input_gradient",
    "grad_check",
    "stop_gradient",
    "matmul",
    "affine",
    "tanh",
    "relu",
    "sigmoid",
    "log",
    "exp",
    "square",
    "sqrt",
    "absolute",
    "clip",
    "concatenate",
    "slice_axis",
    "l1_norm",
    "l2_norm",
]


class GradError(RuntimeError):
    """Misuse of the differentiation engine."""


class ShapeError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    pass


class DomainError(ValueError):
    pass


# ops allowed inside a subgraph that is differentiated twice; relu and abs
# are admitted under the zero-second-derivative convention
TWICE_DIFFERENTIABLE = frozenset({
    "leaf", "add", "sub", "mul", "div", "neg", "matmul", "transpose",
    "reshape", "sum", "mean", "broadcast_to", "tanh", "sigmoid", "relu",
    "log", "exp", "square", "sqrt", "abs", "concatenate", "slice", "pad",
    "affine", "scale",
})


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_vjp")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite value in leaf tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], vjp: Callable, op: str) -> "Tensor":
        # a sum is non-finite whenever any term is; the exact check runs only then
        if not np.isfinite(np.add.reduce(data, axis=None)) and not np.isfinite(data).all():
            raise NonFiniteError(f"non-finite value produced by {op!r}")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        rg = False
        for p in parents:
            if p.requires_grad:
                rg = True
                break
        out.requires_grad = rg
        if rg:
            out._parents = tuple(parents)
            out._vjp = vjp
        else:
            out._parents = ()
            out._vjp = None
        return out

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
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out.op = "leaf"
        out._parents = ()
        out._vjp = None
        return out

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires grad."""
        leaves = [n for n in _topo_order(self) if n.op == "leaf" and n.requires_grad]
        grads = grad(self, leaves)
        for leaf, g in zip(leaves, grads):
            leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def stop_gradient(x: Tensor) -> Tensor:
    """Same value, no gradient flows back through it."""
    return as_tensor(x).detach()


# -- broadcasting ---------------------------------------------------------

def _unbroadcast(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    if a.data.shape == b.data.shape:
        return a.data.shape
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- binary ops -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def vjp(g, out, ins, need):
        x, y = ins
        return (_unbroadcast(g, x.shape) if need[0] else None,
                _unbroadcast(g, y.shape) if need[1] else None)

    return Tensor._make(a.data + b.data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def vjp(g, out, ins, need):
        x, y = ins
        return (_unbroadcast(g, x.shape) if need[0] else None,
                _unbroadcast(neg(g), y.shape) if need[1] else None)

    return Tensor._make(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def vjp(g, out, ins, need):
        x, y = ins
        return (_unbroadcast(mul(g, y), x.shape) if need[0] else None,
                _unbroadcast(mul(g, x), y.shape) if need[1] else None)

    return Tensor._make(a.data * b.data, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    if np.any(b.data == 0):
        raise NonFiniteError("division by zero")

    def vjp(g, out, ins, need):
        x, y = ins
        gx = _unbroadcast(div(g, y), x.shape) if need[0] else None
        gy = _unbroadcast(neg(div(mul(g, out), y)), y.shape) if need[1] else None
        return gx, gy

    return Tensor._make(a.data / b.data, (a, b), vjp, "div")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def vjp(g, out, ins, need):
        x, y = ins
        return (matmul(g, transpose(y)) if need[0] else None,
                matmul(transpose(x), g) if need[1] else None)

    return Tensor._make(a.data @ b.data, (a, b), vjp, "matmul")


def affine(x, w, b) -> Tensor:
    """x @ w + b as one node; b has shape (out,) and is broadcast over rows."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"affine: incompatible shapes {x.shape} @ {w.shape} + {b.shape}")

    def vjp(g, out, ins, need):
        xx, ww, _ = ins
        return (matmul(g, transpose(ww)) if need[0] else None,
                matmul(transpose(xx), g) if need[1] else None,
                tsum(g, axis=0) if need[2] else None)

    return Tensor._make(x.data @ w.data + b.data, (x, w, b), vjp, "affine")


# -- unary ops ------------------------------------------------------------

def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._make(-a.data, (a,), lambda g, out, ins, need: (neg(g),), "neg")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor")
    return Tensor._make(a.data.T, (a,), lambda g, out, ins, need: (transpose(g),), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from None
    in_shape = a.shape
    return Tensor._make(data, (a,), lambda g, out, ins, need: (reshape(g, in_shape),), "reshape")


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} to {shape}") from None
    in_shape = a.shape
    return Tensor._make(data, (a,), lambda g, out, ins, need: (_unbroadcast(g, in_shape),), "broadcast_to")


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    in_shape = a.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(in_shape))

    def vjp(g, out, ins, need):
        if not keepdims:
            g = reshape(g, kept)
        return (broadcast_to(g, in_shape),)

    return Tensor._make(np.sum(a.data, axis=axes, keepdims=keepdims), (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    if count == 0:
        raise ShapeError("mean over an empty axis")
    return mul(tsum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def tanh(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g, out, ins, need):
        return (mul(g, sub(1.0, square(out))),)

    return Tensor._make(np.tanh(a.data), (a,), vjp, "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split to avoid overflow in exp for large |x|
    e = np.exp(-np.abs(x))
    data = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def vjp(g, out, ins, need):
        return (mul(g, mul(out, sub(1.0, out))),)

    return Tensor._make(data, (a,), vjp, "sigmoid")


def _scale(a: Tensor, c: np.ndarray) -> Tensor:
    """a * c for a constant array c of a's shape; linear, so its vjp is itself."""
    return Tensor._make(a.data * c, (a,), lambda g, out, ins, need: (_scale(g, c),), "scale")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.data > 0).astype(a.data.dtype)  # float mask multiplies faster than bool

    def vjp(g, out, ins, need):
        return (_scale(g, mask),)

    return Tensor._make(np.maximum(a.data, 0.0), (a,), vjp, "relu")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive value")

    def vjp(g, out, ins, need):
        return (div(g, ins[0]),)

    return Tensor._make(np.log(a.data), (a,), vjp, "log")


def exp(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._make(np.exp(a.data), (a,), lambda g, out, ins, need: (mul(g, out),), "exp")


def square(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g, out, ins, need):
        return (mul(g, mul(2.0, ins[0])),)

    return Tensor._make(a.data * a.data, (a,), vjp, "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")

    def vjp(g, out, ins, need):
        return (div(g, mul(2.0, out)),)

    return Tensor._make(np.sqrt(a.data), (a,), vjp, "sqrt")


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)

    def vjp(g, out, ins, need):
        return (mul(g, sign),)

    return Tensor._make(np.abs(a.data), (a,), vjp, "abs")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    a = as_tensor(a)
    mask = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)

    def vjp(g, out, ins, need):
        return (mul(g, mask),)

    return Tensor._make(np.clip(a.data, lo, hi), (a,), vjp, "clip")


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    """Entries [start, stop) along ``axis``."""
    a = as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    total = a.shape[axis]

    def vjp(g, out, ins, need):
        return (_pad(g, axis, start, total - stop),)

    return Tensor._make(a.data[tuple(index)].copy(), (a,), vjp, "slice")


def _pad(a: Tensor, axis: int, before: int, after: int) -> Tensor:
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    length = a.shape[axis]

    def vjp(g, out, ins, need):
        return (slice_axis(g, axis, before, before + length),)

    return Tensor._make(np.pad(a.data, widths), (a,), vjp, "pad")


def concatenate(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concatenate needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concatenate: {exc}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def vjp(g, out, ins, need):
        return tuple(slice_axis(g, axis, int(bounds[i]), int(bounds[i + 1])) if need[i] else None
                     for i in range(len(ins)))

    return Tensor._make(data, tensors, vjp, "concatenate")


def l1_norm(a, axis=-1, keepdims: bool = False) -> Tensor:
    return tsum(absolute(a), axis=axis, keepdims=keepdims)


def l2_norm(a, axis=-1, keepdims: bool = False, eps: float = 0.0) -> Tensor:
    """Euclidean norm; ``eps`` inside the root keeps the derivative finite at 0."""
    s = tsum(square(a), axis=axis, keepdims=keepdims)
    if eps:
        s = add(s, eps)
    return sqrt(s)


# -- differentiation ------------------------------------------------------

def _topo_order(output: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False,
         grad_output=None) -> list[Tensor]:
    """Gradients of a scalar ``output`` with respect to each tensor in ``inputs``.

    Inputs the output does not depend on get a zero tensor.  With
    ``create_graph`` the returned tensors are themselves differentiable.
    """
    if not isinstance(output, Tensor):
        raise GradError("output must be a Tensor")
    if grad_output is None:
        if output.size != 1:
            raise GradError(f"output must be a scalar, got shape {output.shape}")
        seed = Tensor(np.ones_like(output.data))
    else:
        seed = as_tensor(grad_output)
        if seed.shape != output.shape:
            raise ShapeError("grad_output shape does not match output")

    order = _topo_order(output)
    targets = {id(t) for t in inputs}
    # prune to nodes lying on a path from some input to the output
    needed: dict[int, bool] = {}
    for node in order:
        needed[id(node)] = id(node) in targets or any(needed.get(id(p), False) for p in node._parents)

    adj: dict[int, Tensor] = {id(output): seed}
    for node in reversed(order):
        g = adj.get(id(node))
        if g is None or not node._parents or not needed[id(node)]:
            continue
        if create_graph:
            ins, out = node._parents, node
        else:
            ins, out = tuple(p.detach() for p in node._parents), node.detach()
            g = g.detach()
        need = tuple(needed.get(id(p), False) and p.requires_grad for p in node._parents)
        contribs = node._vjp(g, out, ins, need)
        for parent, c, wanted in zip(node._parents, contribs, need):
            if not wanted or c is None:
                continue
            if c.shape != parent.shape:
                raise ShapeError(f"vjp of {node.op!r} returned shape {c.shape}, expected {parent.shape}")
            prev = adj.get(id(parent))
            adj[id(parent)] = c if prev is None else add(prev, c)

    result = []
    for t in inputs:
        g = adj.get(id(t))
        if g is None:
            g = Tensor(np.zeros_like(t.data))
        elif not create_graph:
            g = g.detach()
        result.append(g)
    return result


def _subgraph_ops(output: Tensor, source: Tensor) -> set[str]:
    order = _topo_order(output)
    on_path: dict[int, bool] = {}
    ops = set()
    for node in order:
        hit = node is source or any(on_path.get(id(p), False) for p in node._parents)
        on_path[id(node)] = hit
        if hit:
            ops.add(node.op)
    return ops


def input_gradient(output: Tensor, x: Tensor) -> Tensor:
    """Differentiable node holding d(sum of output)/dx.

    For a per-sample output of shape (n, 1) and inputs of shape (n, k) this
    is the batch of per-sample input gradients, as long as samples do not
    interact inside the network.
    """
    if not x.requires_grad:
        raise GradError("input must require grad")
    bad = _subgraph_ops(output, x) - TWICE_DIFFERENTIABLE
    if bad:
        raise GradError(f"subgraph contains ops without a usable second derivative: {sorted(bad)}")
    total = output if output.size == 1 else tsum(output)
    return grad(total, [x], create_graph=True)[0]


def grad_check(fn: Callable[..., Tensor], point: Iterable, h: float = 1e-5) -> float:
    """Worst relative error between backprop and central differences.

    ``fn`` takes one Tensor per array in ``point`` and returns a scalar.
    Relative error per coordinate is |a - b| / max(|a|, |b|, 1e-8).
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-7, 1e-3]")
    arrays = [np.array(p, dtype=np.float64) for p in point]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    analytic = [g.data for g in grad(fn(*leaves), leaves)]

    def value(arrs):
        return float(fn(*[Tensor(a) for a in arrs]).data)

    worst = 0.0
    for k, base in enumerate(arrays):
        flat = base.reshape(-1)
        for i in range(flat.size):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[k].reshape(-1)[i] += h
            minus[k].reshape(-1)[i] -= h
            numeric = (value(plus) - value(minus)) / (2 * h)
            a = analytic[k].reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst

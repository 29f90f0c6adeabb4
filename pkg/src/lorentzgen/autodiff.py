"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Graphs are built eagerly: every operation returns a ``Tensor`` holding its
value, links to its inputs, and two closures — a reverse rule that
accumulates gradients into the inputs, and a forward (JVP) rule that builds
the directional-derivative graph out of the same primitives.  The JVP rule
is what lets the adversarial gradient penalty differentiate a critic's
input-gradient with respect to the critic parameters without second-order
reverse mode: the tangent expressions reference the primal graph nodes, so
an ordinary backward pass through them reaches the parameters.

Tensors are dense and row-major.  There is no implicit broadcasting;
mixed-shape combinations go through explicit primitives (``add_bias``,
``mul_cols``, ``mul_scalar``) so every reverse rule stays auditable.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from lorentzgen.geometry import Curvature, project_tangent

ACOSH_GRAD_CLAMP = 1e-12  # acosh backward clamps its argument to >= 1 + this
SQRT_GRAD_GUARD = 1e-15
SINHC_CUTOFF = 1e-6


class ShapeError(ValueError):
    """Raised at graph-build time when operand shapes are incompatible."""


class Tensor:
    """Node in the differentiation graph: a value plus gradient plumbing."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "op", "name", "manifold", "_backward", "_jvp")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple = (),
        op: str = "leaf",
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.op = op
        self.name = name
        self.manifold: Optional[Curvature] = None
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._jvp: Optional[Callable[[list], "Tensor"]] = None

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data, name: str, manifold: Optional[Curvature] = None) -> Tensor:
    """A trainable leaf; ``manifold`` marks it as constrained to the hyperboloid."""
    t = Tensor(data, requires_grad=True, op="param", name=name)
    t.manifold = manifold
    return t


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False, op="const")


def _node(data, parents: Sequence[Tensor], op: str) -> Tensor:
    return Tensor(
        data,
        requires_grad=any(p.requires_grad for p in parents),
        parents=tuple(parents),
        op=op,
    )


def _topo_order(root: Tensor) -> list[Tensor]:
    # Iterative post-order; graphs can be 10^5 nodes deep in training loops.
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Reverse-mode sweep filling ``grad`` of every requires_grad ancestor."""
    if root.data.size != 1:
        raise ValueError(f"backward requires a scalar root, got shape {root.data.shape}")
    order = _topo_order(root)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node.grad is None or node._backward is None:
            continue
        if node.requires_grad:
            node._backward(node.grad)
        if node.parents:
            node.grad = None  # free intermediate buffers; leaves keep theirs


def jvp(root: Tensor, wrt: Tensor, seed: np.ndarray) -> Optional[Tensor]:
    """Forward-mode directional derivative d(root)/d(wrt) applied to ``seed``.

    Returns a Tensor expression (a function of the primal graph, hence of
    any parameters upstream), or None when ``root`` does not depend on
    ``wrt``.  Shapes follow the primal nodes.
    """
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != wrt.data.shape:
        raise ShapeError(f"seed shape {seed.shape} must match {wrt.data.shape}")
    tangents: dict[int, Optional[Tensor]] = {id(wrt): constant(seed)}
    for node in _topo_order(root):
        if id(node) in tangents:
            continue
        if not node.parents:
            tangents[id(node)] = None
            continue
        tans = [tangents.get(id(p)) for p in node.parents]
        if all(t is None for t in tans):
            tangents[id(node)] = None
        else:
            if node._jvp is None:
                raise NotImplementedError(f"no forward rule for op '{node.op}'")
            tangents[id(node)] = node._jvp(tans)
    return tangents.get(id(root))


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = _node(a.data + b.data, (a, b), "add")

    def bw(g):
        a.accumulate(g)
        b.accumulate(g)

    out._backward = bw
    out._jvp = lambda tans: _sum_tangents(tans)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = _node(a.data - b.data, (a, b), "sub")

    def bw(g):
        a.accumulate(g)
        b.accumulate(-g)

    out._backward = bw
    out._jvp = lambda tans: _sum_tangents([tans[0], None if tans[1] is None else scale(tans[1], -1.0)])
    return out


def _sum_tangents(tans):
    live = [t for t in tans if t is not None]
    acc = live[0]
    for t in live[1:]:
        acc = add(acc, t)
    return acc


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = _node(a.data * b.data, (a, b), "mul")

    def bw(g):
        a.accumulate(g * b.data)
        b.accumulate(g * a.data)

    out._backward = bw

    def fw(tans):
        parts = []
        if tans[0] is not None:
            parts.append(mul(tans[0], b))
        if tans[1] is not None:
            parts.append(mul(a, tans[1]))
        return _sum_tangents(parts)

    out._jvp = fw
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "div")
    out = _node(a.data / b.data, (a, b), "div")

    def bw(g):
        a.accumulate(g / b.data)
        b.accumulate(-g * out.data / b.data)

    out._backward = bw

    def fw(tans):
        parts = []
        if tans[0] is not None:
            parts.append(div(tans[0], b))
        if tans[1] is not None:
            parts.append(scale(mul(out, div(tans[1], b)), -1.0))
        return _sum_tangents(parts)

    out._jvp = fw
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = _node(a.data * c, (a,), "scale")
    out._backward = lambda g: a.accumulate(g * c)
    out._jvp = lambda tans: scale(tans[0], c)
    return out


def add_const(a: Tensor, c: float) -> Tensor:
    out = _node(a.data + c, (a,), "add_const")
    out._backward = lambda g: a.accumulate(g)
    out._jvp = lambda tans: tans[0]
    return out


def mul_const(a: Tensor, arr: np.ndarray) -> Tensor:
    """Elementwise product with a fixed array (dropout masks, metric signs)."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape != a.data.shape:
        raise ShapeError(f"mul_const: shape mismatch {arr.shape} vs {a.data.shape}")
    out = _node(a.data * arr, (a,), "mul_const")
    out._backward = lambda g: a.accumulate(g * arr)
    out._jvp = lambda tans: mul_const(tans[0], arr)
    return out


def mul_scalar(s: Tensor, a: Tensor) -> Tensor:
    """Scalar tensor times tensor; the one permitted broadcast."""
    if s.data.ndim != 0:
        raise ShapeError(f"mul_scalar: first operand must be 0-d, got {s.data.shape}")
    out = _node(s.data * a.data, (s, a), "mul_scalar")

    def bw(g):
        s.accumulate(np.asarray(np.sum(g * a.data)))
        a.accumulate(g * s.data)

    out._backward = bw

    def fw(tans):
        parts = []
        if tans[0] is not None:
            parts.append(mul_scalar(tans[0], a))
        if tans[1] is not None:
            parts.append(mul_scalar(s, tans[1]))
        return _sum_tangents(parts)

    out._jvp = fw
    return out


# ---------------------------------------------------------------------------
# matrix / structural ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    out = _node(a.data @ b.data, (a, b), "matmul")

    def bw(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    out._backward = bw

    def fw(tans):
        parts = []
        if tans[0] is not None:
            parts.append(matmul(tans[0], b))
        if tans[1] is not None:
            parts.append(matmul(a, tans[1]))
        return _sum_tangents(parts)

    out._jvp = fw
    return out


def matvec(a: Tensor, x: Tensor) -> Tensor:
    if a.data.ndim != 2 or x.data.ndim != 1 or a.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {a.data.shape} @ {x.data.shape}")
    out = _node(a.data @ x.data, (a, x), "matvec")

    def bw(g):
        a.accumulate(np.outer(g, x.data))
        x.accumulate(a.data.T @ g)

    out._backward = bw

    def fw(tans):
        parts = []
        if tans[0] is not None:
            parts.append(matvec(tans[0], x))
        if tans[1] is not None:
            parts.append(matvec(a, tans[1]))
        return _sum_tangents(parts)

    out._jvp = fw
    return out


def transpose(a: Tensor) -> Tensor:
    out = _node(a.data.T, (a,), "transpose")
    out._backward = lambda g: a.accumulate(g.T)
    out._jvp = lambda tans: transpose(tans[0])
    return out


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """(B, m) matrix plus a length-m bias row, broadcast over rows."""
    if a.data.ndim != 2 or b.data.ndim != 1 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"add_bias: incompatible shapes {a.data.shape} + {b.data.shape}")
    out = _node(a.data + b.data, (a, b), "add_bias")

    def bw(g):
        a.accumulate(g)
        b.accumulate(g.sum(axis=0))

    out._backward = bw

    def fw(tans):
        if tans[1] is None:
            return tans[0]
        if tans[0] is None:
            return add_bias(_zeros_like(a), tans[1])
        return add_bias(tans[0], tans[1])

    out._jvp = fw
    return out


def mul_cols(a: Tensor, c: Tensor) -> Tensor:
    """Scale each row of (B, m) by the matching entry of a (B, 1) column."""
    if a.data.ndim != 2 or c.data.shape != (a.data.shape[0], 1):
        raise ShapeError(f"mul_cols: incompatible shapes {a.data.shape} * {c.data.shape}")
    out = _node(a.data * c.data, (a, c), "mul_cols")

    def bw(g):
        a.accumulate(g * c.data)
        c.accumulate((g * a.data).sum(axis=1, keepdims=True))

    out._backward = bw

    def fw(tans):
        parts = []
        if tans[0] is not None:
            parts.append(mul_cols(tans[0], c))
        if tans[1] is not None:
            parts.append(mul_cols(a, tans[1]))
        return _sum_tangents(parts)

    out._jvp = fw
    return out


def hstack(parts: Sequence[Tensor]) -> Tensor:
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise ShapeError("hstack: all parts must be 2-d with equal row counts")
    out = _node(np.concatenate([p.data for p in parts], axis=1), tuple(parts), "hstack")
    widths = [p.data.shape[1] for p in parts]

    def bw(g):
        j = 0
        for p, w in zip(parts, widths):
            p.accumulate(g[:, j : j + w])
            j += w

    out._backward = bw

    def fw(tans):
        blocks = [t if t is not None else _zeros_like(p) for p, t in zip(parts, tans)]
        return hstack(blocks)

    out._jvp = fw
    return out


def vstack(parts: Sequence[Tensor]) -> Tensor:
    cols_n = parts[0].data.shape[1]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[1] != cols_n:
            raise ShapeError("vstack: all parts must be 2-d with equal column counts")
    out = _node(np.concatenate([p.data for p in parts], axis=0), tuple(parts), "vstack")
    heights = [p.data.shape[0] for p in parts]

    def bw(g):
        i = 0
        for p, h in zip(parts, heights):
            p.accumulate(g[i : i + h, :])
            i += h

    out._backward = bw

    def fw(tans):
        blocks = [t if t is not None else _zeros_like(p) for p, t in zip(parts, tans)]
        return vstack(blocks)

    out._jvp = fw
    return out


def cols(a: Tensor, j0: int, j1: int) -> Tensor:
    if a.data.ndim != 2 or not (0 <= j0 < j1 <= a.data.shape[1]):
        raise ShapeError(f"cols: bad slice [{j0}:{j1}] of {a.data.shape}")
    out = _node(a.data[:, j0:j1], (a,), "cols")

    def bw(g):
        full = np.zeros_like(a.data)
        full[:, j0:j1] = g
        a.accumulate(full)

    out._backward = bw
    out._jvp = lambda tans: cols(tans[0], j0, j1)
    return out


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    if a.data.ndim != 2:
        raise ShapeError("take_rows: input must be 2-d")
    out = _node(a.data[idx], (a,), "take_rows")

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a.accumulate(full)

    out._backward = bw
    out._jvp = lambda tans: take_rows(tans[0], idx)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = _node(a.data.reshape(shape), (a,), "reshape")
    out._backward = lambda g: a.accumulate(g.reshape(a.data.shape))
    out._jvp = lambda tans: reshape(tans[0], shape)
    return out


def _zeros_like(t: Tensor) -> Tensor:
    return constant(np.zeros_like(t.data))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    out = _node(np.asarray(a.data.sum()), (a,), "sum_all")
    out._backward = lambda g: a.accumulate(np.full(a.data.shape, float(g)))
    out._jvp = lambda tans: sum_all(tans[0])
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = _node(np.asarray(a.data.mean()), (a,), "mean_all")
    out._backward = lambda g: a.accumulate(np.full(a.data.shape, float(g) / n))
    out._jvp = lambda tans: mean_all(tans[0])
    return out


def sum_axis1(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("sum_axis1: input must be 2-d")
    out = _node(a.data.sum(axis=1, keepdims=True), (a,), "sum_axis1")
    out._backward = lambda g: a.accumulate(np.broadcast_to(g, a.data.shape))
    out._jvp = lambda tans: sum_axis1(tans[0])
    return out


def sum_axis0(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("sum_axis0: input must be 2-d")
    out = _node(a.data.sum(axis=0, keepdims=True), (a,), "sum_axis0")
    out._backward = lambda g: a.accumulate(np.broadcast_to(g, a.data.shape))
    out._jvp = lambda tans: sum_axis0(tans[0])
    return out


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------


def square(a: Tensor) -> Tensor:
    out = _node(a.data * a.data, (a,), "square")
    out._backward = lambda g: a.accumulate(2.0 * g * a.data)
    out._jvp = lambda tans: scale(mul(a, tans[0]), 2.0)
    return out


def sqrt(a: Tensor) -> Tensor:
    out = _node(np.sqrt(a.data), (a,), "sqrt")
    out._backward = lambda g: a.accumulate(g / (2.0 * np.maximum(out.data, SQRT_GRAD_GUARD)))
    out._jvp = lambda tans: div(tans[0], scale(clamp_min(out, SQRT_GRAD_GUARD), 2.0))
    return out


def exp(a: Tensor) -> Tensor:
    out = _node(np.exp(a.data), (a,), "exp")
    out._backward = lambda g: a.accumulate(g * out.data)
    out._jvp = lambda tans: mul(out, tans[0])
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = _node(data, (a,), "sigmoid")
    out._backward = lambda g: a.accumulate(g * out.data * (1.0 - out.data))

    def fw(tans):
        one_minus = add_const(scale(out, -1.0), 1.0)
        return mul(mul(out, one_minus), tans[0])

    out._jvp = fw
    return out


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(np.float64)
    out = _node(a.data * mask, (a,), "relu")
    out._backward = lambda g: a.accumulate(g * mask)
    out._jvp = lambda tans: mul_const(tans[0], mask)
    return out


def cosh(a: Tensor) -> Tensor:
    out = _node(np.cosh(a.data), (a,), "cosh")
    out._backward = lambda g: a.accumulate(g * np.sinh(a.data))
    out._jvp = lambda tans: mul(sinh(a), tans[0])
    return out


def sinh(a: Tensor) -> Tensor:
    out = _node(np.sinh(a.data), (a,), "sinh")
    out._backward = lambda g: a.accumulate(g * np.cosh(a.data))
    out._jvp = lambda tans: mul(cosh(a), tans[0])
    return out


def _sinhc_val(x: np.ndarray) -> np.ndarray:
    small = np.abs(x) < SINHC_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 6.0, np.sinh(safe) / safe)


def _sinhc_deriv(x: np.ndarray) -> np.ndarray:
    # d/dx sinh(x)/x = cosh(x)/x - sinh(x)/x^2; series x/3 near zero.
    small = np.abs(x) < SINHC_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, x / 3.0, np.cosh(safe) / safe - np.sinh(safe) / (safe * safe))


def sinhc(a: Tensor) -> Tensor:
    """sinh(x)/x with a second-order series below the cutoff.

    The forward (JVP) rule freezes the derivative coefficient; tangent
    values are exact, but differentiating *through* a sinhc tangent is not
    supported.  No critic path contains sinhc, so the gradient-penalty
    machinery never relies on it.
    """
    out = _node(_sinhc_val(a.data), (a,), "sinhc")
    out._backward = lambda g: a.accumulate(g * _sinhc_deriv(a.data))
    out._jvp = lambda tans: mul_const(tans[0], _sinhc_deriv(a.data))
    return out


def _asinhc_val(x: np.ndarray) -> np.ndarray:
    small = np.abs(x) < SINHC_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.arcsinh(safe) / safe)


def _asinhc_deriv(x: np.ndarray) -> np.ndarray:
    # d/dx asinh(x)/x = (1/sqrt(1+x^2) - asinh(x)/x)/x; series -x/3 near zero.
    small = np.abs(x) < SINHC_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, -x / 3.0, (1.0 / np.sqrt(1.0 + safe * safe) - np.arcsinh(safe) / safe) / safe)


def asinhc(a: Tensor) -> Tensor:
    """asinh(x)/x with a second-order series below the cutoff.

    Like ``sinhc``, the forward rule freezes the derivative coefficient;
    no critic path contains it.
    """
    out = _node(_asinhc_val(a.data), (a,), "asinhc")
    out._backward = lambda g: a.accumulate(g * _asinhc_deriv(a.data))
    out._jvp = lambda tans: mul_const(tans[0], _asinhc_deriv(a.data))
    return out


def acosh(a: Tensor) -> Tensor:
    """acosh with the argument clamped to >= 1 (and >= 1+1e-12 in grads)."""
    data = np.arccosh(np.maximum(a.data, 1.0))
    out = _node(data, (a,), "acosh")

    def bw(g):
        safe = np.maximum(a.data, 1.0 + ACOSH_GRAD_CLAMP)
        a.accumulate(g / np.sqrt(safe * safe - 1.0))

    out._backward = bw

    def fw(tans):
        safe = clamp_min(a, 1.0 + ACOSH_GRAD_CLAMP)
        den = sqrt(add_const(square(safe), -1.0))
        return div(tans[0], den)

    out._jvp = fw
    return out


def clamp_min(a: Tensor, c: float) -> Tensor:
    """Clamp below at c; the derivative passes through unchanged.

    Used inside numerically stabilized rules where the clamp is a guard,
    not part of the function being modeled.
    """
    out = _node(np.maximum(a.data, c), (a,), "clamp_min")
    out._backward = lambda g: a.accumulate(g)
    out._jvp = lambda tans: tans[0]
    return out


# ---------------------------------------------------------------------------
# geometry-flavored primitives
# ---------------------------------------------------------------------------


def rownorm(a: Tensor) -> Tensor:
    """Euclidean norm of each row of a (B, m) matrix, as (B, 1)."""
    if a.data.ndim != 2:
        raise ShapeError("rownorm: input must be 2-d")
    val = np.linalg.norm(a.data, axis=1, keepdims=True)
    out = _node(val, (a,), "rownorm")

    def bw(g):
        a.accumulate(g * a.data / np.maximum(out.data, SQRT_GRAD_GUARD))

    out._backward = bw

    def fw(tans):
        num = sum_axis1(mul(a, tans[0]))
        return div(num, clamp_min(out, SQRT_GRAD_GUARD))

    out._jvp = fw
    return out


def lorentz_metric(a: Tensor) -> Tensor:
    """Apply diag(-1, 1, ..., 1) to each row (its own inverse)."""
    if a.data.ndim != 2:
        raise ShapeError("lorentz_metric: input must be 2-d")
    signs = np.ones(a.data.shape[1])
    signs[0] = -1.0
    return mul_const(a, np.broadcast_to(signs, a.data.shape))


def lorentz_inner_rows(a: Tensor, b: Tensor) -> Tensor:
    """Rowwise Lorentz inner product of two (B, n+1) matrices, as (B, 1)."""
    _check_same_shape(a, b, "lorentz_inner_rows")
    if a.data.ndim != 2:
        raise ShapeError("lorentz_inner_rows: inputs must be 2-d")
    val = (-a.data[:, :1] * b.data[:, :1]) + (a.data[:, 1:] * b.data[:, 1:]).sum(axis=1, keepdims=True)
    out = _node(val, (a, b), "lorentz_inner_rows")
    signs = np.ones(a.data.shape[1])
    signs[0] = -1.0

    def bw(g):
        a.accumulate(g * (b.data * signs))
        b.accumulate(g * (a.data * signs))

    out._backward = bw

    def fw(tans):
        parts = []
        if tans[0] is not None:
            parts.append(lorentz_inner_rows(tans[0], b))
        if tans[1] is not None:
            parts.append(lorentz_inner_rows(a, tans[1]))
        return _sum_tangents(parts)

    out._jvp = fw
    return out


# ---------------------------------------------------------------------------
# classification heads
# ---------------------------------------------------------------------------


def softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("softmax: input must be 2-d")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = _node(p, (a,), "softmax")

    def bw(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        a.accumulate(p * (g - dot))

    out._backward = bw

    def fw(tans):
        inner = sum_axis1(mul(out, tans[0]))
        b, m = a.data.shape
        spread = matmul(inner, constant(np.ones((1, m))))
        return mul(out, sub(tans[0], spread))

    out._jvp = fw
    return out


def cross_entropy_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    labels = np.asarray(labels, dtype=np.intp)
    if logits.data.ndim != 2 or labels.shape != (logits.data.shape[0],):
        raise ShapeError(f"cross_entropy_logits: logits {logits.data.shape} vs labels {labels.shape}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    n = labels.shape[0]
    out = _node(np.asarray(-logp[np.arange(n), labels].mean()), (logits,), "cross_entropy")
    p = np.exp(logp)

    def bw(g):
        delta = p.copy()
        delta[np.arange(n), labels] -= 1.0
        logits.accumulate(float(g) * delta / n)

    out._backward = bw
    return out


# ---------------------------------------------------------------------------
# fused layer kernels
#
# Hot training paths (the autoregressive decoder, deep block stacks) spend
# their time on graph-node overhead rather than arithmetic, so the layer
# forward passes below are provided as single nodes with hand-derived
# reverse rules.  They have no forward-mode rule: code that needs jvp (the
# gradient penalty) uses the compositional layer path instead.  Tests pin
# the fused and compositional forms against each other and against finite
# differences.
# ---------------------------------------------------------------------------


def lorentz_linear_op(
    x: Tensor,
    weight: Tensor,
    v: Tensor,
    bias: Optional[Tensor],
    bias_scalar: Optional[Tensor],
    log_scale: Tensor,
    k: float,
    use_relu: bool = False,
    dropout_mask: Optional[np.ndarray] = None,
    degenerate_eps: float = 1e-12,
) -> Tensor:
    """Fused hyperbolic linear layer (see layers.LorentzLinear for the math)."""
    xd = x.data
    u = np.maximum(xd, 0.0) if use_relu else xd
    z = u @ weight.data.T
    if bias is not None:
        z = z + bias.data
    if dropout_mask is not None:
        z = z * dropout_mask
    s = xd @ v.data[:, None]
    if bias_scalar is not None:
        s = s + bias_scalar.data
    e = np.exp(-np.abs(s))
    sig = np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    lam = float(np.exp(log_scale.data))
    g = lam * sig
    r = np.linalg.norm(z, axis=1, keepdims=True)
    if float(r.min()) < degenerate_eps:
        raise FloatingPointError(f"degenerate direction: ||W tau(x) + b|| < {degenerate_eps}")
    c = g / np.maximum(r, SQRT_GRAD_GUARD)
    h = c * z
    time = np.sqrt(g * g - 1.0 / k)
    parents = [p for p in (x, weight, v, bias, bias_scalar, log_scale) if p is not None]
    out = _node(np.concatenate([time, h], axis=1), tuple(parents), "lorentz_linear")

    def bw(gout):
        dt = gout[:, :1]
        dh = gout[:, 1:]
        dz = c * dh
        dc = (dh * z).sum(axis=1, keepdims=True)
        rsafe = np.maximum(r, SQRT_GRAD_GUARD)
        dg = dc / rsafe + dt * (g / time)
        dr = -dc * g / (rsafe * rsafe)
        dz = dz + dr * z / rsafe
        dz0 = dz * dropout_mask if dropout_mask is not None else dz
        weight.accumulate(dz0.T @ u)
        if bias is not None:
            bias.accumulate(dz0.sum(axis=0))
        du = dz0 @ weight.data
        dx = du * (xd > 0.0) if use_relu else du
        dsig = dg * lam
        log_scale.accumulate(np.asarray((dg * g).sum()))
        ds = dsig * sig * (1.0 - sig)
        dx = dx + ds * v.data[None, :]
        v.accumulate(xd.T @ ds[:, 0])
        if bias_scalar is not None:
            bias_scalar.accumulate(ds.sum(axis=0))
        x.accumulate(dx)

    out._backward = bw
    return out


def lorentz_centroid_op(points: Tensor, weights: Optional[Tensor], k: float, guard: float = 1e-30) -> Tensor:
    """Fused weighted centroid of point rows: u / (sqrt(-K) | ||u||_L |)."""
    pd = points.data
    if weights is not None:
        u = weights.data @ pd
    else:
        u = pd.sum(axis=0, keepdims=True)
    signs = np.ones(pd.shape[1])
    signs[0] = -1.0
    ug = u * signs
    q = (u * ug).sum(axis=1, keepdims=True)  # <u,u>_L, negative for timelike
    neg_q = np.maximum(-q, guard)
    t = 1.0 / (np.sqrt(-k) * np.sqrt(neg_q))
    parents = (points, weights) if weights is not None else (points,)
    out = _node(t * u, parents, "lorentz_centroid")

    def bw(gout):
        s = (gout * u).sum(axis=1, keepdims=True)
        du = t * gout + s * (t / neg_q) * ug
        if weights is not None:
            weights.accumulate(du @ pd.T)
            points.accumulate(weights.data.T @ du)
        else:
            points.accumulate(np.broadcast_to(du, pd.shape))

    out._backward = bw
    return out


def direct_concat2_op(a: Tensor, b: Tensor, k: float) -> Tensor:
    """Fused two-part direct concatenation: copy spatials, rebuild time."""
    at, bt = a.data[:, :1], b.data[:, :1]
    time = np.sqrt(at * at + bt * bt + 1.0 / k)
    out = _node(np.concatenate([time, a.data[:, 1:], b.data[:, 1:]], axis=1), (a, b), "direct_concat2")
    na = a.data.shape[1] - 1

    def bw(gout):
        dt = gout[:, :1]
        da = np.concatenate([dt * at / time, gout[:, 1 : 1 + na]], axis=1)
        db = np.concatenate([dt * bt / time, gout[:, 1 + na :]], axis=1)
        a.accumulate(da)
        b.accumulate(db)

    out._backward = bw
    return out


def e2h_op(t: Tensor, k: float) -> Tensor:
    """Fused exp-at-origin lift of Euclidean rows."""
    td = t.data
    nrm = np.linalg.norm(td, axis=1, keepdims=True)
    phi = np.sqrt(-k) * nrm
    ch = np.cosh(phi)
    sc = _sinhc_val(phi)
    out = _node(np.concatenate([ch / np.sqrt(-k), sc * td], axis=1), (t,), "e2h")

    def bw(gout):
        d0 = gout[:, :1]
        dsp = gout[:, 1:]
        dsc = (dsp * td).sum(axis=1, keepdims=True)
        dphi = d0 * np.sinh(phi) / np.sqrt(-k) + dsc * _sinhc_deriv(phi)
        dnrm = dphi * np.sqrt(-k)
        t.accumulate(sc * dsp + dnrm * td / np.maximum(nrm, SQRT_GRAD_GUARD))

    out._backward = bw
    return out


def hcdist_op(x: Tensor, centroids: Tensor, k: float) -> Tensor:
    """Fused centroid-distance head: acosh(K <x, c_i>_L) / sqrt(-K)."""
    signs = np.ones(x.data.shape[1])
    signs[0] = -1.0
    xg = x.data * signs
    inner = xg @ centroids.data.T
    psi = k * inner
    out = _node(np.arccosh(np.maximum(psi, 1.0)) / np.sqrt(-k), (x, centroids), "hcdist")

    def bw(gout):
        safe = np.maximum(psi, 1.0 + ACOSH_GRAD_CLAMP)
        dpsi = gout / (np.sqrt(-k) * np.sqrt(safe * safe - 1.0))
        dinner = k * dpsi
        x.accumulate((dinner @ centroids.data) * signs)
        centroids.accumulate(dinner.T @ xg)

    out._backward = bw
    return out


# ---------------------------------------------------------------------------
# gradient utilities
# ---------------------------------------------------------------------------


def riemannian_grad(x: np.ndarray, euclid_grad: np.ndarray, k: float) -> np.ndarray:
    """Convert a Euclidean gradient at on-manifold x to the Riemannian one.

    Applies the inverse metric (negates the time entry) and projects onto
    the tangent space at x; the result satisfies <x, out>_L = 0.
    """
    h = np.array(euclid_grad, dtype=np.float64, copy=True)
    h[..., 0] = -h[..., 0]
    return project_tangent(np.asarray(x, dtype=np.float64), h, k)


def fd_check(
    f: Callable[[], Tensor],
    wrt: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between backward gradients and central differences.

    ``f`` rebuilds the scalar graph from the current values of the leaves in
    ``wrt``; every coordinate of every leaf is perturbed by +-h.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    for t in wrt:
        t.zero_grad()
    out = f()
    backward(out)
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in wrt]

    worst = 0.0
    for t, g in zip(wrt, grads):
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            f_plus = float(f().data)
            flat[i] = keep - h
            f_minus = float(f().data)
            flat[i] = keep
            fd = (f_plus - f_minus) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(1.0, abs(gflat[i]), abs(fd))
            worst = max(worst, err)
    return worst

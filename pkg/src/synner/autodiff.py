"""Reverse-mode automatic differentiation over dense float64 arrays.

Tensors wrap numpy arrays. Each differentiable op returns a new tensor that
remembers its parents and a backward closure; ``backward()`` on a scalar loss
walks the recorded graph once in reverse topological order and accumulates
gradients with ``+=``. Gradients are cleared explicitly between steps.

Only the ranks the model needs are supported (scalars, vectors, matrices);
there is no general broadcasting beyond what ``add``/``mul`` document.
"""

from __future__ import annotations

import contextlib
import zlib
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation, numeric oracles)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array, optionally tracked in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def backward(self, seed: float = 1.0) -> None:
        """Accumulate d(self)/d(leaf) into every tracked ancestor.

        ``self`` must be scalar. Calling twice without clearing grads doubles
        them; reset with ``zero_grad`` between steps.
        """
        if self.data.shape != ():
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        _accumulate(self, np.asarray(seed, dtype=np.float64))
        for node in reversed(_topo_order(self)):
            if node._backward is not None:
                node._backward()

    # Operator sugar used throughout the model code.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _topo_order(root: Tensor) -> list[Tensor]:
    # Iterative postorder; LSTM chains get deep enough to bother recursion.
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        # Copy: g may be a view into a consumer's gradient buffer.
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable[[], None]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data if isinstance(data, np.ndarray) and data.dtype == np.float64 \
        else np.asarray(data, dtype=np.float64)
    out.grad = None
    out._parents = ()
    out._backward = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; numpy-broadcastable shapes allowed (e.g. bias rows)."""
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc
    out = _make(data, (a, b), lambda: None)

    def backward() -> None:
        g = out.grad
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}") from exc
    out = _make(data, (a, b), lambda: None)

    def backward() -> None:
        g = out.grad
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product, broadcastable."""
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from exc
    out = _make(data, (a, b), lambda: None)

    def backward() -> None:
        g = out.grad
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = _make(a.data * c, (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, out.grad * c)

    out._backward = backward if out.requires_grad else None
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Products over ranks (2,2), (2,1), (1,2) and (1,1) (dot)."""
    ra, rb = a.ndim, b.ndim
    ka = a.shape[-1]
    kb = b.shape[0]
    if ka != kb:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data
    out = _make(data, (a, b), lambda: None)

    def backward() -> None:
        g = out.grad
        if ra == 2 and rb == 2:
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
        elif ra == 2 and rb == 1:
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)
        elif ra == 1 and rb == 2:
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))
        elif ra == 1 and rb == 1:
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)
        else:  # pragma: no cover - constructor guards ranks
            raise ShapeError(f"matmul: unsupported ranks {ra}, {rb}")

    out._backward = backward if out.requires_grad else None
    return out


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements -> scalar."""
    out = _make(np.asarray(a.data.sum()), (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, np.full(a.data.shape, float(out.grad)))

    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# shape surgery
# ---------------------------------------------------------------------------


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not xs:
        raise ShapeError("concat: empty input list")
    if len(xs) == 1:
        return xs[0]
    data = np.concatenate([x.data for x in xs], axis=axis)
    out = _make(data, tuple(xs), lambda: None)
    sizes = [x.data.shape[axis] for x in xs]
    offsets = np.cumsum([0] + sizes)

    def backward() -> None:
        g = out.grad
        for x, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            idx: list = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(x, g[tuple(idx)])

    out._backward = backward if out.requires_grad else None
    return out


def stack_rows(xs: Sequence[Tensor]) -> Tensor:
    """Stack 1-D vectors into a matrix, one per row."""
    data = np.stack([x.data for x in xs])
    out = _make(data, tuple(xs), lambda: None)

    def backward() -> None:
        g = out.grad
        for i, x in enumerate(xs):
            _accumulate(x, g[i])

    out._backward = backward if out.requires_grad else None
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _make(a.data.reshape(shape), (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, out.grad.reshape(a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def transpose(a: Tensor) -> Tensor:
    out = _make(a.data.T, (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, out.grad.T)

    out._backward = backward if out.requires_grad else None
    return out


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along axis 0."""
    if start < 0 or start + length > a.shape[0]:
        raise ShapeError(f"narrow: [{start}, {start + length}) out of bounds for {a.shape}")
    out = _make(a.data[start : start + length], (a,), lambda: None)

    def backward() -> None:
        g = np.zeros_like(a.data)
        g[start : start + length] = out.grad
        _accumulate(a, g)

    out._backward = backward if out.requires_grad else None
    return out


def row(a: Tensor, i: int) -> Tensor:
    """Row i of a matrix as a 1-D vector."""
    out = _make(a.data[i], (a,), lambda: None)

    def backward() -> None:
        g = np.zeros_like(a.data)
        g[i] = out.grad
        _accumulate(a, g)

    out._backward = backward if out.requires_grad else None
    return out


def gather_rows(a: Tensor, idx) -> Tensor:
    """Rows of a matrix by integer index array; realizes embedding lookup."""
    idx = np.asarray(idx, dtype=np.intp)
    out = _make(a.data[idx], (a,), lambda: None)

    def backward() -> None:
        g = np.zeros_like(a.data)
        np.add.at(g, idx, out.grad)
        _accumulate(a, g)

    out._backward = backward if out.requires_grad else None
    return out


def take_pairs(a: Tensor, rows, cols) -> Tensor:
    """out[k] = a[rows[k], cols[k]]. Used for CRF path-score gathers."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = _make(a.data[rows, cols], (a,), lambda: None)

    def backward() -> None:
        g = np.zeros_like(a.data)
        np.add.at(g, (rows, cols), out.grad)
        _accumulate(a, g)

    out._backward = backward if out.requires_grad else None
    return out


def gather_axis1(a: Tensor, idx: np.ndarray) -> Tensor:
    """out[i, j] = a[i, idx[i, j]] for a 2-D index matrix (relative positions)."""
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(idx.shape[0], dtype=np.intp)[:, None]
    out = _make(a.data[rows, idx], (a,), lambda: None)

    def backward() -> None:
        g = np.zeros_like(a.data)
        np.add.at(g, (rows, idx), out.grad)
        _accumulate(a, g)

    out._backward = backward if out.requires_grad else None
    return out


def segment_sum_rows(a: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of a [N, d] matrix into their segments: out[s] = sum of rows k
    with seg[k] == s. Used to batch ragged per-token memory reads."""
    seg = np.asarray(seg, dtype=np.intp)
    data = np.zeros((n_segments, a.shape[1]))
    np.add.at(data, seg, a.data)
    out = _make(data, (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, out.grad[seg])

    out._backward = backward if out.requires_grad else None
    return out


def segment_softmax(a: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a flat vector within each segment (max-subtracted).

    Each segment must be non-empty for the rows it covers.
    """
    seg = np.asarray(seg, dtype=np.intp)
    x = a.data
    mx = np.full(n_segments, -np.inf)
    np.maximum.at(mx, seg, x)
    e = np.exp(x - mx[seg])
    z = np.bincount(seg, weights=e, minlength=n_segments)
    y = e / z[seg]
    out = _make(y, (a,), lambda: None)

    def backward() -> None:
        g = out.grad
        dot = np.bincount(seg, weights=g * y, minlength=n_segments)
        _accumulate(a, y * (g - dot[seg]))

    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# nonlinearities and normalizers
# ---------------------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # Split by sign so exp never sees a large positive argument.
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                 np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))
    out = _make(y, (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, out.grad * y * (1.0 - y))

    out._backward = backward if out.requires_grad else None
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = _make(y, (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, out.grad * (1.0 - y * y))

    out._backward = backward if out.requires_grad else None
    return out


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    out = _make(y, (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, out.grad * (a.data > 0))

    out._backward = backward if out.requires_grad else None
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``; rows sum to 1 in float64."""
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, (a,), lambda: None)

    def backward() -> None:
        g = out.grad
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(a, y * (g - dot))

    out._backward = backward if out.requires_grad else None
    return out


def logsumexp(a: Tensor, axis: int | None = None) -> Tensor:
    """log(sum(exp(a))) along ``axis`` (None reduces everything to a scalar)."""
    x = a.data
    if axis is None:
        m = x.max()
        s = np.exp(x - m).sum()
        data = np.asarray(np.log(s) + m)
    else:
        m = x.max(axis=axis, keepdims=True)
        s = np.exp(x - m).sum(axis=axis, keepdims=True)
        data = np.squeeze(np.log(s) + m, axis=axis)
    out = _make(data, (a,), lambda: None)

    def backward() -> None:
        g = out.grad
        if axis is None:
            w = np.exp(x - x.max())
            _accumulate(a, float(g) * w / w.sum())
        else:
            mm = x.max(axis=axis, keepdims=True)
            w = np.exp(x - mm)
            w = w / w.sum(axis=axis, keepdims=True)
            _accumulate(a, np.expand_dims(g, axis) * w)

    out._backward = backward if out.requires_grad else None
    return out


def dropout(a: Tensor, rate: float, rng: np.random.Generator, train: bool = True) -> Tensor:
    """Inverted dropout: scale kept units by 1/(1-rate) at train time."""
    if not train or rate <= 0.0:
        return a
    if rate >= 1.0:
        raise ValueError(f"dropout rate must be < 1, got {rate}")
    keep = (rng.random(a.data.shape) >= rate).astype(np.float64) / (1.0 - rate)
    out = _make(a.data * keep, (a,), lambda: None)

    def backward() -> None:
        _accumulate(a, out.grad * keep)

    out._backward = backward if out.requires_grad else None
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalization for a 2-D input."""
    if x.ndim != 2:
        raise ShapeError(f"layer_norm expects a matrix, got shape {x.shape}")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _make(xhat * gain.data + bias.data, (x, gain, bias), lambda: None)

    def backward() -> None:
        g = out.grad
        _accumulate(gain, (g * xhat).sum(axis=0))
        _accumulate(bias, g.sum(axis=0))
        dxhat = g * gain.data
        d = x.data.shape[1]
        gx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=1, keepdims=True) / d)
        _accumulate(x, gx)

    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def rng_for(seed: int, name: str) -> np.random.Generator:
    """Child generator keyed by (run seed, parameter name).

    Per-name streams make initialization independent of registration order,
    so two configurations sharing a parameter name initialize it identically.
    """
    return np.random.default_rng([seed & 0x7FFFFFFF, zlib.crc32(name.encode("utf-8"))])


class ParamRegistry:
    """Named trainable tensors in deterministic (insertion) order."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        self._params[name] = tensor
        return tensor

    def matrix(self, name: str, shape: tuple[int, ...]) -> Tensor:
        """Uniform(+-sqrt(6/(fan_in+fan_out))) weight; vectors use fan_out 1."""
        fan_in = shape[0]
        fan_out = shape[1] if len(shape) > 1 else 1
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        data = rng_for(self.seed, name).uniform(-limit, limit, shape)
        return self.add(name, Tensor(data, requires_grad=True))

    def bias(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, Tensor(np.zeros(shape), requires_grad=True))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, Tensor(np.ones(shape), requires_grad=True))

    def table(self, name: str, shape: tuple[int, ...], std: float = 0.1) -> Tensor:
        """Normal(0, std) embedding table."""
        data = rng_for(self.seed, name).normal(0.0, std, shape)
        return self.add(name, Tensor(data, requires_grad=True))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def trainable(self) -> Iterable[tuple[str, Tensor]]:
        return ((n, t) for n, t in self._params.items() if t.requires_grad)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None


def finite_diff_check(f: Callable[[], Tensor], tensors: Sequence[Tensor],
                      h: float = 1e-5, max_coords: int = 16,
                      rng: np.random.Generator | None = None) -> float:
    """Max relative error between backward() gradients and central differences.

    ``f`` must be a deterministic closure over ``tensors`` returning a scalar
    tensor (freeze dropout masks before calling). Large tensors are checked at
    ``max_coords`` sampled coordinates.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for t in tensors:
        t.grad = None
    f().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    worst = 0.0
    for t, ana in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        if n <= max_coords:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            with no_grad():
                fp = f().item()
            flat[c] = orig - h
            with no_grad():
                fm = f().item()
            flat[c] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = float(ana.reshape(-1)[c])
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst

"""Small reverse-mode autodiff engine over numpy arrays.

Every op returns a new ``Tensor`` that remembers its parents and a closure
mapping the output gradient to parent gradients.  ``backward`` walks the tape
in reverse topological order.  Shapes are small (a few thousand rows at most),
so clarity wins over speed; there is no graph optimization.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

# NaN/Inf in any op output raises when set; cheap at desk scale.
CHECK_FINITE = True


class NumericalError(FloatingPointError):
    pass


class ShapeError(ValueError):
    pass


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, (np.ndarray, np.generic)) and data.dtype.kind == "f" and dtype is None:
        return np.asarray(data)  # numpy scalars from 0-d arithmetic keep their precision
    return np.asarray(data, dtype=dtype or np.float32)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.op = "leaf"

    # -- basics ----------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators -------------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self, grad=None) -> None:
        backward(self, grad)


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad, dtype)


def _wrap(x, like: Optional[np.ndarray] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or np.float32))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    if CHECK_FINITE and data.dtype.kind == "f" and not np.isfinite(data).all():
        raise NumericalError(f"non-finite value produced by {op}")
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)
    _check_broadcast(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _make(out, (a, b), bw, "div")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(x.data > 0, 1.0, alpha).astype(x.dtype)
    return _make(x.data * slope, (x,), lambda g: (g * slope,), "leaky_relu")


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    neg = alpha * np.expm1(np.minimum(x.data, 0))
    out = np.where(x.data > 0, x.data, neg).astype(x.dtype)
    slope = np.where(x.data > 0, 1.0, neg + alpha).astype(x.dtype)
    return _make(out, (x,), lambda g: (g * slope,), "elu")


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)
    return _make(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ---------------------------------------------------------------------------
# shape ops


def matmul(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = list(range(x.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} into {tuple(shape)}") from None
    return _make(out, (x,), lambda g: (g.reshape(old),), "reshape")


def broadcast_to(x: Tensor, shape) -> Tensor:
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {tuple(shape)}") from None
    return _make(out, (x,), lambda g: (_unbroadcast(g, x.shape),), "broadcast_to")


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [_wrap(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from None
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(xs), bw, "concat")


def index(x: Tensor, idx) -> Tensor:
    """Basic or advanced indexing; gradients scatter-add back."""

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(x.data[idx]), (x,), bw, "index")


def take_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """Gather rows of a 2-D tensor; index -1 yields a zero row (padding)."""
    rows = np.asarray(rows, dtype=np.int64)
    valid = rows >= 0
    safe = np.where(valid, rows, 0)
    out = x.data[safe] * valid.reshape(valid.shape + (1,) * (x.ndim - 1)).astype(x.dtype)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, safe[valid], g[valid])
        return (full,)

    return _make(out, (x,), bw, "take_rows")


def segment_mean(x: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Mean of rows per segment, summed in a canonical (value-sorted) order.

    Sorting rows before the sequential sum makes the result bit-identical
    under any permutation of rows within a segment.  Every segment must be
    non-empty.
    """
    segments = np.asarray(segments, dtype=np.int64)
    counts = np.bincount(segments, minlength=num_segments)
    if np.any(counts == 0):
        raise ValueError("segment_mean: empty segment")
    flat = x.data.reshape(len(x.data), -1)
    keys = [flat[:, c] for c in range(flat.shape[1] - 1, -1, -1)] + [segments]
    order = np.lexsort(keys)
    ordered = flat[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    sums = np.add.reduceat(ordered, starts, axis=0)
    out = (sums / counts[:, None].astype(x.dtype)).astype(x.dtype).reshape((num_segments,) + x.shape[1:])

    def bw(g):
        return ((g[segments] / counts[segments].reshape((-1,) + (1,) * (g.ndim - 1))).astype(x.dtype),)

    return _make(out, (x,), bw, "segment_mean")


def spmm(matrix: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times dense tensor."""
    if matrix.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: incompatible shapes {matrix.shape} and {x.shape}")
    mt = matrix.T.tocsr()
    return _make(np.asarray(matrix @ x.data, dtype=x.dtype), (x,),
                 lambda g: (np.asarray(mt @ g, dtype=x.dtype),), "spmm")


# ---------------------------------------------------------------------------
# reductions and normalizations


def sum_(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return _make(np.asarray(out, dtype=x.dtype), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis, keepdims), 1.0 / float(n))


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax; positions where ``mask`` is False get exactly zero weight."""
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("softmax: every position along the axis is masked")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = (e / e.sum(axis=axis, keepdims=True)).astype(x.dtype)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw, "softmax")


def segment_softmax(x: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a 1-D tensor within groups given by ``segments``."""
    segments = np.asarray(segments, dtype=np.int64)
    z = x.data
    mx = np.full(num_segments, -np.inf, dtype=z.dtype)
    np.maximum.at(mx, segments, z)
    e = np.exp(z - mx[segments])
    denom = np.zeros(num_segments, dtype=z.dtype)
    np.add.at(denom, segments, e)
    out = (e / denom[segments]).astype(x.dtype)

    def bw(g):
        dot = np.zeros(num_segments, dtype=z.dtype)
        np.add.at(dot, segments, g * out)
        return (out * (g - dot[segments]),)

    return _make(out, (x,), bw, "segment_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm: parameter shapes {gamma.shape}/{beta.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gx_hat = g * gamma.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return (gx.astype(x.dtype), (g * xhat).sum(axis=lead), g.sum(axis=lead))

    return _make(out.astype(x.dtype), (x, gamma, beta), bw, "layer_norm")


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    out = np.where(mask, np.asarray(value, dtype=x.dtype), x.data)
    return _make(out, (x,), lambda g: (np.where(mask, 0, g).astype(x.dtype),), "masked_fill")


def dropout(x: Tensor, p: float, train: bool, key: tuple[int, ...] = (0,)) -> Tensor:
    """Inverted dropout with a mask drawn from a generator keyed by ``key``.

    Use (seed, layer id, step) as the key so masks are reproducible regardless
    of call order or thread count.
    """
    if not train or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    rng = np.random.default_rng([int(k) for k in key])
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy computed from logits (numerically stable)."""
    z = logits.data
    y = np.asarray(targets, dtype=z.dtype).reshape(z.shape)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    p = _stable_sigmoid(z)
    return _make(np.asarray(loss.mean(), dtype=z.dtype), (logits,),
                 lambda g: ((g * (p - y) / n).astype(z.dtype),), "bce_with_logits")


# ---------------------------------------------------------------------------
# backward


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad=None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
    if grad is None:
        if loss.data.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    if not loss.requires_grad:
        return
    grads = {id(loss): np.asarray(grad, dtype=loss.dtype)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------------------
# optimizer


def adam_step(params: Sequence[np.ndarray], grads: Sequence[Optional[np.ndarray]], state: dict,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> dict:
    """One in-place Adam update with bias correction.

    ``state`` holds the step count ``t`` and the moment lists ``m``/``v``;
    pass an empty dict on the first call.
    """
    if not state:
        state.update(t=0, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return state


class Adam:
    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state: dict = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state,
                  self.lr, self.betas[0], self.betas[1], self.eps)


# ---------------------------------------------------------------------------
# checkpoints
#
# Layout (little-endian): magic b"FXCK", u32 version, u32 tensor count, then per
# tensor: u16 name length, utf-8 name, u8 ndim, u32 dims, float32 data.
# A JSON manifest with the model config sits next to the binary.

CHECKPOINT_MAGIC = b"FXCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], config: dict) -> None:
    path = Path(path)
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    path.write_bytes(b"".join(parts))
    manifest = {"format": "fragxsite-checkpoint", "version": CHECKPOINT_VERSION,
                "tensors": {n: list(np.shape(tensors[n])) for n in sorted(tensors)}, "config": config}
    checkpoint_manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def checkpoint_manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(shape).copy()
        off += 4 * size
    manifest_path = checkpoint_manifest_path(path)
    config = json.loads(manifest_path.read_text())["config"] if manifest_path.exists() else {}
    return tensors, config

"""Graph encoders (TAGCN, GAT, mean readout) and transformer blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .featurize import FEATURE_DIM, GraphSample


class Module:
    """Parameter container; children are discovered from instance attributes."""

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from _named(value, prefix + name)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            items = value if isinstance(value, (list, tuple)) else [value]
            for v in items:
                if isinstance(v, Module):
                    yield from v.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.asarray(state[name], dtype=p.dtype).copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _named(value, name: str):
    if isinstance(value, Tensor) and value.requires_grad:
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _named(v, f"{name}.{i}")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None, dtype=np.float32) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype), requires_grad=True)


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


# ---------------------------------------------------------------------------
# graph batching


def normalized_adjacency(n: int, edges: np.ndarray) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 for an undirected edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1], np.arange(n)])
    cols = np.concatenate([edges[:, 1], edges[:, 0], np.arange(n)])
    a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    a.data[:] = 1.0  # duplicate edges collapse to one
    deg = np.asarray(a.sum(axis=1)).ravel()
    d = sp.diags(1.0 / np.sqrt(deg))
    return (d @ a @ d).tocsr()


@dataclass
class GraphBatch:
    """Disjoint union of graphs, ready for the encoders."""

    features: np.ndarray
    edges: np.ndarray
    graph_index: np.ndarray
    num_graphs: int
    _adj: Optional[sp.csr_matrix] = field(default=None, repr=False)
    _gat: Optional[tuple] = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, graphs: Sequence[GraphSample]) -> "GraphBatch":
        if not graphs:
            raise ValueError("empty graph batch")
        feats, edges, index = [], [], []
        offset = 0
        for gi, g in enumerate(graphs):
            feats.append(g.features)
            edges.append(g.edges + offset)
            index.append(np.full(g.num_nodes, gi, dtype=np.int64))
            offset += g.num_nodes
        return cls(np.concatenate(feats), np.concatenate(edges).reshape(-1, 2),
                   np.concatenate(index), len(graphs))

    @classmethod
    def single(cls, features, edges) -> "GraphBatch":
        features = np.asarray(features)
        return cls(features, np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                   np.zeros(len(features), dtype=np.int64), 1)

    @property
    def num_nodes(self) -> int:
        return len(self.features)

    @property
    def norm_adj(self) -> sp.csr_matrix:
        if self._adj is None:
            self._adj = normalized_adjacency(self.num_nodes, self.edges)
        return self._adj

    @property
    def gat_structure(self):
        """(center, neighbor, scatter matrix) over directed edges plus self loops."""
        if self._gat is None:
            n = self.num_nodes
            e = np.unique(np.sort(self.edges, axis=1), axis=0) if len(self.edges) else self.edges
            e = e[e[:, 0] != e[:, 1]]
            center = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
            neighbor = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
            order = np.lexsort((neighbor, center))
            center, neighbor = center[order], neighbor[order]
            scatter = sp.csr_matrix((np.ones(len(center)), (center, np.arange(len(center)))),
                                    shape=(n, len(center)))
            self._gat = (center, neighbor, scatter)
        return self._gat


# ---------------------------------------------------------------------------
# graph layers


class TAGCNLayer(Module):
    """Topology-adaptive graph convolution: sum_k A^k X W_k + b."""

    def __init__(self, in_dim: int, out_dim: int, hops: int = 2, rng=None, dtype=np.float32):
        if hops < 1:
            raise ValueError("TAGCN needs at least one hop")
        rng = rng or np.random.default_rng(0)
        self.hops = hops
        self.weights = [glorot(rng, in_dim, out_dim, dtype=dtype) for _ in range(hops + 1)]
        self.bias = zeros((out_dim,), dtype)

    def __call__(self, x: Tensor, batch: GraphBatch) -> Tensor:
        h = x
        out = ad.matmul(h, self.weights[0])
        for k in range(1, self.hops + 1):
            h = ad.spmm(batch.norm_adj, h)
            out = ad.add(out, ad.matmul(h, self.weights[k]))
        return ad.add(out, self.bias)


class GATLayer(Module):
    """Single-head graph attention over each node's neighborhood plus itself."""

    def __init__(self, in_dim: int, out_dim: int, slope: float = 0.2, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.out_dim = out_dim
        self.slope = slope
        self.weight = glorot(rng, in_dim, out_dim, dtype=dtype)
        self.att = glorot(rng, 2 * out_dim, 1, shape=(2 * out_dim, 1), dtype=dtype)

    def __call__(self, x: Tensor, batch: GraphBatch, return_attention: bool = False):
        center, neighbor, scatter = batch.gat_structure
        h = ad.matmul(x, self.weight)
        s_center = ad.matmul(h, self.att[:self.out_dim])
        s_neighbor = ad.matmul(h, self.att[self.out_dim:])
        e = ad.add(ad.take_rows(s_center, center), ad.take_rows(s_neighbor, neighbor))
        e = ad.leaky_relu(ad.reshape(e, (-1,)), self.slope)
        alpha = ad.segment_softmax(e, center, batch.num_nodes)
        msg = ad.mul(ad.take_rows(h, neighbor), ad.reshape(alpha, (-1, 1)))
        out = ad.spmm(scatter, msg)
        if return_attention:
            return out, (center, neighbor, alpha.data)
        return out


def readout(x: Tensor, batch: GraphBatch) -> Tensor:
    """Mean over each graph's nodes (permutation-invariant bit for bit)."""
    return ad.segment_mean(x, batch.graph_index, batch.num_graphs)


class GraphEncoder(Module):
    """TAGCN -> ReLU -> TAGCN -> ReLU -> GAT -> ELU -> mean readout."""

    activations = ("relu", "relu", "elu")

    def __init__(self, in_dim: int = FEATURE_DIM, hidden: int = 64, out_dim: int = 64, hops: int = 2,
                 slope: float = 0.2, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.layers = [
            TAGCNLayer(in_dim, hidden, hops, rng, dtype),
            TAGCNLayer(hidden, hidden, hops, rng, dtype),
            GATLayer(hidden, out_dim, slope, rng, dtype),
        ]

    def node_embeddings(self, batch: GraphBatch) -> Tensor:
        dtype = self.layers[0].bias.dtype
        h = Tensor(batch.features.astype(dtype, copy=False))
        h = ad.relu(self.layers[0](h, batch))
        h = ad.relu(self.layers[1](h, batch))
        return ad.elu(self.layers[2](h, batch))

    def __call__(self, batch: GraphBatch) -> Tensor:
        return readout(self.node_embeddings(batch), batch)


# ---------------------------------------------------------------------------
# attention


def attention(q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None):
    """Scaled dot-product attention over the last two axes.

    ``mask`` marks valid keys (shape ``(..., n)``); masked keys get zero
    weight.  Returns the output and the weight array.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ad.ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} do not align")
    scores = ad.mul(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(q.shape[-1]))
    key_mask = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ValueError("attention: every key is masked")
        key_mask = np.expand_dims(mask, -2)
    weights = ad.softmax(scores, axis=-1, mask=key_mask)
    return ad.matmul(weights, v), weights


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int, rng=None, dtype=np.float32):
        if dim % heads:
            raise ValueError(f"model dim {dim} not divisible by {heads} heads")
        rng = rng or np.random.default_rng(0)
        self.heads = heads
        self.dim = dim
        self.wq = glorot(rng, dim, dim, dtype=dtype)
        self.wk = glorot(rng, dim, dim, dtype=dtype)
        self.wv = glorot(rng, dim, dim, dtype=dtype)
        self.wo = glorot(rng, dim, dim, dtype=dtype)
        self.bq = zeros((dim,), dtype)
        self.bk = zeros((dim,), dtype)
        self.bv = zeros((dim,), dtype)
        self.bo = zeros((dim,), dtype)

    def _split(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return ad.transpose(ad.reshape(x, (b, n, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def __call__(self, xq: Tensor, xkv: Tensor, mask: Optional[np.ndarray] = None):
        b, m, _ = xq.shape
        q = self._split(ad.linear(xq, self.wq, self.bq))
        k = self._split(ad.linear(xkv, self.wk, self.bk))
        v = self._split(ad.linear(xkv, self.wv, self.bv))
        head_mask = None if mask is None else np.asarray(mask, dtype=bool)[:, None, :]
        out, weights = attention(q, k, v, head_mask)
        out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (b, m, self.dim))
        return ad.linear(out, self.wo, self.bo), weights.data.mean(axis=1)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32):
        self.gamma = ones((dim,), dtype)
        self.beta = zeros((dim,), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta)


class TransformerBlock(Module):
    """Pre-norm block: x + MHA(LN(x), LN(kv)), then y + FFN(LN(y))."""

    def __init__(self, dim: int, heads: int, dropout: float = 0.0, layer_id: int = 0,
                 rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.layer_id = layer_id
        self.dropout = dropout
        self.seed = 0
        self.step = 0
        self.norm_q = LayerNorm(dim, dtype)
        self.norm_kv = LayerNorm(dim, dtype)
        self.norm_ff = LayerNorm(dim, dtype)
        self.attn = MultiHeadAttention(dim, heads, rng, dtype)
        self.ff1 = glorot(rng, dim, 4 * dim, dtype=dtype)
        self.fb1 = zeros((4 * dim,), dtype)
        self.ff2 = glorot(rng, 4 * dim, dim, dtype=dtype)
        self.fb2 = zeros((dim,), dtype)

    def _drop(self, x: Tensor, site: int) -> Tensor:
        return ad.dropout(x, self.dropout, self.training, (self.seed, self.layer_id, site, self.step))

    def __call__(self, x: Tensor, kv: Optional[Tensor] = None, mask: Optional[np.ndarray] = None):
        q = self.norm_q(x)
        src = q if kv is None else self.norm_kv(kv)
        a, weights = self.attn(q, src, mask)
        y = ad.add(x, self._drop(a, 0))
        h = ad.relu(ad.linear(self.norm_ff(y), self.ff1, self.fb1))
        out = ad.add(y, self._drop(ad.linear(h, self.ff2, self.fb2), 1))
        return out, weights

"""Latent cross-attention classifier over pocket and fragment graphs.

A small learnable latent array first attends to pocket embeddings, then to
itself, then to fragment embeddings; the mean latent feeds a logistic head.
The attention weights of the two cross-attention stages are kept for
interpretability.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import NumericalError, Tensor
from .featurize import FEATURE_DIM, GraphSample
from .layers import GraphBatch, GraphEncoder, Module, TransformerBlock, glorot, zeros
from .metrics import MetricError, Metrics, compute_metrics


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int = FEATURE_DIM
    hidden: int = 64
    dim: int = 64
    heads: int = 4
    hops: int = 2
    gat_slope: float = 0.2
    latents: int = 8
    depth: int = 1  # transformer blocks per stage
    max_fragments: int = 32
    max_pockets: int = 16
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if min(self.latents, self.depth, self.max_fragments, self.max_pockets, self.hops) < 1:
            raise ValueError("latents, depth, hops and the caps must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 200
    patience: int = 10
    seed: int = 0
    val_fraction: float = 0.1
    test_fraction: float = 0.1


@dataclass
class InteractionSample:
    fragment_graphs: list[GraphSample]
    pocket_graphs: list[GraphSample]
    label: int
    drug_id: str = ""
    protein_id: str = ""
    pocket_boxes: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.fragment_graphs or not self.pocket_graphs:
            raise ValueError(f"sample {self.drug_id}/{self.protein_id} needs >= 1 fragment and >= 1 pocket")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


@dataclass
class AttentionMap:
    pocket_stage: np.ndarray  # L x P
    fragment_stage: np.ndarray  # L x F

    @staticmethod
    def _scores(stage: np.ndarray) -> np.ndarray:
        col = stage.astype(np.float64).mean(axis=0)
        return col / col.sum()

    @property
    def pocket_scores(self) -> np.ndarray:
        return self._scores(self.pocket_stage)

    @property
    def fragment_scores(self) -> np.ndarray:
        return self._scores(self.fragment_stage)


class FragXsiteDTI(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.pocket_encoder = GraphEncoder(cfg.in_dim, cfg.hidden, cfg.dim, cfg.hops, cfg.gat_slope, rng)
        self.fragment_encoder = GraphEncoder(cfg.in_dim, cfg.hidden, cfg.dim, cfg.hops, cfg.gat_slope, rng)
        self.latent = Tensor(rng.normal(0.0, 0.02, size=(cfg.latents, cfg.dim)).astype(np.float32),
                             requires_grad=True)
        ids = iter(range(3 * cfg.depth))
        self.stage1 = [TransformerBlock(cfg.dim, cfg.heads, cfg.dropout, next(ids), rng) for _ in range(cfg.depth)]
        self.stage2 = [TransformerBlock(cfg.dim, cfg.heads, cfg.dropout, next(ids), rng) for _ in range(cfg.depth)]
        self.stage3 = [TransformerBlock(cfg.dim, cfg.heads, cfg.dropout, next(ids), rng) for _ in range(cfg.depth)]
        self.head_w = glorot(rng, cfg.dim, 1)
        self.head_b = zeros((1,))
        for blk in self.blocks:
            blk.seed = cfg.seed

    @property
    def blocks(self) -> list[TransformerBlock]:
        return self.stage1 + self.stage2 + self.stage3

    @property
    def dtype(self):
        return self.latent.dtype

    def set_step(self, step: int) -> None:
        for blk in self.blocks:
            blk.step = step

    # -- forward -----------------------------------------------------------
    def _encode(self, encoder: GraphEncoder, groups: Sequence[Sequence[GraphSample]], cap: int):
        """Encode every graph once and scatter into a padded (B, cap, d) tensor."""
        unique: dict[int, int] = {}
        graphs: list[GraphSample] = []
        rows = np.full((len(groups), cap), -1, dtype=np.int64)
        for b, group in enumerate(groups):
            if len(group) > cap:
                raise ValueError(f"{len(group)} graphs exceed the cap of {cap}")
            for j, g in enumerate(group):
                key = id(g)  # shared graphs (same protein) are encoded once
                if key not in unique:
                    unique[key] = len(graphs)
                    graphs.append(g)
                rows[b, j] = unique[key]
        emb = encoder(GraphBatch.from_samples(graphs))
        padded = ad.take_rows(emb, rows.ravel())
        return ad.reshape(padded, (len(groups), cap, self.cfg.dim)), rows >= 0

    def forward_logits(self, samples: Sequence[InteractionSample]):
        """Return logits (B,) and per-sample attention maps."""
        cfg = self.cfg
        pockets, pmask = self._encode(self.pocket_encoder, [s.pocket_graphs for s in samples], cfg.max_pockets)
        frags, fmask = self._encode(self.fragment_encoder, [s.fragment_graphs for s in samples], cfg.max_fragments)
        z = ad.broadcast_to(self.latent, (len(samples), cfg.latents, cfg.dim))
        for blk in self.stage1:
            z, w_pocket = blk(z, pockets, pmask)
        for blk in self.stage2:
            z, _ = blk(z)
        for blk in self.stage3:
            z, w_frag = blk(z, frags, fmask)
        pooled = ad.mean(z, axis=1)
        logits = ad.reshape(ad.linear(pooled, self.head_w, self.head_b), (len(samples),))
        maps = [AttentionMap(w_pocket[b][:, :len(s.pocket_graphs)].copy(),
                             w_frag[b][:, :len(s.fragment_graphs)].copy())
                for b, s in enumerate(samples)]
        return logits, maps

    def forward_batch(self, samples: Sequence[InteractionSample]):
        logits, maps = self.forward_logits(samples)
        return ad.sigmoid(logits).data.astype(np.float64), maps

    def forward(self, sample: InteractionSample):
        probs, maps = self.forward_batch([sample])
        return float(probs[0]), maps[0]

    __call__ = forward


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: FragXsiteDTI, path, extra: Optional[dict] = None) -> None:
    config = {"model": asdict(model.cfg), **(extra or {})}
    ad.save_checkpoint(path, model.state_dict(), config)


def load_model(path) -> FragXsiteDTI:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    tensors, config = ad.load_checkpoint(path)
    model = FragXsiteDTI(ModelConfig(**config["model"]))
    model.load_state_dict(tensors)
    return model.eval()


# ---------------------------------------------------------------------------
# training and evaluation


def split_indices(n: int, seed: int, val_fraction: float = 0.1, test_fraction: float = 0.1):
    """Seeded shuffle into (train, val, test); rounding remainder goes to train."""
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(np.floor(n * val_fraction))
    n_test = int(np.floor(n * test_fraction))
    n_train = n - n_val - n_test
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def predict(model: FragXsiteDTI, samples: Sequence[InteractionSample], batch_size: int = 32) -> np.ndarray:
    model.eval()
    out = []
    for i in range(0, len(samples), batch_size):
        probs, _ = model.forward_batch(samples[i:i + batch_size])
        out.append(probs)
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(model: FragXsiteDTI, samples: Sequence[InteractionSample], threshold: float = 0.5) -> Metrics:
    if not samples:
        raise MetricError("cannot evaluate an empty split")
    labels = np.array([s.label for s in samples])
    return compute_metrics(labels, predict(model, samples), threshold)


def evaluate_checkpoint(path, samples: Sequence[InteractionSample]) -> Metrics:
    return evaluate(load_model(path), samples)


def _bce(probs: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(probs, 1e-12, 1 - 1e-12)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p)))


@dataclass
class TrainResult:
    model: FragXsiteDTI
    history: list[dict]
    best_epoch: int
    split: tuple[np.ndarray, np.ndarray, np.ndarray]


def train(samples: Sequence[InteractionSample], model_cfg: ModelConfig = ModelConfig(),
          cfg: TrainConfig = TrainConfig(), out_dir=None, log_fn=None) -> TrainResult:
    """Fit with BCE + Adam; early stopping on validation AUC.

    If the validation split holds a single class, validation loss is the
    stopping criterion instead.  The best-validation weights are restored
    before returning and, when ``out_dir`` is given, written with the history.
    """
    labels = np.array([s.label for s in samples])
    if len(samples) == 0 or labels.min() == labels.max():
        raise ValueError("training data must contain both classes")
    tr, va, te = split_indices(len(samples), cfg.seed, cfg.val_fraction, cfg.test_fraction)
    model = FragXsiteDTI(model_cfg)
    opt = ad.Adam(model.parameters(), lr=cfg.lr)
    val = [samples[i] for i in va] or [samples[i] for i in tr]
    val_labels = np.array([s.label for s in val])
    use_auc = val_labels.min() != val_labels.max()

    history, best, best_key, best_epoch, stale, step = [], -np.inf, (-np.inf, -np.inf), 0, 0, 0
    best_state = model.state_dict()
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        model.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(tr)
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            batch = [samples[j] for j in order[i:i + cfg.batch_size]]
            model.set_step(step)
            opt.zero_grad()
            logits, _ = model.forward_logits(batch)
            loss = ad.bce_with_logits(logits, np.array([s.label for s in batch]))
            if not np.isfinite(loss.data):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            ad.backward(loss)
            opt.step()
            losses.append(float(loss.data) * len(batch))
            step += 1
        probs = predict(model, val)
        val_loss = _bce(probs, val_labels)
        row = {"epoch": epoch, "train_loss": sum(losses) / len(order), "val_loss": val_loss}
        if use_auc:
            m = compute_metrics(val_labels, probs)
            row.update(val_auc=m.auc, val_precision=m.precision, val_recall=m.recall, val_f1=m.f1)
            score = m.auc
        else:
            score = -val_loss
        key = (score, -val_loss)
        row["seconds"] = time.perf_counter() - t0
        history.append(row)
        if log_fn:
            log_fn(row)
        # patience follows the criterion alone; val loss breaks ties for the kept weights
        stale = 0 if score > best else stale + 1
        best = max(best, score)
        if key > best_key:
            best_key, best_epoch = key, epoch
            best_state = model.state_dict()
        if stale >= cfg.patience:
            break
    model.load_state_dict(best_state)
    model.eval()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model(model, out / "model.ckpt", {"train": asdict(cfg), "best_epoch": best_epoch})
        (out / "history.json").write_text(json.dumps(history, indent=2))
    return TrainResult(model, history, best_epoch, (tr, va, te))


# ---------------------------------------------------------------------------
# interpretability


def _rank(scores: np.ndarray, top_k: int) -> list[int]:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:max(0, top_k)]


def explain(model: FragXsiteDTI, sample: InteractionSample, top_k: int = 6) -> dict:
    """Rank pockets and fragments by their normalized attention scores."""
    model.eval()
    prob, amap = model.forward(sample)
    ps, fs = amap.pocket_scores, amap.fragment_scores
    pockets = []
    for rank, i in enumerate(_rank(ps, top_k), start=1):
        entry = {"index": i, "score": float(ps[i]), "rank": rank}
        if i < len(sample.pocket_boxes):
            entry["box"] = sample.pocket_boxes[i]
        pockets.append(entry)
    fragments = [{"index": i, "atom_indices": [int(a) for a in sample.fragment_graphs[i].atom_indices],
                  "score": float(fs[i]), "rank": rank}
                 for rank, i in enumerate(_rank(fs, top_k), start=1)]
    return {"drug_id": sample.drug_id, "protein_id": sample.protein_id, "probability": prob,
            "pockets": pockets, "fragments": fragments, "attention": amap}

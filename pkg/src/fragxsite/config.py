"""Run configuration: one flat record of every tunable, loaded from JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .model import ModelConfig, TrainConfig
from .pocket import PocketConfig

# fields that change the preprocessed cache; hashed into its manifest
PREPROCESS_FIELDS = ("grid", "pad", "occl", "scan_range", "min_buried", "min_cluster", "margin",
                     "max_pockets", "max_blocks", "max_fragments", "edge_threshold")


@dataclass(frozen=True)
class RunConfig:
    # pocket detection
    grid: float = 1.0
    pad: float = 4.0
    occl: float = 2.5
    scan_range: float = 8.0
    min_buried: int = 5
    min_cluster: int = 30
    margin: float = 2.0
    max_pockets: int = 16
    # fragments and graphs
    max_blocks: int = 4
    max_fragments: int = 32
    edge_threshold: float = 5.0
    # model
    hidden: int = 64
    dim: int = 64
    heads: int = 4
    hops: int = 2
    gat_slope: float = 0.2
    latents: int = 8
    depth: int = 1
    dropout: float = 0.1
    # training
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 200
    patience: int = 10
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0
    # preprocessing: fail when more than this share of rows is dropped
    drop_threshold: float = 0.1

    def __post_init__(self):
        if self.max_blocks < 1 or self.max_fragments < 1:
            raise ValueError("max_blocks and max_fragments must be >= 1")
        if self.edge_threshold <= 0:
            raise ValueError("edge_threshold must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, epochs and patience must be >= 1")
        if not 0.0 <= self.drop_threshold <= 1.0:
            raise ValueError("drop_threshold must be in [0, 1]")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val_fraction + test_fraction must be below 1")
        # surface sub-config errors at load time
        self.pocket_config()
        self.model_config()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})

    def pocket_config(self) -> PocketConfig:
        return PocketConfig(grid=self.grid, pad=self.pad, occl=self.occl, range=self.scan_range,
                            min_buried=self.min_buried, min_cluster=self.min_cluster,
                            margin=self.margin, max_pockets=self.max_pockets)

    def model_config(self) -> ModelConfig:
        return ModelConfig(hidden=self.hidden, dim=self.dim, heads=self.heads, hops=self.hops,
                           gat_slope=self.gat_slope, latents=self.latents, depth=self.depth,
                           max_fragments=self.max_fragments, max_pockets=self.max_pockets,
                           dropout=self.dropout, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
                           patience=self.patience, seed=self.seed,
                           val_fraction=self.val_fraction, test_fraction=self.test_fraction)

    def preprocess_dict(self) -> dict:
        return {k: getattr(self, k) for k in PREPROCESS_FIELDS}

    def preprocess_hash(self) -> str:
        blob = json.dumps(self.preprocess_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

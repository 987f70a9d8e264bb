"""Grid-scan binding pocket detection (LIGSITE-style buriedness).

Empty grid points that are enclosed by protein along most scan directions are
clustered; each large cluster becomes an axis-aligned box.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .chemio import PDBAtom, ProteinStructure


@dataclass(frozen=True)
class PocketConfig:
    grid: float = 1.0
    pad: float = 4.0
    occl: float = 2.5
    range: float = 8.0
    min_buried: int = 5
    min_cluster: int = 30
    margin: float = 2.0
    max_pockets: int = 16

    def __post_init__(self):
        if self.grid <= 0 or self.range <= 0 or self.occl < 0:
            raise ValueError("grid, range must be positive and occl non-negative")
        if not 1 <= self.min_buried <= 7:
            raise ValueError("min_buried must be in 1..7")
        if self.max_pockets < 1 or self.min_cluster < 1:
            raise ValueError("max_pockets and min_cluster must be >= 1")


@dataclass(frozen=True)
class PocketBox:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    atom_indices: tuple[int, ...]
    score: float
    size: int = 0  # number of grid points in the cluster (0 for the fallback box)

    def contains(self, xyz) -> np.ndarray:
        xyz = np.atleast_2d(np.asarray(xyz, dtype=np.float64))
        lo = np.asarray(self.min_corner)
        hi = np.asarray(self.max_corner)
        return np.all((xyz >= lo) & (xyz <= hi), axis=1)

    @property
    def centroid(self) -> np.ndarray:
        return (np.asarray(self.min_corner) + np.asarray(self.max_corner)) / 2.0

    def to_json(self, index: int | None = None) -> dict:
        out = {
            "min_corner": list(self.min_corner),
            "max_corner": list(self.max_corner),
            "score": self.score,
            "atom_count": len(self.atom_indices),
        }
        if index is not None:
            out = {"index": index, **out}
        return out


_AXES = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])
_DIAGONALS = np.array([[1, 1, 1], [-1, 1, 1], [1, -1, 1], [1, 1, -1]])


def _shift_or(occ: np.ndarray, step: np.ndarray, n_steps: int) -> np.ndarray:
    """True where walking ``1..n_steps`` grid steps along ``step`` hits occ."""
    hit = np.zeros_like(occ)
    shape = occ.shape
    for s in range(1, n_steps + 1):
        d = step * s
        src = tuple(slice(max(0, di), shape[a] + min(0, di)) for a, di in enumerate(d))
        dst = tuple(slice(max(0, -di), shape[a] + min(0, -di)) for a, di in enumerate(d))
        if any(sl.start >= sl.stop for sl in src):
            break
        hit[dst] |= occ[src]
    return hit


def _grid(coords: np.ndarray, cfg: PocketConfig):
    # grid centered on the padded bounding box: symmetric under axis flips
    lo = coords.min(axis=0) - cfg.pad
    hi = coords.max(axis=0) + cfg.pad
    center = (lo + hi) / 2.0
    counts = np.ceil((hi - lo) / cfg.grid).astype(int) + 1
    offsets = [(np.arange(n) - (n - 1) / 2.0) * cfg.grid for n in counts]
    axes = [center[a] + offsets[a] for a in range(3)]
    return axes, tuple(int(n) for n in counts)


def buriedness_grid(p: ProteinStructure, cfg: PocketConfig = PocketConfig()):
    """Return (grid axes, occupied mask, buriedness counts 0..7)."""
    coords = p.coords
    axes, shape = _grid(coords, cfg)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    tree = cKDTree(coords)
    dist, _ = tree.query(points, k=1, distance_upper_bound=cfg.occl + 1e-9)
    occ = (dist <= cfg.occl).reshape(shape)

    n_axis = int(np.floor(cfg.range / cfg.grid + 1e-9))
    n_diag = int(np.floor(cfg.range / (cfg.grid * np.sqrt(3.0)) + 1e-9))
    buried = np.zeros(shape, dtype=np.int8)
    for step in _AXES:
        buried += _shift_or(occ, step, n_axis)
    # the four body diagonals count as one scan axis: blocked when any
    # diagonal line is blocked on both sides
    diag = np.zeros(shape, dtype=bool)
    for step in _DIAGONALS:
        diag |= _shift_or(occ, step, n_diag) & _shift_or(occ, -step, n_diag)
    buried += diag
    buried[occ] = 0
    return axes, occ, buried


def pocket_atoms(p: ProteinStructure, box: PocketBox) -> list[PDBAtom]:
    """Protein atoms inside the closed box, in input order."""
    mask = box.contains(p.coords)
    return [p.atoms[i] for i in np.flatnonzero(mask)]


def _box(p: ProteinStructure, lo, hi, score: float, size: int) -> PocketBox:
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    tmp = PocketBox(lo, hi, (), score, size)
    idx = tuple(int(i) for i in np.flatnonzero(tmp.contains(p.coords)))
    return PocketBox(lo, hi, idx, score, size)


def find_pockets(p: ProteinStructure, cfg: PocketConfig = PocketConfig()) -> list[PocketBox]:
    """Detect up to ``cfg.max_pockets`` pockets, largest cluster first.

    When no cluster passes the thresholds a single box around the whole
    protein (expanded by the margin) is returned with score 0.
    """
    axes, occ, buried = buriedness_grid(p, cfg)
    candidate = (~occ) & (buried >= cfg.min_buried)
    labels, n = ndimage.label(candidate, structure=np.ones((3, 3, 3), dtype=bool))
    pockets = []
    if n:
        sizes = np.bincount(labels.ravel(), minlength=n + 1)
        for lab in range(1, n + 1):
            if sizes[lab] < cfg.min_cluster:
                continue
            ii = np.nonzero(labels == lab)
            pts = np.stack([axes[a][ii[a]] for a in range(3)], axis=1)
            lo = pts.min(axis=0) - cfg.margin
            hi = pts.max(axis=0) + cfg.margin
            score = float(buried[ii].mean()) / 7.0
            pockets.append(_box(p, lo, hi, score, int(sizes[lab])))
    if not pockets:
        lo = p.coords.min(axis=0) - cfg.margin
        hi = p.coords.max(axis=0) + cfg.margin
        return [_box(p, lo, hi, 0.0, 0)]
    pockets.sort(key=lambda b: (-b.size, b.min_corner))
    return pockets[:cfg.max_pockets]


def pockets_to_json(pockets: list[PocketBox], cfg: PocketConfig) -> str:
    return json.dumps({"config": asdict(cfg),
                       "pockets": [b.to_json(i) for i, b in enumerate(pockets)]}, indent=2)

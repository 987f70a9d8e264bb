"""Atom featurization (74 slots) and graph construction for fragments/pockets.

Slot layout::

    0-43   element one-hot (43 = unknown)
    44-54  heavy-atom degree 0..10
    55-61  implicit valence 0..6
    62     formal charge
    63     radical electrons
    64-68  hybridization SP, SP2, SP3, SP3D, SP3D2
    69     aromatic
    70-73  attached hydrogens 0..3
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .chemio import (DOUBLE, ELEMENTS, TRIPLE, MolGraph, PDBAtom, implicit_hydrogens,
                     radical_electrons, total_hydrogens, valence_hydrogens)
from .fragmenter import Fragment

FEATURE_DIM = 74
HYBRIDIZATIONS = ("SP", "SP2", "SP3", "SP3D", "SP3D2")
DEFAULT_POCKET_THRESHOLD = 5.0

_ELEMENT_INDEX = {e: i for i, e in enumerate(ELEMENTS)}
UNKNOWN_ELEMENT = len(ELEMENTS)

# (name, offset, width) of the one-hot blocks
BLOCKS = (
    ("element", 0, 44),
    ("degree", 44, 11),
    ("valence", 55, 7),
    ("hybridization", 64, 5),
    ("hydrogens", 70, 4),
)
CHARGE_SLOT = 62
RADICAL_SLOT = 63
AROMATIC_SLOT = 69


@dataclass
class GraphSample:
    features: np.ndarray  # (n, 74) float32
    edges: np.ndarray  # (m, 2) int64, undirected, i < j, no self loops
    atom_indices: np.ndarray = field(default=None)  # parent index per node, if any

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        n = self.features.shape[0]
        if n < 1 or self.features.shape[1] != FEATURE_DIM:
            raise ValueError(f"features must be (n>=1, {FEATURE_DIM}), got {self.features.shape}")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= n):
            raise ValueError("edge index out of range")
        if len(self.edges) and np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self loops are not stored")
        if self.atom_indices is None:
            self.atom_indices = np.arange(n, dtype=np.int64)
        else:
            self.atom_indices = np.asarray(self.atom_indices, dtype=np.int64)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def _one_hot(vec: np.ndarray, offset: int, width: int, value: int) -> None:
    vec[offset + min(max(value, 0), width - 1)] = 1.0


def hybridization(g: MolGraph, i: int) -> str:
    """Hybridization guessed from bond orders and steric count."""
    atom = g.atoms[i]
    steric = len(g.adjacency[i]) + implicit_hydrogens(g, i)
    if steric >= 6:
        return "SP3D2"
    if steric == 5:
        return "SP3D"
    if atom.aromatic:
        return "SP2"
    orders = [g.bonds[k].order for _, k in g.adjacency[i]]
    doubles = orders.count(DOUBLE)
    if TRIPLE in orders or doubles >= 2:
        return "SP"
    if doubles == 1:
        return "SP2"
    return "SP3"


def featurize_atom(g: MolGraph, i: int) -> np.ndarray:
    """74-wide feature vector for atom ``i`` of a molecule."""
    atom = g.atoms[i]
    vec = np.zeros(FEATURE_DIM, dtype=np.float32)
    vec[_ELEMENT_INDEX.get(atom.element, UNKNOWN_ELEMENT)] = 1.0
    _one_hot(vec, 44, 11, g.heavy_degree(i))
    _one_hot(vec, 55, 7, valence_hydrogens(g, i))
    vec[CHARGE_SLOT] = atom.formal_charge
    vec[RADICAL_SLOT] = radical_electrons(g, i)
    vec[64 + HYBRIDIZATIONS.index(hybridization(g, i))] = 1.0
    vec[AROMATIC_SLOT] = float(atom.aromatic)
    _one_hot(vec, 70, 4, total_hydrogens(g, i))
    return vec


def featurize_pocket_atom(element: str, degree: int) -> np.ndarray:
    """Pocket atoms have no bond graph: spatial neighbor count stands in for degree."""
    vec = np.zeros(FEATURE_DIM, dtype=np.float32)
    vec[_ELEMENT_INDEX.get(element, UNKNOWN_ELEMENT)] = 1.0
    _one_hot(vec, 44, 11, degree)
    _one_hot(vec, 55, 7, degree)
    vec[64 + HYBRIDIZATIONS.index("SP3")] = 1.0
    _one_hot(vec, 70, 4, 0)
    return vec


def molecule_features(g: MolGraph) -> np.ndarray:
    return np.stack([featurize_atom(g, i) for i in range(len(g.atoms))])


def fragment_graph(g: MolGraph, f: Fragment, parent_features: np.ndarray | None = None) -> GraphSample:
    """Induced subgraph of a fragment, featurized in the parent molecule's context."""
    nodes = np.array(sorted(f.atom_indices), dtype=np.int64)
    if len(nodes) == 0:
        raise ValueError("empty fragment")
    if parent_features is None:
        parent_features = molecule_features(g)
    local = {int(a): k for k, a in enumerate(nodes)}
    edges = []
    for b in f.bonds:
        bond = g.bonds[b]
        x, y = local[bond.a], local[bond.b]
        edges.append((min(x, y), max(x, y)))
    edges.sort()
    return GraphSample(parent_features[nodes], np.array(edges, dtype=np.int64).reshape(-1, 2), nodes)


def spatial_edges(coords: np.ndarray, threshold: float) -> np.ndarray:
    """Sorted (i, j), i < j, with Euclidean distance strictly below threshold."""
    coords = np.asarray(coords, dtype=np.float64)
    if len(coords) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = cKDTree(coords).query_pairs(threshold, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    d = np.linalg.norm(coords[pairs[:, 0]] - coords[pairs[:, 1]], axis=1)
    pairs = np.sort(pairs[d < threshold], axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order].astype(np.int64)


def pocket_graph(atoms: Sequence[PDBAtom], threshold: float = DEFAULT_POCKET_THRESHOLD,
                 atom_indices: Sequence[int] | None = None) -> GraphSample:
    """Distance graph over pocket atoms (edges for pairs closer than threshold)."""
    if len(atoms) == 0:
        raise ValueError("pocket graph needs at least one atom")
    coords = np.array([a.coords for a in atoms], dtype=np.float64)
    edges = spatial_edges(coords, threshold)
    degree = np.zeros(len(atoms), dtype=np.int64)
    np.add.at(degree, edges.ravel(), 1)
    feats = np.stack([featurize_pocket_atom(a.element, int(d)) for a, d in zip(atoms, degree)])
    return GraphSample(feats, edges, atom_indices)

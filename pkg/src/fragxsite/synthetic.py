"""Planted-motif DTI data: drug-like SMILES plus hollow-shell proteins.

A pair is positive exactly when the drug carries a nitro group.  Every drug,
positive or negative, also carries decoy end groups, so the label cannot be
read off composition alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chemio import PDBAtom, ProteinStructure, format_pdb_atom

MOTIF_PREFIX = "[O-][N+](=O)"
MOTIF_SUFFIX = "[N+](=O)[O-]"
MOTIF_ELEMENTS = ("N", "O", "O")

# rings written so the next token attaches to a later ring atom
RINGS = ("c1ccc(cc1)", "c1ccc(nc1)", "C1CCC(CC1)", "C1CCN(CC1)", "c1ccc(s1)", "C1CCC(O1)", "c1cnc(nc1)")
LINKERS = ("", "C(=O)N", "O", "CC", "N", "C(=O)O", "S(=O)(=O)")
DECOY_PREFIXES = ("OC(=O)", "N#C", "FC(F)(F)", "Cl", "CO", "NS(=O)(=O)", "CC(=O)N", "")
DECOY_SUFFIXES = ("C(=O)O", "C#N", "C(F)(F)F", "Cl", "OC", "S(=O)(=O)N", "NC(C)=O", "")

_PROTEIN_ELEMENTS = ("C", "N", "O", "C", "S", "C")
_ATOM_NAMES = {"C": "CA", "N": "N", "O": "O", "S": "SG"}


@dataclass(frozen=True)
class SyntheticPair:
    smiles: str
    protein_id: str
    label: int
    drug_id: str


def make_drug(rng: np.random.Generator, positive: bool) -> str:
    """Random ring/linker chain with one end group slot reserved for the motif."""
    n_rings = int(rng.integers(2, 5))
    body = RINGS[rng.integers(len(RINGS))]
    for _ in range(n_rings - 1):
        body += LINKERS[rng.integers(len(LINKERS))] + RINGS[rng.integers(len(RINGS))]
    prefix = DECOY_PREFIXES[rng.integers(len(DECOY_PREFIXES))]
    suffix = DECOY_SUFFIXES[rng.integers(len(DECOY_SUFFIXES))]
    if positive:
        if rng.random() < 0.5:
            prefix = MOTIF_PREFIX
        else:
            suffix = MOTIF_SUFFIX
    return prefix + body + suffix


def shell_atoms(origin, size: float = 16.0, step: float = 2.0, wall: float = 2.0,
                hole: float = 6.0, face: int = 2) -> list[np.ndarray]:
    """Hollow cube with thick walls and a square opening in the +face wall."""
    origin = np.asarray(origin, dtype=np.float64)
    ticks = np.arange(0.0, size + 1e-9, step)
    c = size / 2.0
    out = []
    for x in ticks:
        for y in ticks:
            for z in ticks:
                p = np.array([x, y, z])
                if not ((p <= wall).any() or (p >= size - wall).any()):
                    continue
                others = [p[a] for a in range(3) if a != face]
                if p[face] >= size - wall and all(abs(v - c) < hole / 2.0 for v in others):
                    continue
                out.append(origin + p)
    return out


def make_protein(rng: np.random.Generator, protein_id: str, cavities: int = 1) -> ProteinStructure:
    """One or more shells side by side; each shell yields one pocket."""
    coords = []
    for k in range(cavities):
        size = float(rng.choice([14.0, 16.0, 18.0]))
        coords += shell_atoms((k * 20.0, 0.0, 0.0), size=size, face=int(rng.integers(3)))
    atoms = []
    for i, xyz in enumerate(coords):
        el = _PROTEIN_ELEMENTS[int(rng.integers(len(_PROTEIN_ELEMENTS)))]
        atoms.append(PDBAtom(_ATOM_NAMES[el], el, "ALA", i % 9999 + 1, "A", tuple(float(v) for v in xyz)))
    return ProteinStructure(atoms, protein_id)


def protein_to_pdb(p: ProteinStructure) -> str:
    lines = [format_pdb_atom(i + 1, a) for i, a in enumerate(p.atoms)]
    return "\n".join(lines + ["END", ""])


def make_pairs(n: int, seed: int = 0, n_proteins: int = 3, positive_fraction: float = 0.5):
    """Return (pairs, proteins) with labels balanced up to rounding."""
    rng = np.random.default_rng(seed)
    proteins = {f"P{k}": make_protein(rng, f"P{k}", cavities=1 + k % 2) for k in range(n_proteins)}
    n_pos = int(round(n * positive_fraction))
    labels = np.array([1] * n_pos + [0] * (n - n_pos))
    rng.shuffle(labels)
    pairs = []
    for i, y in enumerate(labels):
        pid = f"P{int(rng.integers(n_proteins))}"
        pairs.append(SyntheticPair(make_drug(rng, bool(y)), pid, int(y), f"D{i:04d}"))
    return pairs, proteins

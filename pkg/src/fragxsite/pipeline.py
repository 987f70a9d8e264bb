"""Raw inputs (SMILES, protein structures) to model-ready samples."""

from __future__ import annotations

from dataclasses import dataclass

from .chemio import ProteinStructure, parse_smiles
from .featurize import GraphSample, fragment_graph, molecule_features, pocket_graph
from .fragmenter import fragment_molecule
from .model import InteractionSample
from .pocket import PocketBox, find_pockets, pocket_atoms


@dataclass
class PreparedProtein:
    protein_id: str
    boxes: list[PocketBox]
    graphs: list[GraphSample]

    def box_dicts(self) -> list[dict]:
        return [b.to_json() for b in self.boxes]


def prepare_drug(smiles: str, max_blocks: int = 4, max_fragments: int = 32) -> list[GraphSample]:
    g = parse_smiles(smiles)
    feats = molecule_features(g)
    return [fragment_graph(g, f, feats) for f in fragment_molecule(g, max_blocks, max_fragments)]


def prepare_protein(p: ProteinStructure, cfg) -> PreparedProtein:
    """Pockets with at least one atom, each turned into a distance graph.

    ``cfg`` is a RunConfig.
    """
    boxes, graphs = [], []
    for box in find_pockets(p, cfg.pocket_config()):
        atoms = pocket_atoms(p, box)
        if not atoms:
            continue
        boxes.append(box)
        graphs.append(pocket_graph(atoms, cfg.edge_threshold, box.atom_indices))
    return PreparedProtein(p.source_id or "", boxes, graphs)


def make_sample(smiles: str, protein: PreparedProtein, label: int, drug_id: str, cfg) -> InteractionSample:
    frags = prepare_drug(smiles, cfg.max_blocks, cfg.max_fragments)
    return InteractionSample(frags, protein.graphs, int(label), drug_id, protein.protein_id, protein.box_dicts())

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fragxsite.chemio import parse_pdb, parse_smiles
from fragxsite.fragmenter import fragment_molecule
from fragxsite.pocket import find_pockets
from fragxsite.synthetic import MOTIF_PREFIX, MOTIF_SUFFIX, make_drug, make_pairs, make_protein, protein_to_pdb


def nitro_atoms(g):
    """Indices of N+ atoms bonded to two oxygens."""
    out = []
    for i, a in enumerate(g.atoms):
        if a.element == "N" and a.formal_charge == 1:
            if sum(g.atoms[j].element == "O" for j in g.neighbors(i)) == 2:
                out.append(i)
    return out


@given(st.integers(0, 2 ** 31), st.booleans())
def test_drugs_parse_and_carry_motif_iff_positive(seed, positive):
    smiles = make_drug(np.random.default_rng(seed), positive)
    g = parse_smiles(smiles)
    assert bool(nitro_atoms(g)) == positive
    assert (MOTIF_PREFIX in smiles or MOTIF_SUFFIX in smiles) == positive


@given(st.integers(0, 2 ** 31))
def test_motif_survives_fragmentation(seed):
    g = parse_smiles(make_drug(np.random.default_rng(seed), True))
    n = nitro_atoms(g)[0]
    frags = fragment_molecule(g)
    assert 1 <= len(frags) <= 32
    assert any(n in f.atom_indices for f in frags)


@pytest.mark.parametrize("cavities", [1, 2])
def test_protein_pocket_count(cavities):
    p = make_protein(np.random.default_rng(3), "P", cavities)
    assert len(find_pockets(p)) == cavities


def test_pdb_round_trip():
    p = make_protein(np.random.default_rng(1), "P", 1)
    q = parse_pdb(protein_to_pdb(p))
    assert len(q.atoms) == len(p.atoms)
    assert np.allclose(q.coords, p.coords, atol=1e-3)


def test_pairs_balanced_and_seeded():
    pairs, proteins = make_pairs(101, seed=5)
    assert sum(p.label for p in pairs) == 50 or sum(p.label for p in pairs) == 51
    assert {p.protein_id for p in pairs} <= set(proteins)
    again, _ = make_pairs(101, seed=5)
    assert pairs == again
    assert len({p.drug_id for p in pairs}) == 101

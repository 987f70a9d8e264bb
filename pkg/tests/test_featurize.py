import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fragxsite.chemio import ELEMENTS, PDBAtom, parse_smiles
from fragxsite.featurize import (AROMATIC_SLOT, BLOCKS, CHARGE_SLOT, FEATURE_DIM, RADICAL_SLOT,
                                 GraphSample, featurize_atom, featurize_pocket_atom, fragment_graph,
                                 hybridization, molecule_features, pocket_graph, spatial_edges)
from fragxsite.fragmenter import enumerate_fragments

from oracles import SMALL_MOLECULES


def _block(vec, name):
    _, off, width = next(b for b in BLOCKS if b[0] == name)
    return vec[off:off + width]


def _hot(vec, name):
    idx = np.flatnonzero(_block(vec, name))
    assert len(idx) == 1
    return int(idx[0])


def test_layout_widths():
    assert sum(w for _, _, w in BLOCKS) + 3 == FEATURE_DIM
    assert _block(np.arange(74), "hydrogens")[-1] == 73


def test_benzene_carbon():
    v = featurize_atom(parse_smiles("c1ccccc1"), 0)
    assert v.shape == (74,)
    assert _hot(v, "element") == ELEMENTS.index("C")
    assert _hot(v, "degree") == 2
    assert _hot(v, "hydrogens") == 1
    assert _hot(v, "hybridization") == 1  # SP2
    assert v[AROMATIC_SLOT] == 1.0


def test_methane_hydrogens_clamp():
    v = featurize_atom(parse_smiles("C"), 0)
    assert _hot(v, "degree") == 0
    assert _hot(v, "hydrogens") == 3
    assert _hot(v, "valence") == 4


@pytest.mark.parametrize("smiles,idx,expected", [
    ("CC", 0, "SP3"), ("C=C", 0, "SP2"), ("C#N", 0, "SP"), ("C=C=C", 1, "SP"),
    ("FS(F)(F)(F)(F)F", 1, "SP3D2"), ("FP(F)(F)(F)F", 1, "SP3D"), ("c1ccccc1", 3, "SP2"),
])
def test_hybridization_rules(smiles, idx, expected):
    assert hybridization(parse_smiles(smiles), idx) == expected


def test_unknown_element_slot():
    v = featurize_pocket_atom("Xe", 0)
    assert _hot(v, "element") == 43
    assert featurize_atom(parse_smiles("[U]"), 0)[43] == 1.0


def test_charge_and_radical_scalars():
    g = parse_smiles("C[N+](C)(C)C")
    assert featurize_atom(g, 1)[CHARGE_SLOT] == 1.0
    assert featurize_atom(parse_smiles("[CH3]"), 0)[RADICAL_SLOT] == 1.0


@pytest.mark.parametrize("smiles", SMALL_MOLECULES)
def test_block_sums_and_finiteness(smiles):
    f = molecule_features(parse_smiles(smiles))
    assert np.isfinite(f).all()
    for _, off, width in BLOCKS:
        assert np.all(f[:, off:off + width].sum(axis=1) == 1)


@pytest.mark.parametrize("smiles", SMALL_MOLECULES)
def test_agrees_with_rdkit_atom_properties(smiles):
    Chem = pytest.importorskip("rdkit.Chem")
    mol = Chem.MolFromSmiles(smiles)
    g = parse_smiles(smiles)
    assert mol.GetNumAtoms() == len(g.atoms)
    for a in mol.GetAtoms():
        v = featurize_atom(g, a.GetIdx())
        sym = a.GetSymbol()
        assert _hot(v, "element") == (ELEMENTS.index(sym) if sym in ELEMENTS else 43)
        assert _hot(v, "degree") == min(a.GetDegree(), 10)
        assert _hot(v, "valence") == min(a.GetNumImplicitHs() if not a.GetNoImplicit() else 0, 6)
        assert _hot(v, "hydrogens") == min(a.GetTotalNumHs(), 3)
        assert v[CHARGE_SLOT] == a.GetFormalCharge()
        assert v[RADICAL_SLOT] == a.GetNumRadicalElectrons()
        assert v[AROMATIC_SLOT] == float(a.GetIsAromatic())


def test_whole_molecule_fragment():
    g = parse_smiles("CCO")
    frags = enumerate_fragments(g)
    whole = max(frags, key=lambda f: len(f.atom_indices))
    s = fragment_graph(g, whole)
    assert s.num_nodes == 3 and len(s.edges) == 2


def test_single_atom_fragment():
    g = parse_smiles("C")
    s = fragment_graph(g, enumerate_fragments(g)[0])
    assert s.num_nodes == 1 and len(s.edges) == 0


def test_ethylbenzene_block_keeps_parent_degree():
    g = parse_smiles("CCc1ccccc1")
    frag = next(f for f in enumerate_fragments(g) if set(f.atom_indices) == {0, 1})
    s = fragment_graph(g, frag)
    assert s.num_nodes == 2 and s.edges.tolist() == [[0, 1]]
    assert _hot(s.features[1], "degree") == 2
    assert _hot(s.features[1], "hydrogens") == 2


@pytest.mark.parametrize("smiles", SMALL_MOLECULES[:15])
def test_reindexing_is_bijective(smiles):
    g = parse_smiles(smiles)
    parent = molecule_features(g)
    for f in enumerate_fragments(g, max_blocks=3):
        s = fragment_graph(g, f, parent)
        to_parent = s.atom_indices
        to_local = {int(a): k for k, a in enumerate(to_parent)}
        assert sorted(to_local) == sorted(f.atom_indices)
        assert all(to_local[int(to_parent[k])] == k for k in range(s.num_nodes))
        assert np.array_equal(s.features, parent[to_parent])
        assert len(s.edges) == len(f.bonds)


def _atoms(coords, element="C"):
    return [PDBAtom("CA", element, "GLY", i + 1, "A", tuple(map(float, c))) for i, c in enumerate(coords)]


def test_pocket_edges_at_threshold():
    assert len(pocket_graph(_atoms([(0, 0, 0), (3, 0, 0)])).edges) == 1
    assert len(pocket_graph(_atoms([(0, 0, 0), (7, 0, 0)])).edges) == 0
    assert len(pocket_graph(_atoms([(0, 0, 0), (5, 0, 0)])).edges) == 0  # strict inequality


def test_pocket_atom_features():
    s = pocket_graph(_atoms([(0, 0, 0), (3, 0, 0), (0, 3, 0), (50, 0, 0)]), threshold=5.0)
    assert [_hot(r, "degree") for r in s.features] == [2, 2, 2, 0]
    assert [_hot(r, "valence") for r in s.features] == [2, 2, 2, 0]
    assert all(_hot(r, "hybridization") == 2 for r in s.features)
    assert all(_hot(r, "hydrogens") == 0 for r in s.features)


def test_pocket_graph_rejects_empty():
    with pytest.raises(ValueError):
        pocket_graph([])


def _brute_edges(coords, threshold):
    n = len(coords)
    return [(i, j) for i in range(n) for j in range(i + 1, n)
            if np.linalg.norm(coords[i] - coords[j]) < threshold]


def test_random_cloud_matches_pairwise(rng):
    coords = rng.uniform(0, 10, size=(10, 3))
    assert [tuple(e) for e in spatial_edges(coords, 5.0)] == _brute_edges(coords, 5.0)


def test_large_cloud_matches_pairwise(rng):
    coords = rng.uniform(0, 30, size=(500, 3))
    assert [tuple(e) for e in spatial_edges(coords, 5.0)] == _brute_edges(coords, 5.0)


@settings(max_examples=30)
@given(st.integers(1, 40), st.floats(0.5, 8.0), st.integers(0, 2 ** 31))
def test_spatial_edges_property(n, threshold, seed):
    coords = np.random.default_rng(seed).uniform(-10, 10, size=(n, 3))
    got = spatial_edges(coords, threshold)
    assert [tuple(e) for e in got] == _brute_edges(coords, threshold)
    s = pocket_graph(_atoms(coords), threshold)
    assert s.num_nodes == n and np.isfinite(s.features).all()


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 5)], [(-1, 0)]])
def test_graph_sample_validation(edges):
    with pytest.raises(ValueError):
        GraphSample(np.zeros((2, 74)), np.array(edges))


def test_graph_sample_requires_nodes():
    with pytest.raises(ValueError):
        GraphSample(np.zeros((0, 74)), np.zeros((0, 2)))

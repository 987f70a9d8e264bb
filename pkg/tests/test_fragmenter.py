import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fragxsite.chemio import parse_smiles
from fragxsite.fragmenter import (ConfigError, RuleTable, building_blocks, connected_subsets,
                                  enumerate_fragments, find_cleavable_bonds, fragment_molecule,
                                  select_fragments)

from oracles import SMALL_MOLECULES, brute_force_fragments, connected_subtree_count


def _frag_atoms(frags):
    return {f.atom_indices for f in frags}


def test_benzene_has_no_cleavable_bond():
    assert find_cleavable_bonds(parse_smiles("c1ccccc1")) == []


def test_methane_has_no_bond():
    assert find_cleavable_bonds(parse_smiles("C")) == []


def test_ethylbenzene_cleaves_alkyl_aryl_bond():
    g = parse_smiles("CCc1ccccc1")
    cut = find_cleavable_bonds(g)
    assert len(cut) == 1
    bond = g.bonds[cut[0].bond]
    assert {bond.a, bond.b} == {1, 2}
    assert not bond.ring_member


def _rdkit_blocks(smi):
    Chem = pytest.importorskip("rdkit.Chem")
    BRICS = pytest.importorskip("rdkit.Chem.BRICS")
    mol = Chem.MolFromSmiles(smi)
    bonds = [mol.GetBondBetweenAtoms(a, b).GetIdx() for (a, b), _ in BRICS.FindBRICSBonds(mol)]
    if not bonds:
        return sorted([tuple(range(mol.GetNumAtoms()))])
    frag = Chem.FragmentOnBonds(mol, bonds, addDummies=False)
    return sorted(tuple(sorted(ix)) for ix in Chem.GetMolFrags(frag))


@pytest.mark.parametrize("smi", ["CCc1ccccc1", "CC(=O)Oc1ccccc1C(=O)O"] + SMALL_MOLECULES)
def test_blocks_match_rdkit(smi):
    ref = _rdkit_blocks(smi)
    g = parse_smiles(smi)
    ours = sorted(tuple(sorted(b)) for b in building_blocks(g, find_cleavable_bonds(g)))
    assert ours == ref


def test_aspirin_blocks():
    g = parse_smiles("CC(=O)Oc1ccccc1C(=O)O")
    blocks = building_blocks(g, find_cleavable_bonds(g))
    assert sum(len(b) for b in blocks) == len(g.atoms)
    assert len(blocks) >= 3


def test_no_cleavable_bonds_gives_one_block():
    g = parse_smiles("c1ccccc1")
    assert building_blocks(g, []) == [frozenset(range(6))]


def test_chain_with_one_cut_gives_two_blocks():
    g = parse_smiles("CCc1ccccc1")
    assert len(building_blocks(g, find_cleavable_bonds(g))) == 2


def test_benzene_single_fragment():
    frags = enumerate_fragments(parse_smiles("c1ccccc1"), 3)
    assert [f.atom_indices for f in frags] == [tuple(range(6))]


def test_three_block_path():
    # A-B-C via two ether-type cuts: blocks c1ccccc1 / O / c1ccccc1 style chain
    g = parse_smiles("CCOC(=O)C")
    cut = find_cleavable_bonds(g)
    blocks = building_blocks(g, cut)
    if len(blocks) != 3:
        pytest.skip("rule table does not split this chain into three blocks")
    frags = enumerate_fragments(g, 2)
    assert len(frags) == 5


def test_path_graph_subset_count():
    adj = [{1}, {0, 2}, {1}]
    subs = connected_subsets(adj, 2)
    assert subs == {frozenset({0}), frozenset({1}), frozenset({2}), frozenset({0, 1}), frozenset({1, 2})}


def test_max_blocks_validated():
    with pytest.raises(ConfigError):
        enumerate_fragments(parse_smiles("CCO"), 0)


@pytest.mark.parametrize("smi", SMALL_MOLECULES)
def test_matches_brute_force(smi):
    g = parse_smiles(smi)
    for k in (1, 2, 3, 4):
        assert _frag_atoms(enumerate_fragments(g, k)) == brute_force_fragments(g, k)


@pytest.mark.parametrize("smi", SMALL_MOLECULES)
def test_fragment_invariants(smi):
    g = parse_smiles(smi)
    frags = enumerate_fragments(g, 4)
    # deterministic lexicographic order
    assert [f.atom_indices for f in frags] == sorted(f.atom_indices for f in frags)
    for f in frags:
        atoms = set(f.atom_indices)
        seen, stack = {f.atom_indices[0]}, [f.atom_indices[0]]
        while stack:
            u = stack.pop()
            for v in g.neighbors(u):
                if v in atoms and v not in seen:
                    seen.add(v)
                    stack.append(v)
        assert seen == atoms
        assert f.block_count <= 4
        for inside, outside in f.attachment_points:
            assert inside in atoms and outside not in atoms
    singles = [f for f in frags if f.block_count == 1]
    assert set().union(*(f.atom_indices for f in singles)) == set(range(len(g)))
    # monotone in max_blocks
    for k in (1, 2, 3):
        assert _frag_atoms(enumerate_fragments(g, k)) <= _frag_atoms(enumerate_fragments(g, k + 1))


@given(st.integers(1, 10), st.integers(1, 5), st.randoms(use_true_random=False))
def test_tree_subset_count(n, k, rnd):
    adj = [set() for _ in range(n)]
    for v in range(1, n):
        u = rnd.randrange(v)
        adj[u].add(v)
        adj[v].add(u)
    assert len(connected_subsets(adj, k)) == connected_subtree_count(adj, k)


def test_select_prefers_larger_block_counts():
    g = parse_smiles("CC(=O)Nc1ccc(cc1)OCc1ccccc1C(=O)OC")
    frags = enumerate_fragments(g, 4)
    assert len(frags) > 5
    kept = select_fragments(frags, 5)
    assert len(kept) == 5
    cutoff = min(f.block_count for f in kept)
    assert all(f.block_count <= cutoff for f in frags if f not in kept)
    assert [f.atom_indices for f in kept] == sorted(f.atom_indices for f in kept)
    assert fragment_molecule(g, 4, 5) == kept


def test_rule_table_rejects_unknown_environment():
    with pytest.raises(ConfigError):
        RuleTable.from_dict({"environments": {"L1": {"element": "C"}}, "pairs": [["L1", "L99"]]})


def test_rule_table_loads_from_file(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps({"environments": {"X": {"element": "C"}}, "pairs": [["X", "X"]]}))
    table = RuleTable.load(path)
    g = parse_smiles("CCC")
    # every acyclic C-C single bond matches the catch-all pair
    assert len(find_cleavable_bonds(g, table)) == 2

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fragxsite.chemio import (AROMATIC, DOUBLE, SINGLE, PDBAtom, PDBError, SmilesError,
                              format_pdb_atom, implicit_hydrogens, parse_pdb, parse_smiles,
                              to_smiles, total_hydrogens)

CORPUS = [
    "CCO", "CC(=O)O", "c1ccccc1", "CCc1ccccc1", "CC(=O)Oc1ccccc1C(=O)O", "C#N", "O=C=O",
    "c1ccncc1", "C1CCNCC1", "[NH4+]", "C[N+](=O)[O-]", "CS(=O)(=O)N", "c1ccc2ccccc2c1",
    "Clc1ccc(Br)cc1", "OC(=O)C(N)Cc1c[nH]c2ccccc12", "C%12CC%12", "FC(F)(F)c1ccccc1",
]


def invariant(g):
    atoms = sorted((a.element, g.heavy_degree(i), a.formal_charge, a.aromatic) for i, a in enumerate(g.atoms))
    bonds = sorted(b.order for b in g.bonds)
    return atoms, bonds


def test_ethanol_chain():
    g = parse_smiles("CCO")
    assert [a.element for a in g.atoms] == ["C", "C", "O"]
    assert [(b.a, b.b, b.order) for b in g.bonds] == [(0, 1, SINGLE), (1, 2, SINGLE)]
    assert implicit_hydrogens(g, 0) == 3


def test_benzene_aromatic_ring():
    g = parse_smiles("c1ccccc1")
    assert len(g.atoms) == 6 and len(g.bonds) == 6
    assert all(a.aromatic and a.ring_member for a in g.atoms)
    assert all(b.order == AROMATIC and b.ring_member for b in g.bonds)
    assert all(implicit_hydrogens(g, i) == 1 for i in range(6))


def test_acetic_acid_table():
    g = parse_smiles("CC(=O)O")
    assert len(g.atoms) == 4
    k = g.bond_between(1, 2)
    assert g.bonds[k].order == DOUBLE
    assert g.bonds[g.bond_between(1, 3)].order == SINGLE
    # carbonyl O has no H, hydroxyl O has one
    assert (total_hydrogens(g, 2), total_hydrogens(g, 3)) == (0, 1)


def test_acetic_acid_matches_rdkit():
    Chem = pytest.importorskip("rdkit.Chem")
    ours = parse_smiles("CC(=O)O")
    ref = Chem.MolFromSmiles("CC(=O)O")
    assert [a.element for a in ours.atoms] == [a.GetSymbol() for a in ref.GetAtoms()]
    ref_bonds = sorted((b.GetBeginAtomIdx(), b.GetEndAtomIdx(), b.GetBondTypeAsDouble()) for b in ref.GetBonds())
    assert sorted((b.a, b.b, b.value) for b in ours.bonds) == ref_bonds
    assert [total_hydrogens(ours, i) for i in range(4)] == [a.GetTotalNumHs() for a in ref.GetAtoms()]


def test_ammonium_hydrogens():
    g = parse_smiles("[NH4+]")
    assert g.atoms[0].formal_charge == 1
    assert implicit_hydrogens(g, 0) == 4


@pytest.mark.parametrize("smi", CORPUS)
def test_hydrogen_counts_match_rdkit(smi):
    Chem = pytest.importorskip("rdkit.Chem")
    ours = parse_smiles(smi)
    ref = Chem.MolFromSmiles(smi)
    assert [total_hydrogens(ours, i) for i in range(len(ours))] == [a.GetTotalNumHs() for a in ref.GetAtoms()]


def test_largest_component_kept():
    g = parse_smiles("CCO.[Na+]")
    assert [a.element for a in g.atoms] == ["C", "C", "O"]


def test_stereo_marks_ignored():
    assert invariant(parse_smiles("F/C=C/F")) == invariant(parse_smiles("FC=CF"))
    assert invariant(parse_smiles("C[C@H](N)O")) == invariant(parse_smiles("CC(N)O"))


def test_two_digit_ring_closure():
    g = parse_smiles("C%12CC%12")
    assert len(g.bonds) == 3 and all(b.ring_member for b in g.bonds)


@pytest.mark.parametrize("bad", ["C1CC", "C(C", "CC)", "[CH4", "Xx", "C(C)(C)(C)(C)C", "C==C", ""])
def test_parse_errors(bad):
    with pytest.raises(SmilesError) as info:
        parse_smiles(bad)
    assert isinstance(info.value.offset, int)


def test_error_offset_points_at_problem():
    with pytest.raises(SmilesError) as info:
        parse_smiles("CCQ")
    assert info.value.offset == 2


@pytest.mark.parametrize("smi", CORPUS)
def test_handshake_identity(smi):
    g = parse_smiles(smi)
    total = sum(g.bond_order_sum(i) for i in range(len(g)))
    assert total == pytest.approx(2 * sum(b.value for b in g.bonds))


@pytest.mark.parametrize("smi", CORPUS)
def test_round_trip(smi):
    g = parse_smiles(smi)
    assert invariant(parse_smiles(to_smiles(g))) == invariant(g)


_ATOMS = st.sampled_from(["C", "N", "O", "S"])
_BONDS = st.sampled_from(["", "=", "#"])


@given(st.lists(st.tuples(_BONDS, _ATOMS), min_size=1, max_size=12), _ATOMS)
def test_round_trip_random_chains(tail, head):
    smi = head + "".join(b + a for b, a in tail)
    try:
        g = parse_smiles(smi)
    except SmilesError:
        assume(False)
    g2 = parse_smiles(to_smiles(g))
    assert invariant(g2) == invariant(g)
    # linear chain: the identity order survives the round trip
    assert [a.element for a in g2.atoms] == [a.element for a in g.atoms]


# ---------------------------------------------------------------------------
# PDB


def _line(serial, name, resname, chain, resseq, xyz, element, record="ATOM  ", altloc=" "):
    x, y, z = xyz
    return (f"{record}{serial:5d} {name:<4}{altloc}{resname:>3} {chain}{resseq:4d}    "
            f"{x:8.3f}{y:8.3f}{z:8.3f}  1.00  0.00          {element:>2}")


def test_single_atom():
    p = parse_pdb(_line(1, " CA ", "ALA", "A", 1, (1.0, 2.0, 3.0), "C"))
    assert len(p) == 1
    assert p.atoms[0].coords == (1.0, 2.0, 3.0)
    assert p.atoms[0].element == "C" and p.atoms[0].residue_name == "ALA"


def test_first_model_only():
    lines = []
    for model in (1, 2):
        lines.append(f"MODEL     {model:4d}")
        lines += [_line(i + 1, " CA ", "GLY", "A", i + 1, (i, model, 0.0), "C") for i in range(10)]
        lines.append("ENDMDL")
    p = parse_pdb("\n".join(lines))
    assert len(p) == 10
    assert all(a.coords[1] == 1.0 for a in p.atoms)


def test_hetatm_and_water_excluded():
    text = "\n".join([
        _line(1, " N  ", "ALA", "A", 1, (0, 0, 0), "N"),
        _line(2, " O  ", "HOH", "A", 2, (1, 0, 0), "O"),
        _line(3, "ZN  ", " ZN", "A", 3, (2, 0, 0), "ZN", record="HETATM"),
    ])
    assert [a.element for a in parse_pdb(text).atoms] == ["N"]


def test_malformed_coordinate_reports_line():
    good = _line(1, " CA ", "ALA", "A", 1, (0, 0, 0), "C")
    bad = good[:30] + "   abc  " + good[38:]
    with pytest.raises(PDBError, match="line 2"):
        parse_pdb(good + "\n" + bad)


def test_empty_structure():
    with pytest.raises(PDBError, match="empty"):
        parse_pdb("HEADER    nothing here\nEND\n")


def _fixture_text():
    """Two chains, waters, a ligand, alternate locations and a second model."""
    rng = np.random.default_rng(7)
    lines, serial = ["HEADER    SYNTHETIC PROTEIN                       01-JAN-00   1ABC"], 1
    lines.append("MODEL        1")
    for chain in "AB":
        for res in range(1, 6):
            for name, el in ((" N  ", "N"), (" CA ", "C"), (" C  ", "C"), (" O  ", "O")):
                xyz = rng.uniform(-20, 20, 3)
                if res == 3 and name == " CA ":
                    lines.append(_line(serial, name, "SER", chain, res, xyz, el, altloc="A"))
                    serial += 1
                    lines.append(_line(serial, name, "SER", chain, res, xyz + 0.3, el, altloc="B"))
                else:
                    lines.append(_line(serial, name, "SER" if res == 3 else "LEU", chain, res, xyz, el))
                serial += 1
        lines.append(f"TER   {serial:5d}      LEU {chain}   5")
    for k in range(3):
        lines.append(_line(serial, " O  ", "HOH", "W", 100 + k, rng.uniform(-20, 20, 3), "O", record="HETATM"))
        serial += 1
    lines.append(_line(serial, " C1 ", "LIG", "L", 200, (0, 0, 0), "C", record="HETATM"))
    lines.append("ENDMDL")
    lines.append("MODEL        2")
    lines.append(_line(1, " CA ", "LEU", "A", 1, (5, 5, 5), "C"))
    lines.append("ENDMDL")
    lines.append("END")
    return "\n".join(lines) + "\n"


def test_fixture_header_and_count():
    p = parse_pdb(_fixture_text())
    assert p.source_id == "1ABC"
    assert len(p) == 40
    assert {a.chain_id for a in p.atoms} == {"A", "B"}


def test_atom_count_matches_biopython(tmp_path):
    PDB = pytest.importorskip("Bio.PDB")
    path = tmp_path / "fixture.pdb"
    path.write_text(_fixture_text())
    structure = PDB.PDBParser(QUIET=True).get_structure("x", str(path))
    model = next(iter(structure))
    ref = sum(1 for res in model.get_residues() if res.id[0] == " " for _ in res.get_atoms())
    assert len(parse_pdb(_fixture_text())) == ref


def test_pdb_deterministic():
    text = _fixture_text()
    a, b = parse_pdb(text), parse_pdb(text)
    assert a.atoms == b.atoms and np.array_equal(a.coords, b.coords)


def test_format_round_trip():
    atom = PDBAtom("CA", "C", "ALA", 12, "B", (1.5, -2.25, 3.125))
    p = parse_pdb(format_pdb_atom(1, atom))
    assert p.atoms[0] == atom


def test_biaryl_link_is_single():
    g = parse_smiles("c1ccc(cc1)c1ccncc1")
    link = g.bonds[g.bond_between(3, 6)]
    assert link.order == SINGLE and not link.ring_member

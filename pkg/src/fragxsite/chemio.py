"""SMILES and PDB parsing into plain Python graphs and coordinate tables.

Only the OpenSMILES subset needed for drug-like ligands is handled: organic
subset atoms, bracket atoms (isotope and atom class ignored), explicit bonds,
branches and ring closures up to %99.  Stereo marks are accepted and dropped.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

# Element vocabulary of the 74-wide atom featurization (index 43 is "unknown").
ELEMENTS = (
    "C", "N", "O", "S", "F", "Si", "P", "Cl", "Br", "Mg", "Na", "Ca", "Fe",
    "As", "Al", "I", "B", "V", "K", "Tl", "Yb", "Sb", "Sn", "Ag", "Pd", "Co",
    "Se", "Ti", "Zn", "H", "Li", "Ge", "Cu", "Au", "Ni", "Cd", "In", "Mn",
    "Zr", "Cr", "Pt", "Hg", "Pb",
)

_PERIODIC = frozenset("""
H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu
Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba
La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb
Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs
Mt Ds Rg Cn Nh Fl Mc Lv Ts Og
""".split())

# Normal valences for the organic subset; the first entry is the default.
VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,), "H": (1,),
}
_VALENCE_ELECTRONS = {
    "B": 3, "C": 4, "N": 5, "O": 6, "F": 7, "P": 5, "S": 6, "Cl": 7, "Br": 7,
    "I": 7, "H": 1,
}
_ORGANIC = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
_AROMATIC_ORGANIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
_AROMATIC_BRACKET = {"se": "Se", "as": "As", "te": "Te", **_AROMATIC_ORGANIC}

SINGLE, DOUBLE, TRIPLE, AROMATIC = "single", "double", "triple", "aromatic"
BOND_ORDER = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC: 1.5}
_BOND_SYMBOL = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC,
                "/": SINGLE, "\\": SINGLE}


class SmilesError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class PDBError(ValueError):
    pass


@dataclass
class Atom:
    element: str
    formal_charge: int = 0
    explicit_h: int = 0
    aromatic: bool = False
    ring_member: bool = False
    coords: Optional[tuple[float, float, float]] = None
    # bracket atoms carry their full hydrogen count; no valence-derived H
    bracket: bool = False


@dataclass
class Bond:
    a: int
    b: int
    order: str = SINGLE
    ring_member: bool = False

    @property
    def value(self) -> float:
        return BOND_ORDER[self.order]


@dataclass
class MolGraph:
    atoms: list[Atom]
    bonds: list[Bond]
    _adj: list[list[tuple[int, int]]] = field(default=None, init=False, repr=False, compare=False)

    @property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per atom: list of (neighbor atom, bond index)."""
        if self._adj is None:
            adj = [[] for _ in self.atoms]
            for k, bond in enumerate(self.bonds):
                adj[bond.a].append((bond.b, k))
                adj[bond.b].append((bond.a, k))
            self._adj = adj
        return self._adj

    def neighbors(self, i: int) -> list[int]:
        return [j for j, _ in self.adjacency[i]]

    def heavy_degree(self, i: int) -> int:
        return sum(1 for j in self.neighbors(i) if self.atoms[j].element != "H")

    def bond_order_sum(self, i: int) -> float:
        return sum(self.bonds[k].value for _, k in self.adjacency[i])

    def bond_between(self, i: int, j: int) -> Optional[int]:
        for n, k in self.adjacency[i]:
            if n == j:
                return k
        return None

    def __len__(self) -> int:
        return len(self.atoms)


# ---------------------------------------------------------------------------
# valence rules


def charged_valence(element: str, charge: int) -> Optional[int]:
    """Default valence after shifting the element by its formal charge.

    N+ behaves like C, O- like a halogen and so on.  Returns None for elements
    outside the organic subset.
    """
    ve = _VALENCE_ELECTRONS.get(element)
    if ve is None:
        return None
    if element == "H":
        return 1 if charge == 0 else 0
    e = ve - charge
    if e < 0 or e > 8:
        return 0
    return e if e <= 4 else 8 - e


def valence_hydrogens(g: MolGraph, i: int) -> int:
    """Hydrogens implied by valence rules alone (zero for bracket atoms)."""
    atom = g.atoms[i]
    if atom.bracket or atom.element not in VALENCES:
        return 0
    used = g.bond_order_sum(i)
    if atom.aromatic:
        # aromatic bonds count 1.5, rounded down; no hypervalent expansion
        return max(0, VALENCES[atom.element][0] - math.floor(used + 1e-9))
    for v in VALENCES[atom.element]:
        if v >= used - 1e-9:
            return max(0, int(round(v - used)))
    return 0


def implicit_hydrogens(g: MolGraph, i: int) -> int:
    """Number of hydrogens attached to atom ``i`` that are not graph nodes.

    Bracket atoms report exactly what was written (``[NH4+]`` gives 4);
    organic-subset atoms fill their lowest compatible normal valence.
    """
    atom = g.atoms[i]
    if atom.bracket:
        return atom.explicit_h
    return atom.explicit_h + valence_hydrogens(g, i)


def total_hydrogens(g: MolGraph, i: int) -> int:
    """Implicit hydrogens plus explicit ``[H]`` neighbors."""
    explicit_nodes = sum(1 for j in g.neighbors(i) if g.atoms[j].element == "H")
    return implicit_hydrogens(g, i) + explicit_nodes


def radical_electrons(g: MolGraph, i: int) -> int:
    atom = g.atoms[i]
    if not atom.bracket or atom.aromatic:
        return 0
    v = charged_valence(atom.element, atom.formal_charge)
    if v is None:
        return 0
    used = g.bond_order_sum(i) + atom.explicit_h
    return max(0, int(v - used))


def _max_valence(atom: Atom) -> Optional[int]:
    if atom.element not in VALENCES:
        return None
    if atom.bracket and atom.formal_charge:
        v = charged_valence(atom.element, atom.formal_charge)
        return v + 2 if atom.element in ("P", "S", "Cl", "Br", "I") else v
    return max(VALENCES[atom.element])


# ---------------------------------------------------------------------------
# SMILES


def _parse_bracket(s: str, start: int) -> tuple[Atom, int]:
    end = s.find("]", start)
    if end < 0:
        raise SmilesError("unclosed bracket atom", start)
    body = s[start + 1:end]
    pos = 0
    while pos < len(body) and body[pos].isdigit():
        pos += 1  # isotope, ignored
    sym = None
    for width in (2, 1):
        cand = body[pos:pos + width]
        if len(cand) != width:
            continue
        if cand in _AROMATIC_BRACKET:
            sym, aromatic = _AROMATIC_BRACKET[cand], True
            break
        if cand in _PERIODIC:
            sym, aromatic = cand, False
            break
    if sym is None:
        raise SmilesError(f"unknown element in '[{body}]'", start + 1 + pos)
    pos += width
    if body[pos:pos + 1] == "@":
        while body[pos:pos + 1] == "@":
            pos += 1
        if body[pos:pos + 2] in ("TH", "AL", "SP", "TB", "OH"):
            pos += 2
            while pos < len(body) and body[pos].isdigit():
                pos += 1
    h = 0
    if body[pos:pos + 1] == "H":
        pos += 1
        h = 1
        if pos < len(body) and body[pos].isdigit():
            h = int(body[pos])
            pos += 1
    charge = 0
    if body[pos:pos + 1] in ("+", "-"):
        sign = 1 if body[pos] == "+" else -1
        pos += 1
        if pos < len(body) and body[pos].isdigit():
            n = 0
            while pos < len(body) and body[pos].isdigit():
                n = n * 10 + int(body[pos])
                pos += 1
            charge = sign * n
        else:
            charge = sign
            while body[pos:pos + 1] == ("+" if sign > 0 else "-"):
                charge += sign
                pos += 1
    if body[pos:pos + 1] == ":":
        pos += 1
        while pos < len(body) and body[pos].isdigit():
            pos += 1
    if pos != len(body):
        raise SmilesError(f"unexpected '{body[pos]}' in bracket atom", start + 1 + pos)
    if not -4 <= charge <= 4:
        raise SmilesError(f"formal charge {charge} out of range", start)
    return Atom(sym, formal_charge=charge, explicit_h=h, aromatic=aromatic, bracket=True), end + 1


def parse_smiles(s: str) -> MolGraph:
    """Parse a SMILES string into a MolGraph.

    Multi-component input keeps the largest component (first one on ties).
    Raises SmilesError carrying the byte offset of the offending token.
    """
    if not s or not s.isascii():
        raise SmilesError("SMILES must be non-empty ASCII", 0)
    atoms: list[Atom] = []
    offsets: list[int] = []
    bonds: dict[tuple[int, int], str] = {}
    branch_stack: list[int] = []
    rings: dict[int, tuple[int, Optional[str], int]] = {}
    prev: Optional[int] = None
    pending: Optional[str] = None
    pending_pos = 0

    def add_bond(a: int, b: int, sym: Optional[str], pos: int) -> None:
        if a == b:
            raise SmilesError("atom bonded to itself", pos)
        key = (min(a, b), max(a, b))
        if key in bonds:
            raise SmilesError("duplicate bond", pos)
        if sym is None:
            order = AROMATIC if atoms[a].aromatic and atoms[b].aromatic else SINGLE
        else:
            order = _BOND_SYMBOL[sym]
            if order == AROMATIC and not (atoms[a].aromatic and atoms[b].aromatic):
                raise SmilesError("aromatic bond between non-aromatic atoms", pos)
        bonds[key] = order

    i = 0
    n = len(s)
    while i < n:
        ch = s[i]
        if ch == "(":
            if prev is None or pending is not None:
                raise SmilesError("branch opened without a preceding atom", i)
            branch_stack.append(prev)
            i += 1
        elif ch == ")":
            if not branch_stack or pending is not None:
                raise SmilesError("unbalanced parenthesis", i)
            prev = branch_stack.pop()
            i += 1
        elif ch in _BOND_SYMBOL:
            if prev is None or pending is not None:
                raise SmilesError(f"misplaced bond '{ch}'", i)
            pending, pending_pos = ch, i
            i += 1
        elif ch == ".":
            if pending is not None or branch_stack:
                raise SmilesError("misplaced '.'", i)
            prev = None
            i += 1
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise SmilesError("ring closure without a preceding atom", i)
            if ch == "%":
                if len(s[i + 1:i + 3]) != 2 or not s[i + 1:i + 3].isdigit():
                    raise SmilesError("malformed %nn ring closure", i)
                label, width = int(s[i + 1:i + 3]), 3
            else:
                label, width = int(ch), 1
            if label in rings:
                other, sym, opos = rings.pop(label)
                if sym is not None and pending is not None and _BOND_SYMBOL[sym] != _BOND_SYMBOL[pending]:
                    raise SmilesError("conflicting ring-closure bond symbols", i)
                add_bond(other, prev, pending if pending is not None else sym, i)
            else:
                rings[label] = (prev, pending, i)
            pending = None
            i += width
        elif ch == "[":
            atom, nxt = _parse_bracket(s, i)
            atoms.append(atom)
            offsets.append(i)
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending, pending_pos if pending else i)
            prev, pending = idx, None
            i = nxt
        elif ch == "]":
            raise SmilesError("unbalanced bracket", i)
        else:
            sym = None
            for cand in _ORGANIC:
                if s.startswith(cand, i):
                    sym, aromatic, width = cand, False, len(cand)
                    break
            if sym is None and ch in _AROMATIC_ORGANIC:
                sym, aromatic, width = _AROMATIC_ORGANIC[ch], True, 1
            if sym is None:
                raise SmilesError(f"unknown element '{ch}'", i)
            atoms.append(Atom(sym, aromatic=aromatic))
            offsets.append(i)
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending, pending_pos if pending else i)
            prev, pending = idx, None
            i += width
    if pending is not None:
        raise SmilesError("dangling bond symbol", pending_pos)
    if branch_stack:
        raise SmilesError("unbalanced parenthesis", n)
    if rings:
        label, (_, _, pos) = min(rings.items(), key=lambda kv: kv[1][2])
        raise SmilesError(f"unclosed ring bond {label}", pos)
    if not atoms:
        raise SmilesError("no atoms", 0)

    g = MolGraph(atoms, [Bond(a, b, order) for (a, b), order in bonds.items()])
    for k, atom in enumerate(g.atoms):
        limit = _max_valence(atom)
        if limit is None or atom.aromatic:
            continue
        used = g.bond_order_sum(k) + (atom.explicit_h if atom.bracket else 0)
        if used > limit + 1e-9:
            raise SmilesError(f"valence violation on {atom.element}", offsets[k])
    g = largest_component(g)
    perceive_rings(g)
    return g


def connected_components(g: MolGraph) -> list[list[int]]:
    seen = [False] * len(g.atoms)
    comps = []
    for start in range(len(g.atoms)):
        if seen[start]:
            continue
        seen[start] = True
        stack, comp = [start], []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in g.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def induced_subgraph(g: MolGraph, keep: list[int]) -> MolGraph:
    remap = {old: new for new, old in enumerate(keep)}
    atoms = [Atom(**vars(g.atoms[i])) for i in keep]
    bonds = [Bond(remap[b.a], remap[b.b], b.order, b.ring_member)
             for b in g.bonds if b.a in remap and b.b in remap]
    return MolGraph(atoms, bonds)


def largest_component(g: MolGraph) -> MolGraph:
    comps = connected_components(g)
    if len(comps) == 1:
        return g
    best = max(comps, key=len)  # max() keeps the first on ties
    return induced_subgraph(g, best)


def _bridges(g: MolGraph) -> set[int]:
    """Bond indices that are bridges (iterative Tarjan lowlink)."""
    n = len(g.atoms)
    disc = [-1] * n
    low = [0] * n
    bridges: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(g.adjacency[root]))]
        while stack:
            u, parent_bond, it = stack[-1]
            advanced = False
            for v, k in it:
                if k == parent_bond:
                    continue
                if disc[v] < 0:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, k, iter(g.adjacency[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if advanced:
                continue
            stack.pop()
            if stack:
                p = stack[-1][0]
                low[p] = min(low[p], low[u])
                if low[u] > disc[p]:
                    bridges.add(parent_bond)
    return bridges


def perceive_rings(g: MolGraph) -> None:
    """Set ring flags: a bond is in a ring iff it is not a bridge.

    Aromatic bonds outside any ring (biaryl links) become single bonds.
    """
    bridges = _bridges(g)
    for atom in g.atoms:
        atom.ring_member = False
    for k, bond in enumerate(g.bonds):
        bond.ring_member = k not in bridges
        if not bond.ring_member and bond.order == AROMATIC:
            bond.order = SINGLE
        if bond.ring_member:
            g.atoms[bond.a].ring_member = True
            g.atoms[bond.b].ring_member = True


def _atom_token(atom: Atom) -> str:
    organic = atom.element in _ORGANIC
    if not atom.bracket and organic and atom.formal_charge == 0:
        return atom.element.lower() if atom.aromatic else atom.element
    sym = atom.element.lower() if atom.aromatic else atom.element
    out = "[" + sym
    if atom.explicit_h:
        out += "H" if atom.explicit_h == 1 else f"H{atom.explicit_h}"
    if atom.formal_charge:
        q = atom.formal_charge
        out += ("+" if q > 0 else "-") + (str(abs(q)) if abs(q) > 1 else "")
    return out + "]"


def to_smiles(g: MolGraph) -> str:
    """Emit a (non-canonical) SMILES string that re-parses to ``g``."""
    n = len(g.atoms)
    if n == 0:
        return ""
    visited = [False] * n
    order: list[int] = []
    children: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    tree_bonds: set[int] = set()
    for root in range(n):
        if visited[root]:
            continue
        stack = [(root, None)]
        while stack:
            u, via = stack.pop()
            if visited[u]:
                continue
            visited[u] = True
            order.append(u)
            if via is not None:
                parent, k = via
                children[parent].append((u, k))
                tree_bonds.add(k)
            for v, k in reversed(g.adjacency[u]):
                if not visited[v]:
                    stack.append((v, (u, k)))
    rank = {a: r for r, a in enumerate(order)}
    closures: list[list[int]] = [[] for _ in range(n)]
    for k, bond in enumerate(g.bonds):
        if k not in tree_bonds:
            closures[bond.a].append(k)
            closures[bond.b].append(k)

    def bond_symbol(k: int) -> str:
        bond = g.bonds[k]
        if bond.order == DOUBLE:
            return "="
        if bond.order == TRIPLE:
            return "#"
        if bond.order == SINGLE and g.atoms[bond.a].aromatic and g.atoms[bond.b].aromatic:
            return "-"
        return ""

    digits: dict[int, int] = {}
    free: list[int] = []
    next_digit = [1]

    def take_digit() -> int:
        if free:
            free.sort()
            return free.pop(0)
        d = next_digit[0]
        next_digit[0] += 1
        if d > 99:
            raise ValueError("more than 99 simultaneous ring closures")
        return d

    def digit_str(d: int) -> str:
        return str(d) if d < 10 else f"%{d:02d}"

    out: list[str] = []

    def emit(u: int) -> None:
        out.append(_atom_token(g.atoms[u]))
        for k in sorted(closures[u], key=lambda k: rank[g.bonds[k].a if g.bonds[k].b == u else g.bonds[k].b]):
            if k in digits:
                d = digits.pop(k)
                out.append(bond_symbol(k) + digit_str(d))
                free.append(d)
            else:
                d = take_digit()
                digits[k] = d
                out.append(bond_symbol(k) + digit_str(d))
        kids = children[u]
        for idx, (v, k) in enumerate(kids):
            last = idx == len(kids) - 1
            if not last:
                out.append("(")
            out.append(bond_symbol(k))
            emit(v)
            if not last:
                out.append(")")

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n + 100))
    try:
        first = True
        for root in order:
            if not any(root == c for kids in children for c, _ in kids):
                if not first:
                    out.append(".")
                emit(root)
                first = False
    finally:
        sys.setrecursionlimit(limit)
    return "".join(out)


# ---------------------------------------------------------------------------
# PDB


@dataclass(frozen=True)
class PDBAtom:
    name: str
    element: str
    residue_name: str
    residue_seq: int
    chain_id: str
    coords: tuple[float, float, float]


@dataclass
class ProteinStructure:
    atoms: list[PDBAtom]
    source_id: str = ""

    def __post_init__(self):
        if not self.atoms:
            raise PDBError("protein structure has no atoms")
        self.coords = np.array([a.coords for a in self.atoms], dtype=np.float64)
        if not np.isfinite(self.coords).all():
            raise PDBError("non-finite coordinates")

    def __len__(self) -> int:
        return len(self.atoms)

    def translated(self, shift) -> "ProteinStructure":
        shift = np.asarray(shift, dtype=np.float64)
        atoms = [PDBAtom(a.name, a.element, a.residue_name, a.residue_seq, a.chain_id,
                         tuple(float(c) for c in np.asarray(a.coords) + shift))
                 for a in self.atoms]
        return ProteinStructure(atoms, self.source_id)


_WATERS = frozenset({"HOH", "WAT", "DOD", "H2O", "TIP", "TIP3", "SOL"})


def _element_from_name(name: str) -> str:
    letters = "".join(ch for ch in name.strip() if ch.isalpha())
    return letters[:1].upper() if letters else ""


def parse_pdb(text: str, source_id: Optional[str] = None) -> ProteinStructure:
    """Read protein ATOM records from PDB text.

    HETATM records and waters are skipped and only the first MODEL is kept.
    For atoms with alternate locations the first conformer listed wins.
    """
    atoms: list[PDBAtom] = []
    seen: set[tuple] = set()
    header_id = ""
    models_seen = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        record = line[:6]
        if record == "HEADER" and len(line) >= 66:
            header_id = line[62:66].strip()
        elif record == "MODEL ":
            models_seen += 1
            if models_seen > 1:
                break
        elif record == "ENDMDL":
            break
        elif record == "ATOM  ":
            resname = line[17:20].strip()
            if resname in _WATERS:
                continue
            name = line[12:16]
            try:
                x = float(line[30:38])
                y = float(line[38:46])
                z = float(line[46:54])
            except ValueError:
                raise PDBError(f"line {lineno}: malformed coordinate field") from None
            if not all(map(math.isfinite, (x, y, z))):
                raise PDBError(f"line {lineno}: non-finite coordinate")
            try:
                resseq = int(line[22:26])
            except ValueError:
                raise PDBError(f"line {lineno}: malformed residue number") from None
            chain = line[21:22].strip()
            icode = line[26:27]
            if line[16:17].strip():
                key = (chain, resseq, icode, resname, name.strip())
                if key in seen:
                    continue  # later alternate location of an atom already kept
                seen.add(key)
            element = line[76:78].strip() if len(line) >= 78 else ""
            if not element:
                element = _element_from_name(name)
            element = element[:1].upper() + element[1:].lower()
            atoms.append(PDBAtom(name.strip(), element, resname, resseq, chain, (x, y, z)))
    if not atoms:
        raise PDBError("no ATOM records: empty structure")
    return ProteinStructure(atoms, source_id if source_id is not None else header_id)


def read_pdb(path) -> ProteinStructure:
    return parse_pdb(Path(path).read_text())


def format_pdb_atom(serial: int, atom: PDBAtom) -> str:
    """One fixed-column ATOM line (used by fixtures and synthetic data)."""
    name = atom.name if len(atom.name) >= 4 else f" {atom.name:<3}"
    x, y, z = atom.coords
    return (f"ATOM  {serial:5d} {name:<4} {atom.residue_name:>3} {atom.chain_id:1}"
            f"{atom.residue_seq:4d}    {x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}"
            f"          {atom.element:>2}")

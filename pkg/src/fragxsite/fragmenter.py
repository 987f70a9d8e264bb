"""BRICS bond cleavage and overlapping fragment enumeration.

Bonds matching a BRICS environment pair are cut to give building blocks;
fragments are the connected unions of up to ``max_blocks`` blocks, so
fragments overlap and every block appears in several of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

from .chemio import AROMATIC, DOUBLE, SINGLE, TRIPLE, MolGraph

DEFAULT_MAX_BLOCKS = 4
DEFAULT_MAX_FRAGMENTS = 32

_BOND_CLASSES = {
    "single": {SINGLE},
    "double": {DOUBLE},
    "triple": {TRIPLE},
    "aromatic": {AROMATIC},
    "single_or_aromatic": {SINGLE, AROMATIC},
    "any": {SINGLE, DOUBLE, TRIPLE, AROMATIC},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CleavableBond:
    bond: int
    brics_rule: str


@dataclass(frozen=True)
class Fragment:
    atom_indices: tuple[int, ...]
    bonds: tuple[int, ...]
    attachment_points: tuple[tuple[int, int], ...]
    blocks: tuple[int, ...]

    @property
    def block_count(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class RuleTable:
    environments: dict
    pairs: tuple[tuple[str, str], ...]

    @classmethod
    def from_dict(cls, data: dict) -> "RuleTable":
        envs = data["environments"]
        pairs = tuple((a, b) for a, b in data["pairs"])
        for a, b in pairs:
            if a not in envs or b not in envs:
                raise ConfigError(f"rule pair {a}-{b} names an undefined environment")
        return cls(envs, pairs)

    @classmethod
    def load(cls, path=None) -> "RuleTable":
        if path is None:
            return default_rules()
        return cls.from_dict(json.loads(Path(path).read_text()))


@lru_cache(maxsize=1)
def default_rules() -> RuleTable:
    text = resources.files("fragxsite").joinpath("data/brics_rules.json").read_text()
    return RuleTable.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# environment matching


def _has_double_o(g: MolGraph, i: int) -> bool:
    return any(g.bonds[k].order == DOUBLE and g.atoms[j].element == "O"
               for j, k in g.adjacency[i])


def _neighbor_ok(g: MolGraph, j: int, k: int, clause: dict) -> bool:
    bond = g.bonds[k]
    atom = g.atoms[j]
    if bond.order not in _BOND_CLASSES[clause.get("bond", "any")]:
        return False
    if "ring_bond" in clause and bond.ring_member != clause["ring_bond"]:
        return False
    if "element" in clause and atom.element not in clause["element"]:
        return False
    if "element_not" in clause and atom.element in clause["element_not"]:
        return False
    if "aromatic" in clause and atom.aromatic != clause["aromatic"]:
        return False
    if "has_double_o" in clause and _has_double_o(g, j) != clause["has_double_o"]:
        return False
    return True


def _assign(options: list[list[int]], used: set[int]) -> bool:
    # distinct neighbors must satisfy each clause (tiny backtracking search)
    if not options:
        return True
    for j in options[0]:
        if j not in used:
            used.add(j)
            if _assign(options[1:], used):
                return True
            used.discard(j)
    return False


def matches_environment(g: MolGraph, i: int, env: dict) -> bool:
    atom = g.atoms[i]
    if atom.element != env["element"]:
        return False
    if "aromatic" in env and atom.aromatic != env["aromatic"]:
        return False
    if "charge" in env and atom.formal_charge != env["charge"]:
        return False
    if "in_ring" in env and atom.ring_member != env["in_ring"]:
        return False
    degree = g.heavy_degree(i)
    if "degree" in env and degree not in env["degree"]:
        return False
    if degree in env.get("not_degree", ()):
        return False
    banned = set()
    for cls in env.get("no_bond_orders", ()):
        banned |= _BOND_CLASSES[cls]
    if any(g.bonds[k].order in banned for _, k in g.adjacency[i]):
        return False
    for clause in env.get("forbid_neighbors", ()):
        if any(_neighbor_ok(g, j, k, clause) for j, k in g.adjacency[i]):
            return False
    options = [[j for j, k in g.adjacency[i] if _neighbor_ok(g, j, k, clause)]
               for clause in env.get("neighbors", ())]
    return _assign(options, set())


def atom_environments(g: MolGraph, rules: Optional[RuleTable] = None) -> list[set[str]]:
    rules = rules or default_rules()
    return [{name for name, env in rules.environments.items() if matches_environment(g, i, env)}
            for i in range(len(g.atoms))]


def find_cleavable_bonds(g: MolGraph, rules: Optional[RuleTable] = None) -> list[CleavableBond]:
    """Acyclic single bonds whose two endpoint environments form a BRICS pair."""
    rules = rules or default_rules()
    envs = atom_environments(g, rules)
    out = []
    for k, bond in enumerate(g.bonds):
        if bond.order != SINGLE or bond.ring_member:
            continue
        if g.atoms[bond.a].element == "H" or g.atoms[bond.b].element == "H":
            continue
        ea, eb = envs[bond.a], envs[bond.b]
        for x, y in rules.pairs:
            if (x in ea and y in eb) or (y in ea and x in eb):
                out.append(CleavableBond(k, f"{x}-{y}"))
                break
    return out


# ---------------------------------------------------------------------------
# blocks and fragments


def building_blocks(g: MolGraph, cleavable: list[CleavableBond]) -> list[frozenset[int]]:
    """Connected components after deleting the cleavable bonds.

    Blocks are ordered by their smallest atom index.
    """
    cut = {c.bond for c in cleavable}
    seen = [False] * len(g.atoms)
    blocks = []
    for start in range(len(g.atoms)):
        if seen[start]:
            continue
        seen[start] = True
        stack, comp = [start], [start]
        while stack:
            u = stack.pop()
            for v, k in g.adjacency[u]:
                if k not in cut and not seen[v]:
                    seen[v] = True
                    stack.append(v)
                    comp.append(v)
        blocks.append(frozenset(comp))
    return blocks


def block_adjacency(g: MolGraph, blocks: list[frozenset[int]],
                    cleavable: list[CleavableBond]) -> list[set[int]]:
    owner = {}
    for b, atoms in enumerate(blocks):
        for a in atoms:
            owner[a] = b
    adj = [set() for _ in blocks]
    for c in cleavable:
        bond = g.bonds[c.bond]
        x, y = owner[bond.a], owner[bond.b]
        if x != y:
            adj[x].add(y)
            adj[y].add(x)
    return adj


def connected_subsets(adj: list[set[int]], max_size: int) -> set[frozenset[int]]:
    """All connected vertex subsets of size 1..max_size.

    Grows each subset only with neighbors larger than its seed vertex and
    dedupes with a set, so each subset is produced from its minimum vertex.
    """
    found: set[frozenset[int]] = set()
    for seed in range(len(adj)):
        frontier = {frozenset([seed])}
        found |= frontier
        for _ in range(max_size - 1):
            grown = set()
            for sub in frontier:
                for u in sub:
                    for v in adj[u]:
                        if v > seed and v not in sub:
                            grown.add(sub | {v})
            grown -= found
            found |= grown
            frontier = grown
            if not frontier:
                break
    return found


def make_fragment(g: MolGraph, blocks: list[frozenset[int]], chosen,
                  cut: set[int]) -> Fragment:
    atoms = set()
    for b in chosen:
        atoms |= blocks[b]
    bonds = []
    attach = []
    for k, bond in enumerate(g.bonds):
        ina, inb = bond.a in atoms, bond.b in atoms
        if ina and inb:
            bonds.append(k)
        elif k in cut and (ina or inb):
            attach.append((bond.a, bond.b) if ina else (bond.b, bond.a))
    return Fragment(tuple(sorted(atoms)), tuple(bonds), tuple(sorted(attach)), tuple(sorted(chosen)))


def enumerate_fragments(g: MolGraph, max_blocks: int = DEFAULT_MAX_BLOCKS,
                        rules: Optional[RuleTable] = None) -> list[Fragment]:
    """Every connected combination of 1..max_blocks building blocks.

    Sorted lexicographically by the sorted atom-index tuple.  A molecule with
    no cleavable bond gives a single fragment covering all atoms.
    """
    if max_blocks < 1:
        raise ConfigError(f"max_blocks must be >= 1, got {max_blocks}")
    cleavable = find_cleavable_bonds(g, rules)
    blocks = building_blocks(g, cleavable)
    adj = block_adjacency(g, blocks, cleavable)
    cut = {c.bond for c in cleavable}
    frags = {}
    for subset in connected_subsets(adj, max_blocks):
        frag = make_fragment(g, blocks, subset, cut)
        frags.setdefault(frag.atom_indices, frag)
    return [frags[key] for key in sorted(frags)]


def select_fragments(frags: list[Fragment], max_fragments: int = DEFAULT_MAX_FRAGMENTS) -> list[Fragment]:
    """Cap the fragment list, keeping larger block counts first.

    The kept fragments are returned in lexicographic atom-index order.
    """
    if max_fragments < 1:
        raise ConfigError(f"max_fragments must be >= 1, got {max_fragments}")
    if len(frags) <= max_fragments:
        return list(frags)
    ranked = sorted(frags, key=lambda f: (-f.block_count, f.atom_indices))
    return sorted(ranked[:max_fragments], key=lambda f: f.atom_indices)


def fragment_molecule(g: MolGraph, max_blocks: int = DEFAULT_MAX_BLOCKS,
                      max_fragments: int = DEFAULT_MAX_FRAGMENTS,
                      rules: Optional[RuleTable] = None) -> list[Fragment]:
    return select_fragments(enumerate_fragments(g, max_blocks, rules), max_fragments)

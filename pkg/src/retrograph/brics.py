"""BRICS fragmentation of a molecular graph into a fragment graph.

The sixteen environment classes and their allowed pairings (Degen et al.,
ChemMedChem 2008) are kept as data: ``ENVIRONMENTS`` maps a label to a
matcher over one atom, ``CLEAVAGE_RULES`` lists which label pairs may be
cut and with which bond order.  Ring bonds are never cut and charged
atoms never match an environment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .chem.graph import BondOrder, MolGraph

_A = BondOrder.AROMATIC
_S = BondOrder.SINGLE
_D = BondOrder.DOUBLE


def _aliphatic(g, i, *elements):
    a = g.atoms[i]
    return not a.aromatic and (not elements or a.element in elements)


def _aromatic(g, i, *elements):
    a = g.atoms[i]
    return a.aromatic and (not elements or a.element in elements)


def _nbrs(g, i, orders=None, ring=None):
    for j, b in g.adjacency[i]:
        bond = g.bonds[b]
        if orders is not None and bond.order not in orders:
            continue
        if ring is not None and bond.in_ring != ring:
            continue
        yield j


def _two_distinct(first: list[int], second: list[int]) -> bool:
    return any(x != y for x in first for y in second)


def _L1(g, i):
    return (
        _aliphatic(g, i, "C") and g.degree(i) == 3
        and any(g.atoms[j].element in ("C", "N", "O") for j in _nbrs(g, i, (_S, _A)))
        and any(_aliphatic(g, j, "O") for j in _nbrs(g, i, (_D,)))
    )


def _L3(g, i):
    return _aliphatic(g, i, "O") and g.degree(i) == 2 and any(
        g.atoms[j].element in ("C", "H") for j in _nbrs(g, i, (_S,), ring=False)
    )


def _L4(g, i):
    return (
        _aliphatic(g, i, "C") and g.degree(i) != 1
        and not any(True for _ in _nbrs(g, i, (_D,)))
        and any(g.atoms[j].element == "C" for j in _nbrs(g, i, (_S,), ring=False))
    )


def _L5(g, i):
    if not _aliphatic(g, i, "N") or g.degree(i) == 1:
        return False
    if any(True for _ in _nbrs(g, i, (_D,))):
        return False
    if any(g.atoms[j].element not in ("C", "S", "H") for j in _nbrs(g, i, (_S,))):
        return False
    if g.atom_in_ring(i):
        for j in _nbrs(g, i, ring=True):
            if _aliphatic(g, j, "C") and g.atom_in_ring(j) and any(_aliphatic(g, k, "O") for k in _nbrs(g, j, (_D,))):
                return False
    return True


def _L6(g, i):
    return (
        _aliphatic(g, i, "C") and g.degree(i) == 3 and not g.atom_in_ring(i)
        and any(_aliphatic(g, j, "O") for j in _nbrs(g, i, (_D,)))
        and any(g.atoms[j].element in ("C", "N", "O") for j in _nbrs(g, i, (_S,), ring=False))
    )


def _L7(g, i):
    return _aliphatic(g, i, "C") and g.degree(i) in (2, 3) and any(g.atoms[j].element == "C" for j in _nbrs(g, i, (_S,)))


def _L8(g, i):
    return (
        _aliphatic(g, i, "C") and not g.atom_in_ring(i) and g.degree(i) != 1
        and all(g.bonds[b].order == _S for _, b in g.adjacency[i])
    )


def _L9(g, i):
    if not _aromatic(g, i, "N"):
        return False
    ar = [j for j in _nbrs(g, i, (_A,)) if _aromatic(g, j, "C", "N", "O", "S")]
    return len(ar) >= 2


def _L10(g, i):
    if not _aliphatic(g, i, "N") or not g.atom_in_ring(i):
        return False
    ring_nb = list(_nbrs(g, i, ring=True))
    carbonyl = [j for j in ring_nb if _aliphatic(g, j, "C") and any(_aliphatic(g, k, "O") for k in _nbrs(g, j, (_D,)))]
    other = [j for j in ring_nb if _aliphatic(g, j, "C", "N", "O", "S")]
    return _two_distinct(carbonyl, other)


def _L11(g, i):
    return _aliphatic(g, i, "S") and g.degree(i) == 2 and any(
        g.atoms[j].element == "C" for j in _nbrs(g, i, (_S,), ring=False)
    )


def _L12(g, i):
    if not _aliphatic(g, i, "S") or g.degree(i) != 4:
        return False
    oxo = [j for j in _nbrs(g, i, (_D,)) if _aliphatic(g, j, "O")]
    return len(oxo) >= 2 and any(g.atoms[j].element == "C" for j in _nbrs(g, i, (_S, _A)))


def _L13(g, i):
    if not _aliphatic(g, i, "C"):
        return False
    ring_single = list(_nbrs(g, i, (_S,), ring=True))
    first = [j for j in ring_single if _aliphatic(g, j, "C", "N", "O", "S")]
    second = [j for j in ring_single if _aliphatic(g, j, "N", "O", "S")]
    return _two_distinct(first, second)


def _L14(g, i):
    if not _aromatic(g, i, "C"):
        return False
    ar = list(_nbrs(g, i, (_A,)))
    first = [j for j in ar if _aromatic(g, j, "C", "N", "O", "S")]
    second = [j for j in ar if _aromatic(g, j, "N", "O", "S")]
    return _two_distinct(first, second)


def _L15(g, i):
    if not _aliphatic(g, i, "C"):
        return False
    ring_c = [j for j in _nbrs(g, i, (_S,), ring=True) if _aliphatic(g, j, "C")]
    return len(ring_c) >= 2


def _L16(g, i):
    if not _aromatic(g, i, "C"):
        return False
    return sum(1 for j in _nbrs(g, i, (_A,)) if _aromatic(g, j, "C")) >= 2


ENVIRONMENTS: dict[str, Callable[[MolGraph, int], bool]] = {
    "1": _L1, "3": _L3, "4": _L4, "5": _L5, "6": _L6, "7a": _L7, "7b": _L7,
    "8": _L8, "9": _L9, "10": _L10, "11": _L11, "12": _L12, "13": _L13,
    "14": _L14, "14b": _L14, "15": _L15, "16": _L16, "16b": _L16,
}

CLEAVAGE_RULES: tuple[tuple[str, str, BondOrder], ...] = (
    ("1", "3", _S), ("1", "5", _S), ("1", "10", _S),
    ("3", "4", _S), ("3", "13", _S), ("3", "14", _S), ("3", "15", _S), ("3", "16", _S),
    ("4", "5", _S), ("4", "11", _S),
    ("5", "12", _S), ("5", "14", _S), ("5", "16", _S), ("5", "13", _S), ("5", "15", _S),
    ("6", "13", _S), ("6", "14", _S), ("6", "15", _S), ("6", "16", _S),
    ("7a", "7b", _D),
    ("8", "9", _S), ("8", "10", _S), ("8", "13", _S), ("8", "14", _S), ("8", "15", _S), ("8", "16", _S),
    ("9", "13", _S), ("9", "14", _S), ("9", "15", _S), ("9", "16", _S),
    ("10", "13", _S), ("10", "14", _S), ("10", "15", _S), ("10", "16", _S),
    ("11", "13", _S), ("11", "14", _S), ("11", "15", _S), ("11", "16", _S),
    ("13", "14", _S), ("13", "15", _S), ("13", "16", _S),
    ("14", "14", _S), ("14", "15", _S), ("14", "16", _S),
    ("15", "16", _S),
    ("16", "16", _S),
)


def environment_labels(g: MolGraph) -> list[frozenset[str]]:
    out = []
    for i, a in enumerate(g.atoms):
        if a.formal_charge != 0:
            out.append(frozenset())
        else:
            out.append(frozenset(lab for lab, match in ENVIRONMENTS.items() if match(g, i)))
    return out


def cleavable_bonds(g: MolGraph) -> list[int]:
    """Indices of acyclic bonds matching at least one rule (each listed once)."""
    labels = environment_labels(g)
    out = []
    for k, b in enumerate(g.bonds):
        if b.in_ring:
            continue
        li, lj = labels[b.i], labels[b.j]
        for e1, e2, order in CLEAVAGE_RULES:
            if b.order == order and ((e1 in li and e2 in lj) or (e2 in li and e1 in lj)):
                out.append(k)
                break
    return out


@dataclass(frozen=True)
class Fragment:
    atoms: tuple[int, ...]
    bonds: tuple[int, ...]


@dataclass(frozen=True)
class BricsGraph:
    nodes: tuple[Fragment, ...]
    edges: tuple[tuple[int, int, int], ...]  # (node u, node v, molecular bond index)
    membership: tuple[int, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def fragment(g: MolGraph) -> BricsGraph:
    """Cut every BRICS bond; fragments are the remaining connected pieces.

    Nodes are ordered by their smallest atom index.
    """
    cut = set(cleavable_bonds(g))
    membership = [-1] * g.n_atoms
    pieces: list[list[int]] = []
    for s in range(g.n_atoms):
        if membership[s] >= 0:
            continue
        idx = len(pieces)
        membership[s] = idx
        stack, piece = [s], []
        while stack:
            u = stack.pop()
            piece.append(u)
            for v, b in g.adjacency[u]:
                if b not in cut and membership[v] < 0:
                    membership[v] = idx
                    stack.append(v)
        pieces.append(sorted(piece))
    nodes = []
    for piece in pieces:
        inside = set(piece)
        bonds = tuple(k for k, b in enumerate(g.bonds) if b.i in inside and b.j in inside)
        nodes.append(Fragment(tuple(piece), bonds))
    edges = tuple(
        (membership[g.bonds[k].i], membership[g.bonds[k].j], k) for k in sorted(cut)
    )
    return BricsGraph(tuple(nodes), edges, tuple(membership))


def fragment_of(bg: BricsGraph, atom_index: int) -> int:
    if not 0 <= atom_index < len(bg.membership):
        raise IndexError(f"atom {atom_index} out of range")
    return bg.membership[atom_index]

"""Molecular graph data model."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Sequence

from .elements import ValenceError, allowed_valences, check_element, max_valence


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> int:
        return 1 if self is BondOrder.AROMATIC else int(self)


@dataclass(frozen=True)
class Atom:
    element: str
    formal_charge: int = 0
    explicit_h: int = 0
    aromatic: bool = False
    map_num: int | None = None

    def __post_init__(self):
        if not -2 <= self.formal_charge <= 2:
            raise ValueError(f"formal charge {self.formal_charge} outside [-2, 2]")
        if self.explicit_h < 0:
            raise ValueError("negative hydrogen count")
        if self.map_num is not None and self.map_num <= 0:
            raise ValueError("map numbers must be positive")


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    order: BondOrder
    in_ring: bool = False
    conjugated: bool = False

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.i, self.j)

    def other(self, k: int) -> int:
        return self.j if k == self.i else self.i


class MolGraph:
    """Atoms, bonds and per-atom neighbour lists.

    Build through :meth:`from_parts`, which validates the bond list and
    perceives ring membership and conjugation.  Instances are treated as
    immutable; every edit returns a new graph.
    """

    __slots__ = ("atoms", "bonds", "adjacency", "_pair_index", "__dict__")

    def __init__(self, atoms: Sequence[Atom], bonds: Sequence[Bond]):
        self.atoms: tuple[Atom, ...] = tuple(atoms)
        self.bonds: tuple[Bond, ...] = tuple(bonds)
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        pair_index: dict[tuple[int, int], int] = {}
        for b, bond in enumerate(self.bonds):
            i, j = bond.i, bond.j
            if i == j:
                raise ValueError("bond endpoints must be distinct")
            key = (i, j) if i < j else (j, i)
            if key in pair_index:
                raise ValueError(f"duplicate bond between atoms {i} and {j}")
            pair_index[key] = b
            adj[i].append((j, b))
            adj[j].append((i, b))
        self.adjacency: tuple[tuple[tuple[int, int], ...], ...] = tuple(tuple(a) for a in adj)
        self._pair_index = pair_index

    # construction -----------------------------------------------------
    @classmethod
    def from_parts(cls, atoms: Sequence[Atom], edges: Iterable[tuple[int, int, int]]) -> "MolGraph":
        for a in atoms:
            check_element(a.element)
        raw = [Bond(i, j, BondOrder(order)) for i, j, order in edges]
        g = cls(atoms, raw)
        return g._perceived()

    def _perceived(self) -> "MolGraph":
        ring = _ring_bonds(len(self.atoms), self.adjacency)
        unsat = [False] * len(self.atoms)
        for b in self.bonds:
            if b.order != BondOrder.SINGLE:
                unsat[b.i] = unsat[b.j] = True
        donor = [a.element in ("N", "O", "S") and a.formal_charge <= 0 for a in self.atoms]
        conj = [False] * len(self.bonds)
        for k, b in enumerate(self.bonds):
            if b.order == BondOrder.AROMATIC:
                conj[k] = True
            elif b.order == BondOrder.SINGLE:
                ui, uj = unsat[b.i], unsat[b.j]
                if (ui and uj) or (ui and donor[b.j]) or (uj and donor[b.i]):
                    conj[k] = True
        for k, b in enumerate(self.bonds):
            if b.order in (BondOrder.DOUBLE, BondOrder.TRIPLE) and not conj[k]:
                conj[k] = any(conj[c] for end in (b.i, b.j) for _, c in self.adjacency[end] if c != k)
        bonds = [replace(b, in_ring=k in ring, conjugated=conj[k]) for k, b in enumerate(self.bonds)]
        return MolGraph(self.atoms, bonds)

    # queries ----------------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def __len__(self) -> int:
        return len(self.atoms)

    def __repr__(self) -> str:
        from .smiles import write_smiles

        return f"MolGraph({write_smiles(self)!r})"

    def neighbors(self, i: int) -> list[int]:
        return [j for j, _ in self.adjacency[i]]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def bond_index(self, i: int, j: int) -> int | None:
        return self._pair_index.get((i, j) if i < j else (j, i))

    def bond_between(self, i: int, j: int) -> Bond | None:
        k = self.bond_index(i, j)
        return None if k is None else self.bonds[k]

    def bond_valence(self, i: int) -> tuple[int, int]:
        """(sum of non-aromatic bond orders, number of aromatic bonds)."""
        total = n_arom = 0
        for _, b in self.adjacency[i]:
            order = self.bonds[b].order
            if order == BondOrder.AROMATIC:
                n_arom += 1
            else:
                total += int(order)
        return total, n_arom

    def atom_in_ring(self, i: int) -> bool:
        return any(self.bonds[b].in_ring for _, b in self.adjacency[i])

    def total_valence(self, i: int) -> int:
        s, n_arom = self.bond_valence(i)
        return s + n_arom + self.atoms[i].explicit_h

    def atom_index_by_map(self) -> dict[int, int]:
        return {a.map_num: i for i, a in enumerate(self.atoms) if a.map_num is not None}

    @cached_property
    def rings(self) -> list[tuple[int, ...]]:
        from .rings import sssr

        return sssr(self)

    def components(self) -> list[list[int]]:
        seen = [False] * self.n_atoms
        comps = []
        for s in range(self.n_atoms):
            if seen[s]:
                continue
            stack, comp = [s], []
            seen[s] = True
            while stack:
                u = stack.pop()
                comp.append(u)
                for v, _ in self.adjacency[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(sorted(comp))
        return comps

    def edges(self) -> list[tuple[int, int, int]]:
        return [(b.i, b.j, int(b.order)) for b in self.bonds]

    # validity ---------------------------------------------------------
    def valence_problems(self) -> list[int]:
        bad = []
        for i, a in enumerate(self.atoms):
            top = max_valence(a.element, a.formal_charge)
            if top is None:
                continue
            if self.total_valence(i) > top:
                bad.append(i)
        return bad

    def check_valence(self) -> None:
        bad = self.valence_problems()
        if bad:
            a = self.atoms[bad[0]]
            raise ValenceError(
                f"atom {bad[0]} ({a.element}, charge {a.formal_charge}) has valence "
                f"{self.total_valence(bad[0])} above {allowed_valences(a.element, a.formal_charge)}"
            )

    # derived graphs ---------------------------------------------------
    def with_atoms(self, atoms: Sequence[Atom]) -> "MolGraph":
        assert len(atoms) == self.n_atoms
        return MolGraph(atoms, self.bonds)

    def permute(self, perm: Sequence[int]) -> "MolGraph":
        """Renumber so that old atom ``i`` becomes atom ``perm[i]``."""
        atoms: list[Atom | None] = [None] * self.n_atoms
        for old, new in enumerate(perm):
            atoms[new] = self.atoms[old]
        bonds = [replace(b, i=perm[b.i], j=perm[b.j]) for b in self.bonds]
        return MolGraph(atoms, bonds)  # type: ignore[arg-type]

    def subgraph(self, indices: Sequence[int]) -> tuple["MolGraph", dict[int, int]]:
        index = {old: new for new, old in enumerate(indices)}
        atoms = [self.atoms[i] for i in indices]
        edges = [(index[b.i], index[b.j], int(b.order)) for b in self.bonds if b.i in index and b.j in index]
        return MolGraph.from_parts(atoms, edges), index

    @staticmethod
    def disjoint_union(graphs: Sequence["MolGraph"]) -> "MolGraph":
        atoms: list[Atom] = []
        edges = []
        for g in graphs:
            off = len(atoms)
            atoms.extend(g.atoms)
            edges.extend((b.i + off, b.j + off, int(b.order)) for b in g.bonds)
        return MolGraph.from_parts(atoms, edges)

    def strip_maps(self) -> "MolGraph":
        return self.with_atoms([replace(a, map_num=None) for a in self.atoms])


def _ring_bonds(n: int, adjacency) -> set[int]:
    """Bond indices lying on a cycle (non-bridges), iterative Tarjan."""
    disc = [-1] * n
    low = [0] * n
    bridges: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(adjacency[root]))]
        while stack:
            u, parent_bond, it = stack[-1]
            advanced = False
            for v, b in it:
                if b == parent_bond:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, b, iter(adjacency[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if not advanced:
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        bridges.add(parent_bond)
    n_bonds = sum(len(a) for a in adjacency) // 2
    return {b for b in range(n_bonds) if b not in bridges}

"""Ring perception (SSSR) and alternation-based aromaticity."""

from __future__ import annotations

from collections import deque
from dataclasses import replace

from .graph import Atom, BondOrder, MolGraph


def _bfs_tree(g: MolGraph, root: int, ring_bond) -> tuple[list[int], list[int]]:
    parent = [-1] * g.n_atoms
    dist = [-1] * g.n_atoms
    dist[root] = 0
    q = deque([root])
    while q:
        u = q.popleft()
        for v, b in g.adjacency[u]:
            if ring_bond[b] and dist[v] < 0:
                dist[v] = dist[u] + 1
                parent[v] = u
                q.append(v)
    return parent, dist


def _path(parent: list[int], x: int) -> list[int]:
    out = [x]
    while parent[out[-1]] != -1:
        out.append(parent[out[-1]])
    return out


def sssr(g: MolGraph) -> list[tuple[int, ...]]:
    """Smallest set of smallest rings via Horton candidates + GF(2) elimination.

    Each ring is returned as an atom cycle in traversal order.
    """
    ring_bond = [b.in_ring for b in g.bonds]
    if not any(ring_bond):
        return []
    ring_atoms = sorted({k for b in g.bonds if b.in_ring for k in (b.i, b.j)})
    n_ring_bonds = sum(ring_bond)
    # cyclomatic number of the ring-bond subgraph
    seen: set[int] = set()
    n_comp = 0
    for s in ring_atoms:
        if s in seen:
            continue
        n_comp += 1
        stack = [s]
        seen.add(s)
        while stack:
            u = stack.pop()
            for v, b in g.adjacency[u]:
                if ring_bond[b] and v not in seen:
                    seen.add(v)
                    stack.append(v)
    target = n_ring_bonds - len(ring_atoms) + n_comp

    candidates: dict[int, tuple[int, ...]] = {}
    for r in ring_atoms:
        parent, dist = _bfs_tree(g, r, ring_bond)
        for k, b in enumerate(g.bonds):
            if not ring_bond[k]:
                continue
            x, y = b.i, b.j
            if dist[x] < 0 or dist[y] < 0 or parent[x] == y or parent[y] == x:
                continue
            px, py = _path(parent, x), _path(parent, y)
            if set(px) & set(py) != {r}:
                continue
            cycle = tuple(px[::-1]) + tuple(py[:-1])
            mask = 0
            for a, c in zip(cycle, cycle[1:] + cycle[:1]):
                mask |= 1 << g.bond_index(a, c)
            candidates.setdefault(mask, cycle)

    ordered = sorted(candidates.items(), key=lambda kv: (len(kv[1]), sorted(kv[1])))
    basis: dict[int, int] = {}  # pivot bit -> reduced vector
    rings = []
    for mask, cycle in ordered:
        v = mask
        while v:
            top = v.bit_length() - 1
            if top in basis:
                v ^= basis[top]
            else:
                basis[top] = v
                rings.append(cycle)
                break
        if len(rings) == target:
            break
    return rings


def _double_partner(g: MolGraph, i: int) -> list[int]:
    return [j for j, b in g.adjacency[i] if g.bonds[b].order == BondOrder.DOUBLE]


def perceive_aromaticity(g: MolGraph) -> MolGraph:
    """Mark Kekulé rings aromatic by an alternation check.

    Six-membered rings whose atoms each carry one double bond inside the
    ring (or into an already aromatic neighbour ring) and five-membered
    rings with two ring double bonds plus one lone-pair heteroatom become
    aromatic.  Input that is already lowercase is left untouched.
    """
    rings = g.rings
    if not rings:
        return g
    aromatic_atoms = {i for i, a in enumerate(g.atoms) if a.aromatic}
    aromatic_bonds = {k for k, b in enumerate(g.bonds) if b.order == BondOrder.AROMATIC}
    changed = True
    done: set[int] = set()
    while changed:
        changed = False
        for r_idx, ring in enumerate(rings):
            if r_idx in done or len(ring) not in (5, 6):
                continue
            ring_set = set(ring)
            ring_bonds = [g.bond_index(a, b) for a, b in zip(ring, ring[1:] + ring[:1])]
            if all(k in aromatic_bonds for k in ring_bonds):
                done.add(r_idx)
                continue
            if _ring_alternates(g, ring, ring_set, ring_bonds, aromatic_atoms, aromatic_bonds):
                aromatic_atoms.update(ring)
                aromatic_bonds.update(ring_bonds)
                done.add(r_idx)
                changed = True
    if not aromatic_bonds - {k for k, b in enumerate(g.bonds) if b.order == BondOrder.AROMATIC}:
        return g
    atoms = [replace(a, aromatic=True) if i in aromatic_atoms else a for i, a in enumerate(g.atoms)]
    edges = [(b.i, b.j, int(BondOrder.AROMATIC) if k in aromatic_bonds else int(b.order)) for k, b in enumerate(g.bonds)]
    return MolGraph.from_parts(atoms, edges)


def _ring_alternates(g, ring, ring_set, ring_bonds, aromatic_atoms, aromatic_bonds) -> bool:
    orders = [g.bonds[k].order for k in ring_bonds]
    if any(o == BondOrder.TRIPLE for o in orders):
        return False
    if len(ring) == 6:
        for i in ring:
            partners = _double_partner(g, i)
            if len(partners) == 1 and partners[0] in ring_set:
                continue
            if not partners and i in aromatic_atoms:
                continue
            return False
        return True
    # five-membered: exactly two ring double bonds and one lone-pair atom
    n_double = sum(o == BondOrder.DOUBLE for o in orders)
    if n_double != 2:
        return False
    lone = [i for i in ring if not _double_partner(g, i) and i not in aromatic_atoms]
    if len(lone) != 1:
        return False
    a: Atom = g.atoms[lone[0]]
    if a.element in ("O", "S", "Se") and a.formal_charge == 0:
        return True
    if a.element == "N" and a.formal_charge == 0 and (a.explicit_h == 1 or g.degree(lone[0]) == 3):
        return True
    return False

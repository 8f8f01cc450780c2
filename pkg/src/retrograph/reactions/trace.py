"""Attachment traces: how leaving groups are rebuilt on synthons.

A *unit* is one vocabulary entry: an anchor atom (map number 1) plus new
atoms.  Three shapes occur:

* bond unit: anchor - bond - one new acyclic atom;
* linked ring unit: anchor - bond - a whole new ring system;
* fused ring unit: a ring system that contains the anchor itself.

Units are encoded as canonical SMILES with the anchor written as a
bracket atom ``[X:1]``.  New atoms carry the hydrogen count they have at
creation time, i.e. their final count plus the bond orders of units
attached to them later, so replay only ever subtracts hydrogens.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from ..chem.graph import Atom, MolGraph
from ..chem.smiles import canonical_ranks, parse_smiles, write_smiles
from .center import CenterLabel, derive_synthons
from .record import ReactionRecord


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class Unit:
    """Parsed vocabulary unit; atom 0 of ``graph`` order is not assumed to be
    the anchor, ``anchor`` holds its index."""

    encoding: str

    @cached_property
    def graph(self) -> MolGraph:
        return parse_smiles(self.encoding)

    @cached_property
    def anchor(self) -> int:
        for i, a in enumerate(self.graph.atoms):
            if a.map_num == 1:
                return i
        raise ValueError(f"unit {self.encoding} has no anchor")

    @property
    def anchor_element(self) -> str:
        return self.graph.atoms[self.anchor].element

    @property
    def anchor_aromatic(self) -> bool:
        return self.graph.atoms[self.anchor].aromatic

    @cached_property
    def new_atoms(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.graph.n_atoms) if i != self.anchor)

    @cached_property
    def anchor_cost(self) -> int:
        """Hydrogens the anchor gives up (aromatic bonds count one)."""
        return sum(self.graph.bonds[b].order.valence for _, b in self.graph.adjacency[self.anchor])

    @property
    def is_ring(self) -> bool:
        return any(b.in_ring for b in self.graph.bonds)


@dataclass(frozen=True)
class Step:
    atom: int
    unit: str | None = None  # None means Stop

    @property
    def is_stop(self) -> bool:
        return self.unit is None

    def __repr__(self) -> str:
        return f"Stop({self.atom})" if self.unit is None else f"Attach({self.atom}, {self.unit!r})"


@dataclass(frozen=True)
class AttachmentTrace:
    """Steps over the whole synthon set; atom indices refer to the
    intermediate graph (synthon atoms first, then new atoms in creation
    order).  ``components`` gives the synthon component of every step's
    root so the trace can be split per synthon."""

    steps: tuple[Step, ...]
    components: tuple[int, ...] = ()

    def per_synthon(self) -> dict[int, list[Step]]:
        out: dict[int, list[Step]] = {}
        for s, c in zip(self.steps, self.components):
            out.setdefault(c, []).append(s)
        return out

    @property
    def units(self) -> list[str]:
        return [s.unit for s in self.steps if s.unit is not None]

    def __len__(self) -> int:
        return len(self.steps)


def initial_frontier(synthon: MolGraph, centers) -> list[int]:
    """DFS stack of center atoms; the lowest canonical rank sits on top."""
    ranks = canonical_ranks(synthon.strip_maps())
    uniq = sorted(set(centers), key=ranks.__getitem__)
    return uniq[::-1]


def apply_unit(g: MolGraph, anchor: int, unit: Unit) -> tuple[MolGraph, list[int]]:
    """Attach ``unit`` at atom ``anchor``; returns the new graph and the new
    atom indices in unit order."""
    a = g.atoms[anchor]
    if a.element != unit.anchor_element:
        raise ValueError(f"unit anchor {unit.anchor_element} does not match {a.element}")
    if a.explicit_h < unit.anchor_cost:
        raise ValueError(f"atom {anchor} has {a.explicit_h} H, unit needs {unit.anchor_cost}")
    ug = unit.graph
    index = {unit.anchor: anchor}
    atoms = list(g.atoms)
    atoms[anchor] = Atom(a.element, a.formal_charge, a.explicit_h - unit.anchor_cost, a.aromatic, a.map_num)
    new = []
    for k in unit.new_atoms:
        u = ug.atoms[k]
        index[k] = len(atoms)
        new.append(len(atoms))
        atoms.append(Atom(u.element, u.formal_charge, u.explicit_h, u.aromatic, None))
    edges = g.edges() + [(index[b.i], index[b.j], int(b.order)) for b in ug.bonds]
    return MolGraph.from_parts(atoms, edges), new


def push_new_atoms(frontier: list[int], new_atoms) -> list[int]:
    """New atoms go on top so the first one in unit order is visited next."""
    return frontier + list(new_atoms)[::-1]


def replay_trace(synthon: MolGraph, centers, trace: AttachmentTrace, units: dict | None = None) -> MolGraph:
    """Rebuild the reactant graph by executing ``trace`` on the synthons."""
    units = units if units is not None else {}
    g = synthon
    frontier = initial_frontier(synthon, centers)
    for step in trace.steps:
        if not frontier or frontier[-1] != step.atom:
            raise ValueError(f"step {step} does not act on the frontier top")
        if step.is_stop:
            frontier.pop()
            continue
        unit = units.get(step.unit) or Unit(step.unit)
        g, new = apply_unit(g, step.atom, unit)
        frontier = push_new_atoms(frontier, new)
    if frontier:
        raise ValueError("trace ended with a non-empty frontier")
    return g


# extraction -------------------------------------------------------------

def _leaving_system(rg: MolGraph, start: int, placed) -> list[int]:
    """Ring-bond closure of ``start`` through atoms not yet placed."""
    out, stack = {start}, [start]
    while stack:
        u = stack.pop()
        for v, b in rg.adjacency[u]:
            if rg.bonds[b].in_ring and v not in out and v not in placed:
                out.add(v)
                stack.append(v)
    return sorted(out)


def extract_trace(r: ReactionRecord, label: CenterLabel, synthon: MolGraph | None = None) -> AttachmentTrace:
    """Teacher-forcing trace for a labelled record.

    Leaving atoms are grown depth first from the center atoms.  At each
    frontier atom, ring units come before bond units and ties go to the
    lower canonical rank of the entry atom in the reactant graph.
    """
    if not label.supported:
        raise DecompositionError(f"unsupported label: {label.reason}")
    if synthon is None:
        synthon = derive_synthons(r.product, label)
    rg = r.reactants
    # the unit partition does not depend on visiting order, so a first pass
    # yields the hydrogens each atom gives up later
    _, _, cost = _grow(r, label, synthon, {})
    steps, roots, _ = _grow(r, label, synthon, cost)
    m = r.atom_map
    for i in range(synthon.n_atoms):
        s, ra = synthon.atoms[i], rg.atoms[m[i]]
        if s.formal_charge != ra.formal_charge or s.aromatic != ra.aromatic:
            raise DecompositionError(f"atom {i} charge/aromaticity differs from the reactant")
        if s.explicit_h - cost.get(m[i], 0) != ra.explicit_h:
            raise DecompositionError(f"hydrogen bookkeeping mismatch at atom {i}")
    return AttachmentTrace(tuple(steps), tuple(roots))


def _grow(r: ReactionRecord, label: CenterLabel, synthon: MolGraph, extra_h: dict):
    rg, m = r.reactants, r.atom_map
    n_ig = synthon.n_atoms
    to_ig = {m[i]: i for i in range(n_ig)}
    to_rg = {i: m[i] for i in range(n_ig)}
    rranks = canonical_ranks(rg.strip_maps())
    comp_of = {}
    for c, comp in enumerate(synthon.components()):
        for i in comp:
            comp_of[i] = c
    frontier = initial_frontier(synthon, label.center_atoms())
    root = {i: comp_of[i] for i in frontier}
    steps: list[Step] = []
    roots: list[int] = []
    cost: dict[int, int] = {}
    while frontier:
        u = frontier[-1]
        ru = to_rg[u]
        options = []
        for rv, b in rg.adjacency[ru]:
            if rv in to_ig:
                continue
            if rg.atom_in_ring(rv):
                members = [ru] + _leaving_system(rg, rv, to_ig)
                options.append((0, rranks[rv], members, rg.bonds[b].in_ring))
            else:
                options.append((1, rranks[rv], [ru, rv], False))
        roots.append(root[u])
        if not options:
            steps.append(Step(u))
            frontier.pop()
            continue
        options.sort(key=lambda o: (o[0], o[1]))
        _, _, members, fused = options[0]
        new_r = set(members[1:])
        for x in new_r:
            for y, _ in rg.adjacency[x]:
                if y in to_ig and y != ru:
                    raise DecompositionError("leaving atoms bonded to two placed atoms")
        ug, order = _unit_graph(rg, members, fused, extra_h)
        enc = write_smiles(ug)
        check = Unit(enc).graph
        if [a.explicit_h for a in check.atoms] != [ug.atoms[k].explicit_h for k in order]:
            raise DecompositionError(f"unit {enc} does not round-trip")
        steps.append(Step(u, enc))
        new_ig = []
        for k in order:
            if k == 0:
                continue
            x = members[k]
            to_ig[x] = n_ig
            to_rg[n_ig] = x
            root[n_ig] = root[u]
            new_ig.append(n_ig)
            n_ig += 1
        cost[ru] = cost.get(ru, 0) + sum(
            rg.bonds[b].order.valence for y, b in rg.adjacency[ru] if y in new_r
        )
        frontier = push_new_atoms(frontier, new_ig)
    if len(to_ig) != rg.n_atoms:
        raise DecompositionError("leaving atoms not reachable from the center atoms")
    return steps, roots, cost


def _unit_graph(rg: MolGraph, members: list[int], fused: bool, extra_h: dict) -> tuple[MolGraph, list[int]]:
    """Induced unit subgraph (anchor first) and its canonical write order."""
    anchor = rg.atoms[members[0]]
    local = {x: k for k, x in enumerate(members)}
    atoms = [Atom(anchor.element, 0, 0, anchor.aromatic if fused else False, 1)]
    for x in members[1:]:
        a = rg.atoms[x]
        atoms.append(Atom(a.element, a.formal_charge, a.explicit_h + extra_h.get(x, 0), a.aromatic, None))
    edges = [(local[b.i], local[b.j], int(b.order)) for b in rg.bonds if b.i in local and b.j in local]
    ug = MolGraph.from_parts(atoms, edges)
    _, orders = write_smiles(ug, return_order=True)
    return ug, orders[0]

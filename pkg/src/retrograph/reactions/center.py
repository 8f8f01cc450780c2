"""Reaction-center labels and product -> synthon editing."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from ..chem.elements import default_valence
from ..chem.graph import Atom, BondOrder, MolGraph
from .record import ReactionRecord

BF, BC, A, UNSUPPORTED = "BF", "BC", "A", "Unsupported"


class InvalidLabel(ValueError):
    pass


class ChemicallyInvalid(ValueError):
    pass


def _key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class CenterLabel:
    """A typed reaction center in product atom indices.

    ``induced_changes`` holds ((k, l), original order) for neighbour bonds of
    a BF center; ``charge_changes`` holds (atom, delta) with delta the
    reactant charge minus the product charge.
    """

    kind: str
    bond: tuple[int, int] | None = None
    atom: int | None = None
    original_order: int | None = None
    induced_changes: tuple[tuple[tuple[int, int], int], ...] = ()
    charge_changes: tuple[tuple[int, int], ...] = ()
    reason: str = ""

    @property
    def supported(self) -> bool:
        return self.kind != UNSUPPORTED

    def center_atoms(self) -> tuple[int, ...]:
        if self.kind in (BF, BC):
            return self.bond
        if self.kind == A:
            return (self.atom,)
        return ()

    def acp_atoms(self) -> list[int]:
        """Atoms whose charge change is predicted: the center plus endpoints of
        changed neighbour bonds, in first-seen order."""
        out = list(self.center_atoms())
        for (k, l), _ in self.induced_changes:
            for x in (k, l):
                if x not in out:
                    out.append(x)
        return out


def _unsupported(reason: str) -> CenterLabel:
    return CenterLabel(UNSUPPORTED, reason=reason)


def extract_center_label(r: ReactionRecord) -> CenterLabel:
    """Classify a mapped reaction by diffing bonds between mapped atoms."""
    p, rg, m = r.product, r.reactants, r.atom_map
    inv = {v: k for k, v in m.items()}
    pb = {_key(b.i, b.j): b.order for b in p.bonds}
    rb = {}
    for b in rg.bonds:
        if b.i in inv and b.j in inv:
            rb[_key(inv[b.i], inv[b.j])] = b.order
    new = sorted(k for k in pb if k not in rb)
    broken = sorted(k for k in rb if k not in pb)
    changed = sorted(k for k in pb if k in rb and pb[k] != rb[k])
    if broken:
        return _unsupported("bond between mapped atoms broken")
    if len(new) > 1:
        return _unsupported("multiple new bonds")

    leaving_at = [i for i in range(p.n_atoms) if any(j not in inv for j in rg.neighbors(m[i]))]
    if new:
        center = new[0]
        if pb[center] == BondOrder.AROMATIC:
            return _unsupported("aromatic bond formed")
        induced = []
        for k in changed:
            if not set(k) & set(center):
                return _unsupported("bond change away from the center")
            if BondOrder.AROMATIC in (pb[k], rb[k]):
                return _unsupported("aromatic bond order change")
            induced.append((k, int(rb[k])))
        label = CenterLabel(BF, bond=center, induced_changes=tuple(induced))
    elif changed:
        if len(changed) > 1:
            return _unsupported("multiple bond order changes")
        k = changed[0]
        if BondOrder.AROMATIC in (pb[k], rb[k]):
            return _unsupported("aromatic bond order change")
        label = CenterLabel(BC, bond=k, original_order=int(rb[k]))
    else:
        if len(leaving_at) != 1:
            return _unsupported(f"{len(leaving_at)} atoms lose a fragment")
        label = CenterLabel(A, atom=leaving_at[0])

    allowed = set(label.acp_atoms())
    charges = []
    for i in range(p.n_atoms):
        d = rg.atoms[m[i]].formal_charge - p.atoms[i].formal_charge
        if d == 0:
            continue
        if i not in allowed:
            return _unsupported("charge change outside the center")
        if abs(d) > 1:
            return _unsupported("charge change larger than one electron")
        charges.append((i, d))
    return replace(label, charge_changes=tuple(charges))


def edit_product(
    product: MolGraph,
    kind: str,
    bond: tuple[int, int] | None = None,
    atom: int | None = None,
    original_order: int | None = None,
    induced_changes: Sequence[tuple[tuple[int, int], int]] = (),
    charge_changes: Sequence[tuple[int, int]] = (),
) -> MolGraph:
    """Apply center edits to a product; atom indices are preserved.

    Hydrogens are rebalanced by the bond-order difference at each endpoint
    and by the shift of the default valence under a charge change.
    """
    h = [a.explicit_h for a in product.atoms]
    q = [a.formal_charge for a in product.atoms]
    orders = {_key(b.i, b.j): int(b.order) for b in product.bonds}

    def set_order(k, new):
        if k not in orders:
            raise InvalidLabel(f"bond {k} not in graph")
        old = orders[k]
        if old == BondOrder.AROMATIC or new == BondOrder.AROMATIC:
            raise ChemicallyInvalid(f"aromatic bond {k} cannot change order")
        for x in k:
            h[x] += old - new
        if new == 0:
            del orders[k]
        else:
            orders[k] = new

    if kind == BF:
        set_order(_key(*bond), 0)
    elif kind == BC:
        set_order(_key(*bond), original_order)
    elif kind == A:
        if atom is None or not 0 <= atom < product.n_atoms:
            raise InvalidLabel(f"atom {atom} not in graph")
    else:
        raise InvalidLabel(f"cannot edit a {kind} center")
    for k, o in induced_changes:
        set_order(_key(*k), o)
    for i, d in charge_changes:
        if d == 0:
            continue
        el = product.atoms[i].element
        old_v, new_v = default_valence(el, q[i]), default_valence(el, q[i] + d)
        if old_v is None or new_v is None or not -2 <= q[i] + d <= 2:
            raise ChemicallyInvalid(f"charge {q[i] + d} not allowed on {el}")
        q[i] += d
        h[i] += new_v - old_v
    if min(h, default=0) < 0:
        bad = h.index(min(h))
        raise ChemicallyInvalid(f"negative hydrogen count on atom {bad}")
    atoms = [Atom(a.element, q[i], h[i], a.aromatic, a.map_num) for i, a in enumerate(product.atoms)]
    g = MolGraph.from_parts(atoms, [(i, j, o) for (i, j), o in orders.items()])
    if g.valence_problems():
        raise ChemicallyInvalid(f"valence violated at atoms {g.valence_problems()}")
    return g


def derive_synthons(product: MolGraph, label: CenterLabel) -> MolGraph:
    if not label.supported:
        raise InvalidLabel(f"unsupported label: {label.reason}")
    return edit_product(
        product, label.kind, label.bond, label.atom, label.original_order,
        label.induced_changes, label.charge_changes,
    )

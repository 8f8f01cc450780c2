"""Atom-mapped reaction records."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field, replace

from ..chem.graph import MolGraph
from ..chem.smiles import StereoDiscarded, parse_smiles, write_smiles


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class ReactionRecord:
    """Product, kept reactant components and the product -> reactant atom map.

    Reactant components without any product-mapped atom are reagents and
    are dropped at parse time (counted in ``n_reagents``).
    """

    product: MolGraph
    reactants: MolGraph
    atom_map: dict = field(hash=False)
    reaction_type: int | None = None
    n_reagents: int = 0
    text: str = ""

    def leaving_atoms(self) -> list[int]:
        mapped = set(self.atom_map.values())
        return [i for i in range(self.reactants.n_atoms) if i not in mapped]

    def reactant_smiles(self) -> str:
        """Canonical, unmapped reactant-set SMILES (the ground-truth key)."""
        return write_smiles(self.reactants.strip_maps())

    def product_smiles(self) -> str:
        return write_smiles(self.product.strip_maps())


_TYPE_PREFIX = re.compile(r"^\s*(\d{1,2})\s*,\s*(.*)$")


def _split_line(line: str) -> tuple[int | None, str, str]:
    text = line.strip()
    rtype = None
    m = _TYPE_PREFIX.match(text)
    if m:
        rtype = int(m.group(1))
        if not 1 <= rtype <= 10:
            raise ValueError(f"reaction type {rtype} outside 1..10")
        text = m.group(2)
    parts = text.split(">")
    if len(parts) != 3:
        raise SyntaxError(f"expected 'reactants>>product', got {line!r}")
    lhs, _agents, rhs = parts
    if not lhs.strip() or not rhs.strip():
        raise SyntaxError(f"empty side in reaction {line!r}")
    return rtype, lhs.strip(), rhs.strip().split()[0]


def parse_reaction(line: str, quiet: bool = True) -> ReactionRecord:
    """Parse ``[type,]reactants>>product``.

    Every product atom must carry a map number that also occurs on the
    reactant side.  Reactant atoms whose map number is absent from the
    product are treated as unmapped (leaving) atoms.
    """
    rtype, lhs, rhs = _split_line(line)
    with warnings.catch_warnings():
        if quiet:
            warnings.simplefilter("ignore", StereoDiscarded)
        try:
            product = parse_smiles(rhs)
            reactants = parse_smiles(lhs)
        except SyntaxError as exc:
            if "duplicate atom-map" in str(exc):
                raise MappingError(str(exc)) from exc
            raise
    pmap = {}
    for i, a in enumerate(product.atoms):
        if a.map_num is None:
            raise MappingError(f"product atom {i} ({a.element}) has no map number")
        pmap[a.map_num] = i
    rmap = reactants.atom_index_by_map()
    missing = sorted(set(pmap) - set(rmap))
    if missing:
        raise MappingError(f"product map numbers {missing} absent from reactants")

    # drop reagent components and foreign map numbers
    keep, dropped = [], 0
    for comp in reactants.components():
        if any(reactants.atoms[i].map_num in pmap for i in comp):
            keep.extend(comp)
        else:
            dropped += 1
    keep.sort()
    if dropped:
        reactants, _ = reactants.subgraph(keep)
    atoms = [a if a.map_num in pmap else replace(a, map_num=None) for a in reactants.atoms]
    reactants = reactants.with_atoms(atoms)
    rmap = reactants.atom_index_by_map()
    atom_map = {pmap[m]: rmap[m] for m in pmap}
    return ReactionRecord(product, reactants, atom_map, rtype, dropped, line.strip())


def read_reactions(path, skip_errors: bool = True) -> tuple[list[ReactionRecord], int]:
    """Read one reaction per line; returns (records, number of rejected lines)."""
    records, bad = [], 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            try:
                records.append(parse_reaction(line))
            except (SyntaxError, ValueError):
                if not skip_errors:
                    raise
                bad += 1
    return records, bad

"""SMILES reading and canonical writing.

Supported: organic-subset and bracket atoms (charge, H count, atom map),
ring closures (digits and ``%nn``), branches, ``- = # :`` bonds, aromatic
lowercase atoms and ``.`` separated components.  Stereo marks and
isotopes are accepted and dropped with a warning.
"""

from __future__ import annotations

import re
import warnings

import numpy as np

from ..kernels import refine_ranks
from .elements import (
    AROMATIC_SYMBOLS,
    ELEMENT_INDEX,
    ORGANIC_SUBSET,
    UnknownElement,
    ValenceError,
    implicit_hydrogens,
)
from .graph import Atom, BondOrder, MolGraph
from .rings import perceive_aromaticity


class SmilesSyntaxError(SyntaxError):
    pass


class StereoDiscarded(UserWarning):
    pass


_TOKEN = re.compile(
    r"(\[[^\]]*\])|(Cl|Br|[BCNOPSFI])|(se|as|[bcnops])|(%\d\d|\d)|([-=#:/\\])|([().])"
)
_BRACKET = re.compile(
    r"^\[(\d+)?([A-Z][a-z]?|se|as|[bcnops])(@{1,2}(?:TH\d|AL\d|SP\d|TB\d{1,2}|OH\d{1,2})?)?"
    r"(H\d*)?([+-]{1,2}|[+-]\d)?(?::(\d+))?\]$"
)
_BOND_SYMBOL = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE, ":": BondOrder.AROMATIC}


def _parse_charge(text: str | None) -> int:
    if not text:
        return 0
    sign = 1 if text[0] == "+" else -1
    if len(text) == 1:
        return sign
    if text[1] in "+-":
        return 2 * sign
    return sign * int(text[1:])


def parse_smiles(text: str, perceive: bool = True) -> MolGraph:
    """Parse a SMILES string into a :class:`MolGraph`.

    Implicit hydrogens of organic-subset atoms are filled from standard
    valences; bracket atoms keep their literal H count.  With ``perceive``
    Kekulé rings that alternate are converted to aromatic form.
    """
    if not text or not text.strip():
        raise SmilesSyntaxError("empty SMILES")
    text = text.strip()
    # (element, charge, h or None, aromatic, map)
    atoms: list[list] = []
    edges: dict[tuple[int, int], BondOrder | None] = {}
    explicit_aromatic: set[tuple[int, int]] = set()
    branch: list[int] = []
    rings: dict[str, tuple[int, str | None]] = {}
    prev: int | None = None
    pending: str | None = None
    stereo = False
    pos = 0

    def add_edge(a: int, b: int, symbol: str | None):
        key = (a, b) if a < b else (b, a)
        if a == b or key in edges:
            raise SmilesSyntaxError(f"invalid or duplicate bond between atoms {a} and {b}")
        edges[key] = _BOND_SYMBOL[symbol] if symbol else None
        if symbol == ":":
            explicit_aromatic.add(key)

    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise SmilesSyntaxError(f"unexpected character {text[pos]!r} at position {pos}")
        tok = m.group(0)
        pos = m.end()
        if m.group(1) or m.group(2) or m.group(3):
            if m.group(1):
                bm = _BRACKET.match(tok)
                if not bm:
                    raise SmilesSyntaxError(f"malformed bracket atom {tok}")
                iso, sym, chiral, hs, charge, amap = bm.groups()
                if iso or chiral:
                    stereo = True
                aromatic = sym in AROMATIC_SYMBOLS
                element = AROMATIC_SYMBOLS.get(sym, sym)
                h = 0 if not hs else (1 if hs == "H" else int(hs[1:]))
                spec = [element, _parse_charge(charge), h, aromatic, int(amap) if amap and int(amap) > 0 else None]
            elif m.group(2):
                spec = [tok, 0, None, False, None]
            else:
                spec = [AROMATIC_SYMBOLS[tok], 0, None, True, None]
            if spec[0] not in ELEMENT_INDEX:
                raise UnknownElement(f"element {spec[0]!r} outside the configured alphabet")
            idx = len(atoms)
            atoms.append(spec)
            if prev is not None:
                add_edge(prev, idx, pending)
            elif pending is not None:
                raise SmilesSyntaxError("bond symbol without preceding atom")
            prev, pending = idx, None
        elif m.group(4):
            if prev is None:
                raise SmilesSyntaxError("ring closure before any atom")
            label = tok
            if label in rings:
                other, sym = rings.pop(label)
                if sym and pending and sym != pending:
                    raise SmilesSyntaxError(f"conflicting bond symbols on ring closure {label}")
                add_edge(other, prev, pending or sym)
            else:
                rings[label] = (prev, pending)
            pending = None
        elif m.group(5):
            if tok in "/\\":
                stereo = True
                tok = "-"
            if pending is not None:
                raise SmilesSyntaxError("two consecutive bond symbols")
            pending = tok
        else:
            if tok == "(":
                if prev is None:
                    raise SmilesSyntaxError("branch without preceding atom")
                branch.append(prev)
            elif tok == ")":
                if not branch or pending is not None:
                    raise SmilesSyntaxError("unbalanced parenthesis")
                prev = branch.pop()
            else:
                if branch or pending is not None:
                    raise SmilesSyntaxError("dot inside branch or after bond symbol")
                prev = None
    if branch:
        raise SmilesSyntaxError("unclosed branch")
    if rings:
        raise SmilesSyntaxError(f"unclosed ring bond(s) {sorted(rings)}")
    if pending is not None:
        raise SmilesSyntaxError("dangling bond symbol")
    if stereo:
        warnings.warn(f"stereo/isotope marks discarded in {text}", StereoDiscarded, stacklevel=2)

    maps = [a[4] for a in atoms if a[4] is not None]
    if len(maps) != len(set(maps)):
        raise SmilesSyntaxError("duplicate atom-map number")

    resolved = []
    for (a, b), order in edges.items():
        if order is None:
            order = BondOrder.AROMATIC if atoms[a][3] and atoms[b][3] else BondOrder.SINGLE
        resolved.append((a, b, int(order)))
    skeleton = MolGraph.from_parts([Atom(e, c, 0, ar, mp) for e, c, _, ar, mp in atoms], resolved)
    # implicit aromatic bonds outside rings (biaryl links) are single
    fixed = []
    for b in skeleton.bonds:
        key = (b.i, b.j) if b.i < b.j else (b.j, b.i)
        order = b.order
        if order == BondOrder.AROMATIC and not b.in_ring and key not in explicit_aromatic:
            order = BondOrder.SINGLE
        fixed.append((b.i, b.j, int(order)))
    skeleton = MolGraph.from_parts(skeleton.atoms, fixed)
    final_atoms = []
    for i, (element, charge, h, aromatic, mp) in enumerate(atoms):
        if h is None:
            s, n_arom = skeleton.bond_valence(i)
            h = implicit_hydrogens(element, charge, s, n_arom)
        final_atoms.append(Atom(element, charge, h, aromatic, mp))
    g = skeleton.with_atoms(final_atoms)
    if perceive:
        g = perceive_aromaticity(g)
    g.check_valence()
    return g


# canonical ordering ------------------------------------------------------

def _csr(g: MolGraph):
    indptr = np.zeros(g.n_atoms + 1, dtype=np.int64)
    indices, codes = [], []
    for i in range(g.n_atoms):
        for j, b in g.adjacency[i]:
            indices.append(j)
            codes.append(int(g.bonds[b].order))
        indptr[i + 1] = len(indices)
    return indptr, np.asarray(indices, dtype=np.int64), np.asarray(codes, dtype=np.int64)


def atom_invariants(g: MolGraph) -> list[tuple]:
    return [
        (ELEMENT_INDEX[a.element], a.formal_charge, g.degree(i), a.explicit_h, a.aromatic, g.atom_in_ring(i), a.map_num or 0)
        for i, a in enumerate(g.atoms)
    ]


def _dense(values) -> np.ndarray:
    uniq = sorted(set(values))
    lookup = {v: k for k, v in enumerate(uniq)}
    return np.asarray([lookup[v] for v in values], dtype=np.int64)


def canonical_ranks(g: MolGraph) -> list[int]:
    """Distinct canonical ranks 0..n-1.

    Iterative neighbourhood refinement from (element, charge, degree,
    H-count, ...) classes; remaining ties are split one atom at a time
    (lowest index in the lowest tied class) and refined again.
    """
    n = g.n_atoms
    if n == 0:
        return []
    indptr, indices, codes = _csr(g)
    ranks = refine_ranks(_dense(atom_invariants(g)), indptr, indices, codes)
    while len(set(ranks.tolist())) < n:
        counts = np.bincount(ranks)
        tied = int(np.flatnonzero(counts > 1)[0])
        pick = int(np.flatnonzero(ranks == tied)[0])
        split = ranks * 2
        split[pick] -= 1
        ranks = refine_ranks(_dense(split.tolist()), indptr, indices, codes)
    return ranks.tolist()


# writing -----------------------------------------------------------------

def _atom_token(g: MolGraph, i: int) -> str:
    a = g.atoms[i]
    sym = a.element
    if a.aromatic:
        sym = sym.lower()
    if a.element in ORGANIC_SUBSET and a.formal_charge == 0 and a.map_num is None:
        s, n_arom = g.bond_valence(i)
        if implicit_hydrogens(a.element, 0, s, n_arom) == a.explicit_h:
            return sym
    out = "[" + sym
    if a.explicit_h:
        out += "H" if a.explicit_h == 1 else f"H{a.explicit_h}"
    if a.formal_charge:
        q = a.formal_charge
        out += ("+" if q > 0 else "-") + (str(abs(q)) if abs(q) > 1 else "")
    if a.map_num is not None:
        out += f":{a.map_num}"
    return out + "]"


def _bond_token(g: MolGraph, i: int, j: int) -> str:
    b = g.bond_between(i, j)
    ai, aj = g.atoms[i].aromatic, g.atoms[j].aromatic
    if b.order == BondOrder.SINGLE:
        return "-" if ai and aj else ""
    if b.order == BondOrder.DOUBLE:
        return "="
    if b.order == BondOrder.TRIPLE:
        return "#"
    return "" if ai and aj and b.in_ring else ":"


def _write_component(g: MolGraph, ranks: list[int], start: int, order_out: list[int]) -> str:
    visited: set[int] = set()
    children: dict[int, list[int]] = {}
    closures_open: dict[int, list[int]] = {}
    closures_close: dict[int, list[int]] = {}
    visit_order: dict[int, int] = {}

    def dfs(u: int, parent: int | None):
        visited.add(u)
        visit_order[u] = len(visit_order)
        children[u] = []
        for v in sorted(g.neighbors(u), key=ranks.__getitem__):
            if v == parent:
                continue
            if v in visited:
                if visit_order[v] < visit_order[u] and u not in closures_open.get(v, []):
                    closures_open.setdefault(v, []).append(u)
                    closures_close.setdefault(u, []).append(v)
                continue
            children[u].append(v)
            dfs(v, u)

    dfs(start, None)
    free: list[int] = []
    next_digit = [1]
    assigned: dict[tuple[int, int], int] = {}

    def take() -> int:
        if free:
            free.sort()
            return free.pop(0)
        d = next_digit[0]
        next_digit[0] += 1
        return d

    def label(d: int) -> str:
        return str(d) if d < 10 else f"%{d}"

    parts: list[str] = []

    def emit(u: int, parent: int | None):
        if parent is not None:
            parts.append(_bond_token(g, parent, u))
        parts.append(_atom_token(g, u))
        order_out.append(u)
        # closures ending here first, then newly opened ones
        for v in sorted(closures_close.get(u, []), key=lambda v: visit_order[v]):
            d = assigned.pop((v, u))
            parts.append(label(d))
            free.append(d)
        for v in sorted(closures_open.get(u, []), key=lambda v: visit_order[v]):
            d = take()
            assigned[(u, v)] = d
            parts.append(_bond_token(g, u, v) + label(d))
        kids = children[u]
        for k, v in enumerate(kids):
            if k < len(kids) - 1:
                parts.append("(")
                emit(v, u)
                parts.append(")")
            else:
                emit(v, u)

    emit(start, None)
    return "".join(parts)


def write_smiles(g: MolGraph, return_order: bool = False):
    """Canonical SMILES; components sorted lexicographically and joined by ``.``.

    With ``return_order`` also returns, per component string, the atom
    indices in the order they were written.
    """
    ranks = canonical_ranks(g)
    pieces = []
    for comp in g.components():
        start = min(comp, key=ranks.__getitem__)
        order: list[int] = []
        pieces.append((_write_component(g, ranks, start, order), order))
    pieces.sort(key=lambda p: p[0])
    text = ".".join(p[0] for p in pieces)
    if return_order:
        return text, [p[1] for p in pieces]
    return text


def canonical_smiles(text: str) -> str:
    return write_smiles(parse_smiles(text))


def read_smiles_file(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.split()[0] for line in fh if line.strip() and not line.startswith("#")]


__all__ = [
    "SmilesSyntaxError",
    "StereoDiscarded",
    "ValenceError",
    "atom_invariants",
    "canonical_ranks",
    "canonical_smiles",
    "parse_smiles",
    "write_smiles",
]

"""Element table, valence rules and hydrogen arithmetic."""

from __future__ import annotations

# Fixed one-hot alphabet: the elements seen in atom-mapped patent reactions.
ELEMENTS = (
    "C", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B",
    "Si", "Se", "Sn", "Li", "Na", "K", "Mg", "Zn", "Cu", "Pd",
    "Fe", "Al", "Ca", "Cs", "Mn", "Ge", "As", "Ag", "Pt", "H",
)
ELEMENT_INDEX = {e: i for i, e in enumerate(ELEMENTS)}

ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
AROMATIC_SYMBOLS = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S", "se": "Se", "as": "As"}

# (row, column) in the main-group block; column 0 = boron group ... 4 = halogens.
_MAIN_GROUP = {
    "B": (2, 0), "C": (2, 1), "N": (2, 2), "O": (2, 3), "F": (2, 4),
    "Al": (3, 0), "Si": (3, 1), "P": (3, 2), "S": (3, 3), "Cl": (3, 4),
    "Ge": (4, 1), "As": (4, 2), "Se": (4, 3), "Br": (4, 4),
    "Sn": (5, 1), "I": (5, 4),
}
_SECOND_ROW = ((3,), (4,), (3,), (2,), (1,))
_HEAVY_ROWS = ((3,), (4,), (3, 5), (2, 4, 6), (1, 3, 5, 7))

_METAL_VALENCE = {
    "Li": (1,), "Na": (1,), "K": (1,), "Cs": (1,), "Ag": (1,),
    "Mg": (2,), "Zn": (2,), "Ca": (2,), "Mn": (2, 3, 4, 7),
    "Cu": (1, 2), "Fe": (2, 3), "Pd": (0, 2, 4), "Pt": (2, 4), "H": (1,),
}


class UnknownElement(ValueError):
    pass


class ValenceError(ValueError):
    pass


def check_element(symbol: str) -> None:
    if symbol not in ELEMENT_INDEX:
        raise UnknownElement(f"element {symbol!r} outside the configured alphabet")


def allowed_valences(element: str, charge: int = 0) -> tuple[int, ...] | None:
    """Allowed total valences for an element at a given formal charge.

    Charged main-group atoms take the valences of their isoelectronic
    neighbour (N+ behaves like C, O- like F).  Returns None when the
    element has no fixed rule (metals with a charge).
    """
    if element in _MAIN_GROUP:
        row, col = _MAIN_GROUP[element]
        col -= charge
        if not 0 <= col <= 4:
            return None
        table = _SECOND_ROW if row == 2 else _HEAVY_ROWS
        return table[col]
    if element in _METAL_VALENCE:
        if charge:
            return None
        return _METAL_VALENCE[element]
    return None


def default_valence(element: str, charge: int = 0) -> int | None:
    vals = allowed_valences(element, charge)
    return vals[0] if vals else None


def implicit_hydrogens(element: str, charge: int, bond_valence: int, n_aromatic: int) -> int:
    """SMILES-style implicit hydrogen count.

    ``bond_valence`` is the sum of non-aromatic bond orders, ``n_aromatic``
    the number of aromatic bonds.  Aromatic atoms count one extra unit for
    the ring double bond and only use their lowest valence.
    """
    vals = allowed_valences(element, charge)
    if not vals:
        return 0
    if n_aromatic:
        used = bond_valence + n_aromatic + 1
        return max(0, vals[0] - used)
    for v in vals:
        if v >= bond_valence:
            return v - bond_valence
    return 0


def max_valence(element: str, charge: int = 0) -> int | None:
    vals = allowed_valences(element, charge)
    return max(vals) if vals else None

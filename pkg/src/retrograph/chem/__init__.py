"""Molecular graphs, SMILES I/O, features and fingerprints."""

from .elements import ELEMENTS, UnknownElement, ValenceError
from .graph import Atom, Bond, BondOrder, MolGraph
from .smiles import SmilesSyntaxError, canonical_ranks, canonical_smiles, parse_smiles, write_smiles

__all__ = [
    "ELEMENTS",
    "Atom",
    "Bond",
    "BondOrder",
    "MolGraph",
    "SmilesSyntaxError",
    "UnknownElement",
    "ValenceError",
    "canonical_ranks",
    "canonical_smiles",
    "parse_smiles",
    "write_smiles",
]

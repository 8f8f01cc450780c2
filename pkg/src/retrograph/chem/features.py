"""Atom and bond feature vectors for message passing."""

from __future__ import annotations

import numpy as np

from .elements import ELEMENT_INDEX, ELEMENTS, UnknownElement
from .graph import BondOrder, MolGraph

N_ELEMENTS = len(ELEMENTS)
VALENCE_SLOT = N_ELEMENTS
CHARGE_SLOT = N_ELEMENTS + 1
H_SLOT = N_ELEMENTS + 2
RING_SLOT = N_ELEMENTS + 3
AROMATIC_SLOT = N_ELEMENTS + 4
ATOM_BASE_DIM = N_ELEMENTS + 5
N_REACTION_TYPES = 10
BOND_DIM = 7


def atom_dim(type_known: bool = False) -> int:
    return ATOM_BASE_DIM + (N_REACTION_TYPES if type_known else 0)


def featurize(g: MolGraph, reaction_type: int | None = None, dtype=np.float64):
    """Per-atom and per-bond feature matrices.

    Atom rows: element one-hot, total valence, formal charge, H count,
    in-ring flag, aromatic flag, then a 10-way reaction-type one-hot when
    ``reaction_type`` (1..10) is given.  Bond rows: order one-hot
    (single, double, triple, aromatic), conjugated, aromatic, in-ring.
    """
    width = atom_dim(reaction_type is not None)
    x = np.zeros((g.n_atoms, width), dtype=dtype)
    for i, a in enumerate(g.atoms):
        k = ELEMENT_INDEX.get(a.element)
        if k is None:
            raise UnknownElement(a.element)
        x[i, k] = 1.0
        x[i, VALENCE_SLOT] = g.total_valence(i)
        x[i, CHARGE_SLOT] = a.formal_charge
        x[i, H_SLOT] = a.explicit_h
        x[i, RING_SLOT] = float(g.atom_in_ring(i))
        x[i, AROMATIC_SLOT] = float(a.aromatic)
    if reaction_type is not None:
        if not 1 <= reaction_type <= N_REACTION_TYPES:
            raise ValueError(f"reaction type {reaction_type} outside 1..10")
        x[:, ATOM_BASE_DIM + reaction_type - 1] = 1.0
    xb = np.zeros((g.n_bonds, BOND_DIM), dtype=dtype)
    for k, b in enumerate(g.bonds):
        xb[k, int(b.order) - 1] = 1.0
        xb[k, 4] = float(b.conjugated)
        xb[k, 5] = float(b.order == BondOrder.AROMATIC)
        xb[k, 6] = float(b.in_ring)
    return x, xb

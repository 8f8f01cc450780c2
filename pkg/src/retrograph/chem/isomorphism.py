"""Graph isomorphism respecting element, charge, hydrogens and bond order."""

from __future__ import annotations

import networkx as nx
from networkx.algorithms import isomorphism as iso

from .graph import MolGraph


def to_networkx(g: MolGraph, with_maps: bool = False) -> nx.Graph:
    G = nx.Graph()
    for i, a in enumerate(g.atoms):
        label = (a.element, a.formal_charge, a.explicit_h, a.aromatic, a.map_num if with_maps else None)
        G.add_node(i, label=label)
    for b in g.bonds:
        G.add_edge(b.i, b.j, order=int(b.order))
    return G


def is_isomorphic(g1: MolGraph, g2: MolGraph, with_maps: bool = False) -> bool:
    if g1.n_atoms != g2.n_atoms or g1.n_bonds != g2.n_bonds:
        return False
    matcher = iso.GraphMatcher(
        to_networkx(g1, with_maps),
        to_networkx(g2, with_maps),
        node_match=lambda x, y: x["label"] == y["label"],
        edge_match=lambda x, y: x["order"] == y["order"],
    )
    return matcher.is_isomorphic()

"""Hashed circular (Morgan) fingerprints and Tanimoto similarity."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from .elements import ELEMENT_INDEX
from .graph import MolGraph


class WidthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class MorganFingerprint:
    bits: frozenset[int]
    width: int = 2048
    radius: int = 2

    @property
    def popcount(self) -> int:
        return len(self.bits)


def stable_hash(values) -> int:
    """32-bit hash of an integer sequence, stable across processes."""
    data = struct.pack(f"<{len(values)}q", *values)
    return int.from_bytes(hashlib.blake2b(data, digest_size=4).digest(), "little")


def atom_seed(g: MolGraph, i: int) -> int:
    a = g.atoms[i]
    return stable_hash((ELEMENT_INDEX[a.element], g.degree(i), a.explicit_h, a.formal_charge, int(g.atom_in_ring(i)), int(a.aromatic)))


def environment_ids(g: MolGraph, radius: int) -> list[list[int]]:
    """Identifiers per iteration: ``ids[r][i]`` describes atom i out to r bonds."""
    ids = [[atom_seed(g, i) for i in range(g.n_atoms)]]
    for r in range(1, radius + 1):
        prev = ids[-1]
        cur = []
        for i in range(g.n_atoms):
            nb = sorted((int(g.bonds[b].order), prev[j]) for j, b in g.adjacency[i])
            flat = [r, prev[i]]
            for order, h in nb:
                flat.extend((order, h))
            cur.append(stable_hash(flat))
        ids.append(cur)
    return ids


def morgan_fingerprint(g: MolGraph, radius: int = 2, width: int = 2048) -> MorganFingerprint:
    if radius < 0 or width < 1:
        raise ValueError("radius must be >= 0 and width >= 1")
    bits = {h % width for layer in environment_ids(g, radius) for h in layer}
    return MorganFingerprint(frozenset(bits), width, radius)


def tanimoto(a: MorganFingerprint, b: MorganFingerprint) -> float:
    if a.width != b.width:
        raise WidthMismatch(f"{a.width} != {b.width}")
    union = len(a.bits | b.bits)
    if union == 0:
        return 1.0
    return len(a.bits & b.bits) / union

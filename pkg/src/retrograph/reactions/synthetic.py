"""Synthetic atom-mapped reactions assembled from building blocks.

Stands in for patent reaction data when none is supplied.  Each template
joins SMILES blocks whose first atom is the reactive one; atom identities
are tracked through string composition so the atom map is exact.
Running the module writes the bundled data files.
"""

from __future__ import annotations

import argparse
import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..chem.graph import Atom
from ..chem.smiles import StereoDiscarded, parse_smiles, write_smiles

_ATOM = re.compile(r"\[[^\]]+\]|Br|Cl|[BCNOPSFI]|[bcnops]")
_FIRST = re.compile(r"(\[[^\]]+\]|Br|Cl|[BCNOPSFI]|[bcnops])((?:%\d\d|\d)*)")

ARYL = [
    "c1ccccc1", "c1ccc(F)cc1", "c1ccc(Cl)cc1", "c1ccc(C)cc1", "c1ccc(OC)cc1",
    "c1cccc(C(F)(F)F)c1", "c1ccc(C#N)cc1", "c1ccncc1", "c1cccnc1", "c1ccc2ccccc2c1",
    "c1ccsc1", "c1ccc(C(=O)OC)cc1", "c1cnccn1", "c1ccc2c(c1)OCO2", "c1ccc(Br)cc1",
    "c1ccco1", "c1cc(C)cc(C)c1", "c1ccc(N(C)C)cc1",
]
ELECTROPHILIC_ARYL = [
    "c1ccc([N+](=O)[O-])cc1", "c1ncccn1", "c1ccc(C#N)cc1", "c1ccc(C(F)(F)F)nc1", "c1nccs1",
]
ALKYL = [
    "C", "CC", "CCC", "CC(C)C", "CCc1ccccc1", "Cc1ccccc1", "CCOC", "CC1CC1",
    "Cc1ccc(F)cc1", "CC(=O)OCC", "C1CCOC1", "CCCC", "CC#N", "Cc1ccccn1",
]
AMINE = [
    "NC", "NCC", "N1CCOCC1", "N1CCCCC1", "N1CCN(C)CC1", "NCc1ccccc1", "Nc1ccccc1",
    "N(C)C", "NC1CC1", "NCCOC", "Nc1ccc(F)cc1", "N1CCCC1", "NCC(C)C", "NC1CCCCC1",
    "Nc1ccncc1", "N1CCC(O)CC1",
]
PRIMARY_AMINE = ["NC", "NCC", "NCc1ccccc1", "NC1CC1", "NCCOC", "NCC(C)C", "NC1CCCCC1"]
ACYL = [
    "C(=O)c1ccccc1", "C(=O)C", "C(=O)CC", "C(=O)c1ccc(Cl)cc1", "C(=O)C1CCCCC1", "C(=O)c1ccco1",
    "C(=O)CCc1ccccc1", "C(=O)c1cccnc1", "C(=O)c1ccc(OC)cc1", "C(=O)COc1ccccc1", "C(=O)C(C)C",
    "C(=O)c1ccc(F)cc1", "C(=O)C1CC1",
]
OXY = ["Oc1ccccc1", "OC", "OCC", "OCc1ccccc1", "Oc1ccc(C)cc1", "OCCN(C)C", "Oc1ccc(Cl)cc1", "OC(C)C", "Oc1cccnc1"]
SULFONYL = ["S(=O)(=O)c1ccc(C)cc1", "S(=O)(=O)C", "S(=O)(=O)c1ccccc1", "S(=O)(=O)c1cccs1", "S(=O)(=O)CC"]
HALIDE = ["Br", "Cl", "I"]


@dataclass(frozen=True)
class Piece:
    smiles: str
    ids: tuple[int, ...]


class _Ids:
    def __init__(self):
        self.next_id = 0
        self.next_ring = 10

    def piece(self, smiles: str) -> Piece:
        n = len(_ATOM.findall(smiles))
        ids = tuple(range(self.next_id, self.next_id + n))
        self.next_id += n
        return Piece(self._shift(smiles), ids)

    def _shift(self, smiles: str) -> str:
        off = self.next_ring
        self.next_ring += 10
        if self.next_ring > 90:
            self.next_ring = 10
        out, pos = [], 0
        while pos < len(smiles):
            ch = smiles[pos]
            if ch == "[":
                end = smiles.index("]", pos)
                out.append(smiles[pos:end + 1])
                pos = end + 1
            elif ch.isdigit():
                out.append(f"%{int(ch) + off:02d}")
                pos += 1
            else:
                out.append(ch)
                pos += 1
        return "".join(out)


def cat(a: Piece, b: Piece, bond: str = "") -> Piece:
    return Piece(a.smiles + bond + b.smiles, a.ids + b.ids)


def branch(a: Piece, b: Piece, bond: str = "") -> Piece:
    m = _FIRST.match(a.smiles)
    head = m.group(0)
    return Piece(head + "(" + bond + b.smiles + ")" + a.smiles[m.end():], a.ids[:1] + b.ids + a.ids[1:])


def same(p: Piece, smiles: str) -> Piece:
    """Same atoms as ``p`` in the same order, different bonds/charges."""
    n = len(_ATOM.findall(smiles))
    assert n == len(p.ids), (smiles, p)
    return Piece(smiles, p.ids)


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


# templates: each returns (reaction type, reactant pieces, product piece)

def _n_alkylation(rng, ids):
    am, al = ids.piece(_pick(rng, AMINE)), ids.piece(_pick(rng, ALKYL))
    lg = ids.piece(_pick(rng, HALIDE + ["CS(=O)(=O)O"]))
    return 1, [cat(lg, al), am], branch(am, al)


def _snar(rng, ids):
    am, ar = ids.piece(_pick(rng, AMINE)), ids.piece(_pick(rng, ELECTROPHILIC_ARYL))
    lg = ids.piece(_pick(rng, ["F", "Cl"]))
    return 1, [cat(lg, ar), am], branch(am, ar)


def _williamson(rng, ids):
    ox, al = ids.piece(_pick(rng, OXY)), ids.piece(_pick(rng, ALKYL))
    lg = ids.piece(_pick(rng, HALIDE))
    return 1, [cat(lg, al), ox], branch(ox, al)


def _reductive_amination(rng, ids):
    am, ar = ids.piece(_pick(rng, AMINE)), ids.piece(_pick(rng, ARYL))
    o, c = ids.piece("O"), ids.piece("C")
    return 1, [cat(cat(o, c, "="), ar), am], branch(am, cat(c, ar))


def _amide(rng, ids):
    ac, am = ids.piece(_pick(rng, ACYL)), ids.piece(_pick(rng, AMINE))
    lg = ids.piece(_pick(rng, ["O", "Cl", "O", "c1ccc2c(c1)nnn2O"]))
    return 2, [cat(lg, ac), am], branch(ac, am)


def _ester(rng, ids):
    ac, ox = ids.piece(_pick(rng, ACYL)), ids.piece(_pick(rng, OXY))
    lg = ids.piece("Cl")
    return 2, [cat(lg, ac), ox], branch(ac, ox)


def _sulfonamide(rng, ids):
    su, am = ids.piece(_pick(rng, SULFONYL)), ids.piece(_pick(rng, AMINE))
    lg = ids.piece("Cl")
    return 2, [cat(lg, su), am], branch(su, am)


def _suzuki(rng, ids):
    a1, a2 = ids.piece(_pick(rng, ARYL)), ids.piece(_pick(rng, ARYL))
    hal = ids.piece(_pick(rng, ["Br", "I", "Cl"]))
    boron = ids.piece(_pick(rng, ["OB(O)", "CC1(C)OB(OC1(C)C)"]))
    return 3, [cat(hal, a1), cat(boron, a2)], branch(a1, a2)


def _grignard(rng, ids):
    ar, al = ids.piece(_pick(rng, ARYL)), ids.piece(_pick(rng, ["C", "CC", "CCC", "C1CC1", "CC(C)C"]))
    o, c = ids.piece("O"), ids.piece("C")
    mg = ids.piece(_pick(rng, ["Br[Mg]", "Cl[Mg]"]))
    return 3, [cat(cat(o, c, "="), ar), cat(mg, al)], cat(o, branch(cat(c, ar), al))


def _double_alkylation(rng, ids):
    am = ids.piece(_pick(rng, PRIMARY_AMINE))
    a1, a2 = ids.piece(_pick(rng, ["C", "CC", "CCC"])), ids.piece(_pick(rng, ["C", "CC", "CCC"]))
    l1, l2 = ids.piece("Br"), ids.piece("Br")
    return 4, [am, cat(l1, a1), cat(l2, a2)], branch(branch(am, a1), a2)


def _boc_protection(rng, ids):
    am = ids.piece(_pick(rng, AMINE))
    lg, boc = ids.piece("CC(C)(C)OC(=O)O"), ids.piece("C(=O)OC(C)(C)C")
    return 5, [am, cat(lg, boc)], branch(am, boc)


def _boc_deprotection(rng, ids):
    am = ids.piece(_pick(rng, AMINE))
    boc = ids.piece(_pick(rng, ["C(=O)OC(C)(C)C", "C(=O)OCc1ccccc1", "C(=O)C(F)(F)F"]))
    return 6, [branch(am, boc)], am


def _ester_hydrolysis(rng, ids):
    ac, o = ids.piece(_pick(rng, ACYL)), ids.piece("O")
    alk = ids.piece(_pick(rng, ["C", "CC", "CC(C)(C)", "c1ccccc1C"]))
    return 6, [cat(cat(alk, o), ac)], cat(o, ac)


def _ether_cleavage(rng, ids):
    ar, o = ids.piece(_pick(rng, ARYL)), ids.piece("O")
    alk = ids.piece(_pick(rng, ["C", "c1ccccc1C", "COC"]))
    return 6, [cat(cat(alk, o), ar)], cat(o, ar)


def _ketone_reduction(rng, ids):
    ar = ids.piece(_pick(rng, ARYL))
    core = ids.piece(_pick(rng, ["CC(=O)", "CCC(=O)", "O=C"]))
    red = same(core, {"CC(=O)": "CC(O)", "CCC(=O)": "CCC(O)", "O=C": "OC"}[_unshift(core.smiles)])
    return 7, [cat(core, ar)], cat(red, ar)


def _unshift(s):
    return re.sub(r"%\d\d", "1", s)


def _nitro_reduction(rng, ids):
    ar = ids.piece(_pick(rng, ARYL))
    o1, n, o2 = ids.piece("[O-]"), ids.piece("[N+]"), ids.piece("O")
    nitro = Piece("[O-][N+](=O)", o1.ids + n.ids + o2.ids)
    return 7, [cat(nitro, ar)], cat(Piece("N", n.ids), ar)


def _hydrogenation(rng, ids):
    ar = ids.piece(_pick(rng, ARYL))
    kind = _pick(rng, ["C=C", "C#C", "N#C", "CC=C"])
    core = ids.piece(kind)
    sat = same(core, {"C=C": "CC", "C#C": "CC", "N#C": "NC", "CC=C": "CCC"}[kind])
    return 7, [cat(core, ar)], cat(sat, ar)


def _oxidation(rng, ids):
    ar = ids.piece(_pick(rng, ARYL))
    kind = _pick(rng, ["CC(O)", "OC", "CCC(O)"])
    core = ids.piece(kind)
    ox = same(core, {"CC(O)": "CC(=O)", "OC": "O=C", "CCC(O)": "CCC(=O)"}[kind])
    return 8, [cat(core, ar)], cat(ox, ar)


def _quaternization(rng, ids):
    base = ids.piece(_pick(rng, ["CN(C)C", "CN(C)CC"]))
    al = ids.piece(_pick(rng, ["C", "CC", "Cc1ccccc1", "CCC"]))
    lg = ids.piece(_pick(rng, ["I", "Br"]))
    n_atoms = len(base.ids)
    charged = "C[N+](C)(C)" if n_atoms == 4 else "C[N+](C)(CC)"
    return 9, [base, cat(lg, al)], cat(same(base, charged), al)


def _mesylation(rng, ids):
    ox = ids.piece(_pick(rng, ["OCC", "OC", "OCc1ccccc1", "OCCC", "OC(C)C"]))
    su = ids.piece(_pick(rng, SULFONYL))
    lg = ids.piece("Cl")
    return 9, [ox, cat(lg, su)], branch(ox, su)


def _aza_michael(rng, ids):
    am = ids.piece(_pick(rng, AMINE))
    acc = ids.piece(_pick(rng, ["C=CC(=O)OC", "C=CC#N", "C=CC(=O)OCC", "C=CS(=O)(=O)C"]))
    sat = same(acc, acc.smiles.replace("C=C", "CC", 1))
    return 9, [am, acc], branch(am, sat)


def _bromination(rng, ids):
    ar = ids.piece(_pick(rng, ["c1ccc(OC)cc1", "c1ccc(N(C)C)cc1", "c1ccsc1", "c1ccccc1", "c1ccc(C)cc1"]))
    b1, b2 = ids.piece("Br"), ids.piece("Br")
    src = _pick(rng, ["BrBr", "NBS"])
    if src == "BrBr":
        reag = cat(b1, b2)
    else:
        succ = ids.piece("N1C(=O)CCC1=O")
        reag = cat(b2, succ)
    return 10, [ar, reag], branch(ar, b2)


TEMPLATES = [
    (_n_alkylation, 6), (_snar, 4), (_williamson, 4), (_reductive_amination, 4),
    (_amide, 10), (_ester, 3), (_sulfonamide, 4),
    (_suzuki, 6), (_grignard, 2),
    (_double_alkylation, 1),
    (_boc_protection, 2), (_boc_deprotection, 5), (_ester_hydrolysis, 4), (_ether_cleavage, 2),
    (_ketone_reduction, 2), (_nitro_reduction, 2), (_hydrogenation, 2),
    (_oxidation, 2), (_quaternization, 1), (_mesylation, 1), (_aza_michael, 1), (_bromination, 1),
]


def _assemble(rtype: int, reactants: list[Piece], product: Piece) -> str:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StereoDiscarded)
        pg = parse_smiles(product.smiles)
        rg = parse_smiles(".".join(p.smiles for p in reactants))
    r_ids = [i for p in reactants for i in p.ids]
    assert len(r_ids) == rg.n_atoms and len(product.ids) == pg.n_atoms
    mapnum = {pid: k + 1 for k, pid in enumerate(product.ids)}
    p_atoms = [Atom(a.element, a.formal_charge, a.explicit_h, a.aromatic, mapnum[product.ids[i]]) for i, a in enumerate(pg.atoms)]
    r_atoms = [Atom(a.element, a.formal_charge, a.explicit_h, a.aromatic, mapnum.get(r_ids[i])) for i, a in enumerate(rg.atoms)]
    lhs = write_smiles(rg.with_atoms(r_atoms))
    rhs = write_smiles(pg.with_atoms(p_atoms))
    return f"{rtype},{lhs}>>{rhs}"


def generate(n: int, seed: int = 0, unique: bool = True) -> list[str]:
    """``n`` mapped reaction lines ``type,reactants>>product``."""
    rng = np.random.default_rng(seed)
    weights = np.array([w for _, w in TEMPLATES], dtype=float)
    weights /= weights.sum()
    out, seen, attempts = [], set(), 0
    while len(out) < n:
        attempts += 1
        if attempts > 50 * n:
            raise RuntimeError("template space exhausted")
        fn = TEMPLATES[int(rng.choice(len(TEMPLATES), p=weights))][0]
        rtype, reactants, product = fn(rng, _Ids())
        line = _assemble(rtype, reactants, product)
        if unique:
            key = line.split(",", 1)[1]
            if key in seen:
                continue
            seen.add(key)
        out.append(line)
    return out


HAND_WRITTEN = [
    "CCOC(=O)c1csc(-c2ccc(F)cc2)c1", "CC(=O)Oc1ccccc1C(=O)O", "CN1CCC[C@H]1c1cccnc1",
    "CC(C)Cc1ccc(C(C)C(=O)O)cc1", "COc1ccc2[nH]cc(CCN)c2c1", "O=C(O)c1ccccc1O", "c1ccc2ncccc2c1",
    "CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21", "CC(C)NCC(O)COc1cccc2ccccc12", "Clc1ccc(Cl)c(Cl)c1",
    "O=C1NC(=O)C(c2ccccc2)(c2ccccc2)N1", "CN1C=NC2=C1C(=O)N(C)C(=O)N2C", "C1CCC2(CC1)OCCO2",
    "OC[C@H]1OC(O)[C@H](O)[C@@H](O)[C@@H]1O", "C#Cc1cccc(Nc2ncnc3cc(OC)c(OC)cc23)c1",
    "CC1=CC(=O)c2ccccc2C1=O", "N#Cc1ccc(cc1)C(=O)N", "CS(=O)(=O)c1ccc(cc1)C1=CC(=O)OC1",
    "c1ccc(cc1)-c1nc2ccccc2[nH]1", "Cn1cnc2c1c(=O)[nH]c(=O)n2C", "C[N+](C)(C)CCO", "[O-][N+](=O)c1ccccc1",
    "OB(O)c1ccccc1", "CC1(C)OB(OC1(C)C)c1ccncc1", "C1=CC2=CC=CC=C2C=C1", "c1ccc2c(c1)ccc1ccccc12",
    "FC(F)(F)c1ccc(Oc2ccccc2)cc1", "CCN(CC)C(=O)c1ccc(Br)cc1", "O=C(Nc1ccccc1)c1ccccn1",
    "C=CC(=O)N1CCN(c2ncnc3[nH]ccc23)CC1", "CC(C)(C)OC(=O)N1CCC(CC1)C(=O)O", "Brc1ccc2OCOc2c1",
    "Cc1ccc(S(=O)(=O)N2CCOCC2)cc1", "CC(=O)Nc1ccc(O)cc1", "COC(=O)C1=C(C)NC(C)=C(C(=O)OC)C1c1ccccc1[N+](=O)[O-]",
    "OC(=O)CCc1ccc(O)cc1", "NC(=O)c1cccnc1", "O=S(=O)(O)c1ccccc1", "ClC(Cl)(Cl)Cl", "[Na+].[Cl-]",
    "CC[Mg]Br", "C[Si](C)(C)Cl", "O=P(O)(O)O", "C1CCOC1", "CN(C)C=O", "c1ccoc1", "c1ccsc1", "c1cc[nH]c1",
    "c1cnc[nH]1", "C1CC1", "C1CCCCCCC1", "OCC(O)CO", "N#N", "O=C=O", "CC#N",
]


def corpus(n: int, seed: int = 0) -> list[str]:
    """Unmapped canonical molecules: hand-written ones, then generated ones."""
    out, seen = [], set()

    def add(s):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StereoDiscarded)
            c = write_smiles(parse_smiles(s).strip_maps())
        for part in c.split("."):
            if part not in seen and len(out) < n:
                seen.add(part)
                out.append(part)

    for s in HAND_WRITTEN:
        add(s)
    k = 0
    while len(out) < n:
        for line in generate(200, seed + 1000 + k):
            lhs, rhs = line.split(",", 1)[1].split(">>")
            add(lhs)
            add(rhs)
        k += 1
    return out


def toy_set(n: int = 64, seed: int = 0) -> list[str]:
    """First ``n`` generated reactions whose center and trace extract cleanly,
    one per product (a product with two answers cannot be overfit)."""
    from .record import parse_reaction
    from .vocab import prepare

    out, products = [], set()
    for line in generate(4 * n, seed + 64):
        r = parse_reaction(line)
        if r.product_smiles() not in products and prepare([r]).examples:
            products.add(r.product_smiles())
            out.append(line)
        if len(out) == n:
            return out
    raise RuntimeError("not enough extractable reactions")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Write the bundled synthetic reaction data.")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "reactions_1000.txt").write_text("\n".join(generate(1000, args.seed)) + "\n")
    (out / "corpus_500.smi").write_text("\n".join(corpus(500, args.seed)) + "\n")
    (out / "toy_64.txt").write_text("\n".join(toy_set(64, args.seed)) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

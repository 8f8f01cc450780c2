"""Reaction-center scoring, induced bond/charge changes and training.

Candidate layout inside a batch (used for the joint normalisation):
all BF bond scores, then the 3 BC slots of every bond (slot k means
original order k + 1), then all atom scores.  Each product is one
normalisation segment.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, ParamStore, PlateauDecay, Tensor, adam_step, backward
from .brics import fragment
from .chem.features import featurize
from .chem.graph import BondOrder, MolGraph
from .chem.smiles import canonical_ranks, write_smiles
from .encoder import EncoderConfig, GraphBatch, encode, init_encoder_params
from .reactions.center import A, BC, BF, CenterLabel, ChemicallyInvalid, InvalidLabel, edit_product
from .reactions.vocab import Example

log = logging.getLogger(__name__)

PREFIX = "center/"
ACP_CLASSES = (-1, +1, 0)  # accept one electron, donate one electron, no change
KIND_ORDER = {BF: 0, BC: 1, A: 2}


class EmptyBatch(ValueError):
    pass


class NoValidCenter(RuntimeError):
    pass


def init_center_params(store: ParamStore, cfg: EncoderConfig) -> None:
    init_encoder_params(store, PREFIX, cfg)
    H = cfg.hidden_dim
    shapes = {
        "q_b": (H, 1), "Q_b1": (H, H), "Q_b2": (H, H),
        "Q_c1": (H, 3), "Q_c2": (H, H), "Q_c3": (H, H),
        "q_a": (H, 1), "Q_a1": (H, H), "Q_a2": (H, H),
        "V_b1": (H, 4), "V_b2": (H, 4), "V_b3": (H, 4),
        "W_c1": (H, H), "W_c2": (4, H), "W_c3": (H, H),
        "V_c1": (H, 3), "V_c2": (H, 3),
    }
    for name, shape in shapes.items():
        store.add(PREFIX + name, shape)


def _p(store, name):
    return store[PREFIX + name]


# heads -------------------------------------------------------------------

def score_bf(b: Tensor, hp_rows: Tensor, store: ParamStore) -> Tensor:
    """s^b = q^b ReLU(Q^b_1 b + Q^b_2 h_p), one row per bond."""
    return ad.relu(ad.add(b @ _p(store, "Q_b1"), hp_rows @ _p(store, "Q_b2"))) @ _p(store, "q_b")


def score_bc(b: Tensor, hp_rows: Tensor, store: ParamStore) -> Tensor:
    """s^c = Q^c_1 ReLU(Q^c_2 b + Q^c_3 h_p); 3 slots per bond (masking is
    applied by :func:`bc_mask`)."""
    return ad.relu(ad.add(b @ _p(store, "Q_c2"), hp_rows @ _p(store, "Q_c3"))) @ _p(store, "Q_c1")


def score_a(a: Tensor, hp_rows: Tensor, store: ParamStore) -> Tensor:
    return ad.relu(ad.add(a @ _p(store, "Q_a1"), hp_rows @ _p(store, "Q_a2"))) @ _p(store, "q_a")


def bc_mask(orders: Sequence[int]) -> np.ndarray:
    """(n_bonds, 3) bool; slot equal to the current order, and every slot of
    an aromatic bond, is masked."""
    m = np.ones((len(orders), 3), dtype=bool)
    for k, o in enumerate(orders):
        if o == BondOrder.AROMATIC:
            m[k, :] = False
        else:
            m[k, o - 1] = False
    return m


def joint_normalize(s_b: Tensor, s_c: Tensor, s_a: Tensor, bond_graph, atom_graph, n_graphs: int, c_mask) -> Tensor:
    """Log-probabilities over every BF, unmasked BC slot and A candidate of
    each product (one shared denominator per product)."""
    flat = ad.concat([s_b, ad.reshape(s_c, (-1, 1)), s_a], axis=0)
    seg = np.concatenate([bond_graph, np.repeat(bond_graph, 3), atom_graph])
    mask = np.concatenate([np.ones(len(bond_graph), bool), np.asarray(c_mask, bool).reshape(-1), np.ones(len(atom_graph), bool)])
    return ad.segment_log_softmax(flat, seg, n_graphs, mask)


def btcp_logits(b_nb: Tensor, b_center: Tensor, hp_rows: Tensor, store: ParamStore) -> Tensor:
    """Logits of f^b: class 0 = unchanged, class k = original order k."""
    return ad.add(ad.add(b_nb @ _p(store, "V_b1"), b_center @ _p(store, "V_b2")), hp_rows @ _p(store, "V_b3"))


def btcp_mask(orders: Sequence[int]) -> np.ndarray:
    m = np.ones((len(orders), 4), dtype=bool)
    for k, o in enumerate(orders):
        if o == BondOrder.AROMATIC:
            m[k, 1:] = False
        else:
            m[k, o] = False
    return m


def btcp(b_nb: Tensor, b_center: Tensor, hp_rows: Tensor, store: ParamStore, orders=None) -> Tensor:
    """f^b = softmax(V^b_1 b_nb + V^b_2 b_center + V^b_3 h_p)."""
    mask = None if orders is None else btcp_mask(orders)
    return ad.softmax(btcp_logits(b_nb, b_center, hp_rows, store), mask)


def transform_embedding(codes, b_rows: Tensor, term_owner, n_owners: int, store: ParamStore) -> Tensor:
    """c = sum over involved bonds of W^c_1 ReLU(W^c_2 x' + W^c_3 b).

    ``codes`` are the one-hot positions of x' (0 = BF center, k = change to
    original order k); ``term_owner`` says which center each term belongs
    to.  Owners without terms (A centers) get c = 0.
    """
    H = _p(store, "W_c1").shape[1]
    if len(codes) == 0:
        return Tensor(np.zeros((n_owners, H), dtype=_p(store, "W_c1").dtype))
    onehot = np.zeros((len(codes), 4), dtype=b_rows.dtype)
    onehot[np.arange(len(codes)), np.asarray(codes)] = 1.0
    terms = ad.relu(ad.add(Tensor(onehot) @ _p(store, "W_c2"), b_rows @ _p(store, "W_c3"))) @ _p(store, "W_c1")
    return ad.scatter_add_rows(terms, term_owner, n_owners)


def acp_logits(a_rows: Tensor, c_rows: Tensor, store: ParamStore) -> Tensor:
    return ad.add(a_rows @ _p(store, "V_c1"), c_rows @ _p(store, "V_c2"))


def acp(a_rows: Tensor, c_rows: Tensor, store: ParamStore) -> Tensor:
    """f^c = softmax(V^c_1 a + V^c_2 c) over (accept, donate, none)."""
    return ad.softmax(acp_logits(a_rows, c_rows, store))


# training data -------------------------------------------------------------

@dataclass
class CenterItem:
    """Cached per-product inputs: graph, features, BRICS graph, label."""

    product: MolGraph
    label: CenterLabel
    features: tuple
    brics: object
    reaction_type: int | None
    synthon_key: str = ""

    @classmethod
    def from_example(cls, ex: Example, cfg: EncoderConfig, dtype=np.float64) -> "CenterItem":
        p = ex.record.product
        rtype = ex.record.reaction_type if cfg.type_known else None
        feats = featurize(p, rtype, dtype=dtype)
        bg = fragment(p) if cfg.use_brics else None
        key = write_smiles(ex.synthon) if ex.synthon is not None else ""
        return cls(p, ex.label, feats, bg, rtype, key)


def _neighbor_bonds(g: MolGraph, i: int, j: int) -> list[int]:
    center = g.bond_index(i, j)
    out = []
    for end in (i, j):
        for _, b in g.adjacency[end]:
            if b != center and b not in out:
                out.append(b)
    return out


def _batch(items: Sequence[CenterItem], cfg: EncoderConfig) -> GraphBatch:
    return GraphBatch.build(
        [it.product for it in items], with_brics=cfg.use_brics,
        brics=[it.brics for it in items] if cfg.use_brics else None,
        features=[it.features for it in items],
    )


def center_loss(items: Sequence[CenterItem], store: ParamStore, cfg: EncoderConfig, parts: dict | None = None) -> Tensor:
    """Mean over products of L^s + L^b + L^c with teacher-forced centers."""
    if not items:
        raise EmptyBatch("center_loss on an empty batch")
    batch = _batch(items, cfg)
    emb = encode(batch, store, PREFIX, cfg)
    hp = emb.graph
    s_b = score_bf(emb.bonds, ad.gather_rows(hp, batch.bond_graph), store)
    s_c = score_bc(emb.bonds, ad.gather_rows(hp, batch.bond_graph), store)
    s_a = score_a(emb.atoms, ad.gather_rows(hp, batch.atom_graph), store)
    orders = [int(b.order) for it in items for b in it.product.bonds]
    logp = joint_normalize(s_b, s_c, s_a, batch.bond_graph, batch.atom_graph, batch.n_graphs, bc_mask(orders))
    B = batch.n_bonds

    targets = []
    nb_rows, nb_center, nb_owner, nb_orders, nb_target = [], [], [], [], []
    codes, term_bonds, term_owner = [], [], []
    acp_atoms, acp_owner, acp_target = [], [], []
    for k, it in enumerate(items):
        g, lab = it.product, it.label
        a_off, b_off = batch.atom_offset[k], batch.bond_offset[k]
        if lab.kind == BF:
            c = g.bond_index(*lab.bond)
            targets.append(b_off + c)
            changed = {tuple(sorted(kl)): o for kl, o in lab.induced_changes}
            for nb in _neighbor_bonds(g, *lab.bond):
                bond = g.bonds[nb]
                nb_rows.append(b_off + nb)
                nb_center.append(b_off + c)
                nb_owner.append(k)
                nb_orders.append(int(bond.order))
                nb_target.append(changed.get(tuple(sorted((bond.i, bond.j))), 0))
            codes.append(0)
            term_bonds.append(b_off + c)
            term_owner.append(k)
            for kl, o in lab.induced_changes:
                codes.append(o)
                term_bonds.append(b_off + g.bond_index(*kl))
                term_owner.append(k)
        elif lab.kind == BC:
            c = g.bond_index(*lab.bond)
            targets.append(B + 3 * (b_off + c) + lab.original_order - 1)
            codes.append(lab.original_order)
            term_bonds.append(b_off + c)
            term_owner.append(k)
        else:
            targets.append(4 * B + a_off + lab.atom)
        deltas = dict(lab.charge_changes)
        for i in lab.acp_atoms():
            acp_atoms.append(a_off + i)
            acp_owner.append(k)
            acp_target.append(ACP_CLASSES.index(deltas.get(i, 0)))

    l_s = ad.scale(ad.total(ad.take(logp, targets, np.zeros(len(targets), dtype=np.int64))), -1.0)
    loss = l_s
    l_b = l_c = None
    if nb_rows:
        logits = btcp_logits(ad.gather_rows(emb.bonds, nb_rows), ad.gather_rows(emb.bonds, nb_center),
                             ad.gather_rows(hp, nb_owner), store)
        l_b = ad.cross_entropy(logits, nb_target, btcp_mask(nb_orders))
        loss = ad.add(loss, l_b)
    c = transform_embedding(codes, ad.gather_rows(emb.bonds, term_bonds) if term_bonds else None,
                            np.asarray(term_owner, dtype=np.int64), len(items), store)
    if acp_atoms:
        logits = acp_logits(ad.gather_rows(emb.atoms, acp_atoms), ad.gather_rows(c, acp_owner), store)
        l_c = ad.cross_entropy(logits, acp_target)
        loss = ad.add(loss, l_c)
    if parts is not None:
        parts["L_s"] = l_s.item()
        parts["L_b"] = 0.0 if l_b is None else l_b.item()
        parts["L_c"] = 0.0 if l_c is None else l_c.item()
    return ad.scale(loss, 1.0 / len(items))


# inference -------------------------------------------------------------

@dataclass
class CenterCandidate:
    kind: str
    bond: tuple[int, int] | None = None
    atom: int | None = None
    bc_original_order: int | None = None
    raw_score: float = 0.0
    log_prob: float = 0.0
    tie_key: tuple = ()

    def describe(self, g: MolGraph | None = None) -> str:
        def name(i):
            if g is not None and g.atoms[i].map_num is not None:
                return f"{g.atoms[i].element}{g.atoms[i].map_num}"
            return str(i)
        if self.kind == A:
            return f"A:{name(self.atom)}"
        s = f"{self.kind}:{name(self.bond[0])}-{name(self.bond[1])}"
        return s + (f":{self.bc_original_order}" if self.kind == BC else "")

    def same_center(self, label: CenterLabel) -> bool:
        if self.kind != label.kind:
            return False
        if self.kind == A:
            return self.atom == label.atom
        if tuple(sorted(self.bond)) != tuple(sorted(label.bond)):
            return False
        return self.kind == BF or self.bc_original_order == label.original_order


@dataclass
class SynthonCandidate:
    candidate: CenterCandidate
    synthon: MolGraph
    score: float
    induced_changes: tuple = ()
    charge_changes: tuple = ()
    decisions: list = field(default_factory=list)  # (what, log-prob) terms of the score

    def label(self) -> CenterLabel:
        c = self.candidate
        return CenterLabel(c.kind, c.bond, c.atom, c.bc_original_order, tuple(self.induced_changes), tuple(self.charge_changes))


class CenterModel:
    """Parameters plus configuration of the center identification module."""

    def __init__(self, store: ParamStore, cfg: EncoderConfig):
        self.store = store
        self.cfg = cfg

    @classmethod
    def create(cls, cfg: EncoderConfig, seed: int = 0, dtype=np.float64) -> "CenterModel":
        store = ParamStore(seed=seed, dtype=dtype, meta={"module": "center", **cfg.__dict__})
        init_center_params(store, cfg)
        return cls(store, cfg)

    @property
    def dtype(self):
        return self.store.dtype

    def _items(self, products: Sequence[MolGraph], reaction_types=None) -> list[CenterItem]:
        out = []
        for k, p in enumerate(products):
            rtype = reaction_types[k] if (reaction_types is not None and self.cfg.type_known) else None
            feats = featurize(p, rtype, dtype=self.dtype)
            out.append(CenterItem(p, CenterLabel("A", atom=0), feats, fragment(p) if self.cfg.use_brics else None, rtype))
        return out

    def score(self, products: Sequence[MolGraph], reaction_types=None, items=None):
        """Encode products and return per-product (embeddings, candidate list
        sorted by log-probability, batch, offsets)."""
        items = items if items is not None else self._items(products, reaction_types)
        batch = _batch(items, self.cfg)
        emb = encode(batch, self.store, PREFIX, self.cfg)
        hp = emb.graph
        s_b = score_bf(emb.bonds, ad.gather_rows(hp, batch.bond_graph), self.store)
        s_c = score_bc(emb.bonds, ad.gather_rows(hp, batch.bond_graph), self.store)
        s_a = score_a(emb.atoms, ad.gather_rows(hp, batch.atom_graph), self.store)
        orders = [int(b.order) for it in items for b in it.product.bonds]
        cmask = bc_mask(orders)
        logp = joint_normalize(s_b, s_c, s_a, batch.bond_graph, batch.atom_graph, batch.n_graphs, cmask).data[:, 0]
        B = batch.n_bonds
        per_product = []
        for k, it in enumerate(items):
            g = it.product
            ranks = canonical_ranks(g.strip_maps())
            b0, a0 = batch.bond_offset[k], batch.atom_offset[k]
            cands = []
            for bk, bond in enumerate(g.bonds):
                key = tuple(sorted((ranks[bond.i], ranks[bond.j])))
                e = (bond.i, bond.j)
                cands.append(CenterCandidate(BF, e, None, None, float(s_b.data[b0 + bk, 0]), float(logp[b0 + bk]), (0, key)))
                for slot in range(3):
                    if cmask[b0 + bk, slot]:
                        idx = B + 3 * (b0 + bk) + slot
                        cands.append(CenterCandidate(BC, e, None, slot + 1, float(s_c.data[b0 + bk, slot]), float(logp[idx]), (1, key, slot)))
            for i in range(g.n_atoms):
                idx = 4 * B + a0 + i
                cands.append(CenterCandidate(A, None, i, None, float(s_a.data[a0 + i, 0]), float(logp[idx]), (2, (ranks[i],))))
            cands.sort(key=lambda c: (-c.log_prob, c.tie_key))
            per_product.append(cands)
        return emb, per_product, batch

    def apply_p2s(self, product: MolGraph, cand: CenterCandidate, emb, batch, k: int) -> SynthonCandidate:
        """Greedy BTCP/ACP for a candidate, then edit the product.

        Score = center log-prob + chosen BTCP log-probs + chosen ACP log-probs.
        Raises ChemicallyInvalid when the edits break valence rules.
        """
        b0, a0 = int(batch.bond_offset[k]), int(batch.atom_offset[k])
        hp = Tensor(emb.graph.data[k:k + 1])
        decisions = [("center", cand.log_prob)]
        induced = []
        codes, term_rows = [], []
        if cand.kind in (BF, BC):
            c = product.bond_index(*cand.bond)
            if cand.kind == BF:
                nbs = _neighbor_bonds(product, *cand.bond)
                codes.append(0)
                term_rows.append(b0 + c)
                if nbs:
                    rows = [b0 + nb for nb in nbs]
                    orders = [int(product.bonds[nb].order) for nb in nbs]
                    n = len(nbs)
                    f = btcp(Tensor(emb.bonds.data[rows]), Tensor(np.repeat(emb.bonds.data[b0 + c:b0 + c + 1], n, 0)),
                             Tensor(np.repeat(hp.data, n, 0)), self.store, orders).data
                    for r, nb in enumerate(nbs):
                        choice = int(np.argmax(f[r]))
                        decisions.append((f"btcp:{nb}", float(np.log(f[r, choice]))))
                        if choice != 0:
                            bond = product.bonds[nb]
                            induced.append(((bond.i, bond.j), choice))
                            codes.append(choice)
                            term_rows.append(b0 + nb)
            else:
                codes.append(cand.bc_original_order)
                term_rows.append(b0 + c)
        if codes:
            cvec = transform_embedding(codes, Tensor(emb.bonds.data[term_rows]), np.zeros(len(codes), dtype=np.int64), 1, self.store)
        else:
            cvec = transform_embedding([], None, [], 1, self.store)
        label = CenterLabel(cand.kind, cand.bond, cand.atom, cand.bc_original_order, tuple(induced))
        atoms = label.acp_atoms()
        f = acp(Tensor(emb.atoms.data[[a0 + i for i in atoms]]), Tensor(np.repeat(cvec.data, len(atoms), 0)), self.store).data
        charges = []
        for r, i in enumerate(atoms):
            choice = int(np.argmax(f[r]))
            decisions.append((f"acp:{i}", float(np.log(f[r, choice]))))
            if ACP_CLASSES[choice] != 0:
                charges.append((i, ACP_CLASSES[choice]))
        synthon = edit_product(product, cand.kind, cand.bond, cand.atom, cand.bc_original_order, induced, charges)
        score = float(sum(v for _, v in decisions))
        return SynthonCandidate(cand, synthon, score, tuple(induced), tuple(charges), decisions)

    def top_k(self, products: Sequence[MolGraph], K: int, reaction_types=None, items=None) -> list[list[SynthonCandidate]]:
        """Per product: top-K per center type, then the global top-K of those
        3K by center log-probability, each transformed into synthons.
        Candidates whose edits are chemically invalid are dropped."""
        emb, per_product, batch = self.score(products, reaction_types, items)
        out = []
        for k, cands in enumerate(per_product):
            g = products[k] if items is None else items[k].product
            pool = []
            for kind in (BF, BC, A):
                pool.extend([c for c in cands if c.kind == kind][:K])
            pool.sort(key=lambda c: (-c.log_prob, c.tie_key))
            chosen = []
            for c in pool[:K]:
                try:
                    chosen.append(self.apply_p2s(g, c, emb, batch, k))
                except (ChemicallyInvalid, InvalidLabel) as exc:
                    log.debug("dropped candidate %s: %s", c.describe(g), exc)
            chosen.sort(key=lambda s: (-s.score, s.candidate.tie_key))
            out.append(chosen)
        return out


def select_top_k_centers(product: MolGraph, model: CenterModel, K: int, reaction_type=None) -> list[SynthonCandidate]:
    res = model.top_k([product], K, None if reaction_type is None else [reaction_type])[0]
    if not res:
        raise NoValidCenter("no chemically valid reaction center")
    return res


def apply_p2s(product: MolGraph, candidate: CenterCandidate, model: CenterModel, reaction_type=None) -> SynthonCandidate:
    emb, _, batch = model.score([product], None if reaction_type is None else [reaction_type])
    return model.apply_p2s(product, candidate, emb, batch, 0)


# evaluation and training -------------------------------------------------------

def center_accuracy(model: CenterModel, items: Sequence[CenterItem], ks=(1,), batch_size: int = 64) -> dict[int, float]:
    """Fraction of products whose ground-truth synthon is among the top-k
    predicted synthons (center plus greedy BTCP/ACP)."""
    if not items:
        return {k: 0.0 for k in ks}
    K = max(ks)
    hits = {k: 0 for k in ks}
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        preds = model.top_k([it.product for it in chunk], K, items=chunk)
        for it, cands in zip(chunk, preds):
            keys = [write_smiles(c.synthon) for c in cands]
            for k in ks:
                if it.synthon_key in keys[:k]:
                    hits[k] += 1
    return {k: hits[k] / len(items) for k in ks}


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 256
    lr: float = 1e-3
    decay: float = 0.9
    patience: int = 10
    min_delta: float = 0.01
    seed: int = 0
    eval_every: int = 1
    log_path: str | None = None
    target_accuracy: float | None = None  # stop early once reached


def _log_line(path, record):
    if path:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def train_center(train: Sequence[Example], valid: Sequence[Example], cfg: EncoderConfig, tc: TrainConfig,
                 dtype=np.float32) -> tuple[CenterModel, list[dict]]:
    """Adam on L^s + L^b + L^c; keeps the parameters with the best
    validation top-1 accuracy."""
    model = CenterModel.create(cfg, seed=tc.seed, dtype=dtype)
    train_items = [CenterItem.from_example(ex, cfg, dtype) for ex in train]
    valid_items = [CenterItem.from_example(ex, cfg, dtype) for ex in valid] or train_items
    state = AdamState(lr=tc.lr, decay=tc.decay)
    sched = PlateauDecay(state, tc.patience, tc.min_delta)
    rng = np.random.default_rng(tc.seed)
    best, best_params, history = -1.0, None, []
    for epoch in range(1, tc.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_items))
        total_loss = 0.0
        for start in range(0, len(order), tc.batch_size):
            chunk = [train_items[i] for i in order[start:start + tc.batch_size]]
            model.store.zero_grad()
            loss = center_loss(chunk, model.store, cfg)
            backward(loss)
            adam_step(model.store, state)
            total_loss += loss.item() * len(chunk)
        rec = {"module": "center", "epoch": epoch, "loss": total_loss / len(train_items), "lr": state.lr,
               "seconds": round(time.perf_counter() - t0, 4)}
        if epoch % tc.eval_every == 0 or epoch == tc.epochs:
            acc = center_accuracy(model, valid_items)[1]
            rec["valid_top1"] = acc
            sched.update(acc)
            if acc > best:
                best = acc
                best_params = {k: v.data.copy() for k, v in model.store.items()}
        history.append(rec)
        _log_line(tc.log_path, rec)
        log.info("center epoch %d loss %.4f", epoch, rec["loss"])
        if tc.target_accuracy is not None and rec.get("valid_top1", 0.0) >= tc.target_accuracy:
            break
    if best_params is not None:
        for k, v in best_params.items():
            model.store[k].data = v
    return model, history

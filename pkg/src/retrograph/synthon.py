"""Sequential substructure attachment on synthons.

At every step the atom on top of the DFS frontier either stops (popped)
or receives a vocabulary unit whose new atoms are pushed.  Two heads
decide: a continuity head (attach or stop) and a type head (which unit).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, ParamStore, PlateauDecay, Tensor, adam_step, backward
from .center_id import EmptyBatch, TrainConfig, _log_line
from .chem.features import featurize
from .chem.graph import MolGraph
from .chem.smiles import write_smiles
from .encoder import EncoderConfig, GraphBatch, encode, init_encoder_params
from .reactions.trace import Step, Unit, apply_unit, initial_frontier, push_new_atoms
from .reactions.vocab import Example, SubstructureVocab

log = logging.getLogger(__name__)

PREFIX = "synthon/"


class AllMasked(RuntimeError):
    """No unit can legally attach at the current atom."""


def init_synthon_params(store: ParamStore, cfg: EncoderConfig, vocab_size: int) -> None:
    if cfg.use_brics:
        raise ValueError("fragment features are not available to synthon completion")
    init_encoder_params(store, PREFIX, cfg)
    H = cfg.hidden_dim
    for name in ("V_o1", "V_o2", "V_o3"):
        store.add(PREFIX + name, (H, 1))
    for name in ("V_z1", "V_z2", "V_z3"):
        store.add(PREFIX + name, (H, vocab_size))


def _p(store, name):
    return store[PREFIX + name]


def aacp_logit(a: Tensor, h_s: Tensor, h_p: Tensor, store: ParamStore) -> Tensor:
    return ad.add(ad.add(a @ _p(store, "V_o1"), h_s @ _p(store, "V_o2")), h_p @ _p(store, "V_o3"))


def aacp(a: Tensor, h_s: Tensor, h_p: Tensor, store: ParamStore) -> Tensor:
    """f^o = sigma(V^o_1 a + V^o_2 h_s + V^o_3 h_p), one row per decision."""
    return ad.sigmoid(aacp_logit(a, h_s, h_p, store))


def aatp_logits(a: Tensor, h_s: Tensor, h_p: Tensor, store: ParamStore) -> Tensor:
    return ad.add(ad.add(a @ _p(store, "V_z1"), h_s @ _p(store, "V_z2")), h_p @ _p(store, "V_z3"))


def aatp(a: Tensor, h_s: Tensor, h_p: Tensor, store: ParamStore, mask=None) -> Tensor:
    """f^z = softmax(V^z_1 a + V^z_2 h_s + V^z_3 h_p) over the legal units."""
    if mask is not None and not np.asarray(mask).any(axis=-1).all():
        raise AllMasked("every unit is masked")
    return ad.softmax(aatp_logits(a, h_s, h_p, store), mask)


class UnitTable:
    """Per-unit arrays used to build legality masks quickly."""

    def __init__(self, vocab: SubstructureVocab):
        self.vocab = vocab
        self.units: list[Unit] = list(vocab.units)
        self.element = np.array([u.anchor_element for u in self.units], dtype=object)
        self.aromatic = np.array([u.anchor_aromatic for u in self.units], dtype=bool)
        self.fused = np.array([u.graph.atom_in_ring(u.anchor) for u in self.units], dtype=bool)
        self.cost = np.array([u.anchor_cost for u in self.units], dtype=np.int64)

    def __len__(self):
        return len(self.units)

    def mask(self, g: MolGraph, atom: int) -> np.ndarray:
        """Units whose anchor element matches, whose ring-fused anchor has the
        same aromaticity, and whose bonds fit into the atom's hydrogens."""
        a = g.atoms[atom]
        m = (self.element == a.element) & (self.cost <= a.explicit_h)
        m &= ~self.fused | (self.aromatic == a.aromatic)
        return m


@dataclass
class IntermediateGraph:
    graph: MolGraph
    synthon_index: int
    frontier: tuple[int, ...]
    score: float = 0.0
    step: int = 0
    actions: tuple[Step, ...] = ()

    @property
    def complete(self) -> bool:
        return not self.frontier

    @property
    def top(self) -> int:
        return self.frontier[-1]

    def reactant_key(self) -> str:
        return write_smiles(self.graph.strip_maps())


def start(synthon: MolGraph, centers, synthon_index: int = 0, score: float = 0.0) -> IntermediateGraph:
    return IntermediateGraph(synthon, synthon_index, tuple(initial_frontier(synthon, centers)), score)


def attach(ig: IntermediateGraph, unit: Unit | None, log_prob: float = 0.0) -> IntermediateGraph:
    """Stop (``unit`` None) pops the top atom; otherwise the unit is merged
    at the top atom and its new atoms are pushed."""
    if ig.complete:
        raise ValueError("attach on a complete graph")
    top = ig.top
    if unit is None:
        return IntermediateGraph(ig.graph, ig.synthon_index, ig.frontier[:-1], ig.score + log_prob, ig.step + 1,
                                 ig.actions + (Step(top),))
    g, new = apply_unit(ig.graph, top, unit)
    problems = g.valence_problems()
    assert not problems, f"attachment broke valence: {problems}"
    frontier = tuple(push_new_atoms(list(ig.frontier), new))
    return IntermediateGraph(g, ig.synthon_index, frontier, ig.score + log_prob, ig.step + 1,
                             ig.actions + (Step(top, unit.encoding),))


# step distributions ----------------------------------------------------------

@dataclass
class StepDistribution:
    """Log-probabilities of the actions at one intermediate graph."""

    log_stop: float
    log_attach: np.ndarray  # per unit, -inf where masked; already includes log f^o
    forced_stop: bool = False


class SynthonModel:
    def __init__(self, store: ParamStore, cfg: EncoderConfig, vocab: SubstructureVocab):
        self.store = store
        self.cfg = cfg
        self.vocab = vocab
        self.table = UnitTable(vocab)

    @classmethod
    def create(cls, cfg: EncoderConfig, vocab: SubstructureVocab, seed: int = 0, dtype=np.float64) -> "SynthonModel":
        store = ParamStore(seed=seed, dtype=dtype, meta={"module": "synthon", **cfg.__dict__})
        init_synthon_params(store, cfg, len(vocab))
        return cls(store, cfg, vocab)

    def _features(self, g: MolGraph, reaction_type):
        rtype = reaction_type if self.cfg.type_known else None
        return featurize(g, rtype, dtype=self.store.dtype)

    def embed_graphs(self, graphs: Sequence[MolGraph], reaction_types=None):
        """Atom embeddings and graph embeddings of several graphs at once."""
        feats = [self._features(g, None if reaction_types is None else reaction_types[k]) for k, g in enumerate(graphs)]
        batch = GraphBatch.build(list(graphs), features=feats)
        emb = encode(batch, self.store, PREFIX, self.cfg, with_bonds=False)
        return emb, batch

    def context(self, synthon: MolGraph, product: MolGraph, reaction_type=None) -> tuple[np.ndarray, np.ndarray]:
        """(h_s, h_p), computed once per synthon set."""
        emb, _ = self.embed_graphs([synthon, product], None if reaction_type is None else [reaction_type] * 2)
        return emb.graph.data[0:1], emb.graph.data[1:2]

    def step_distributions(self, states: Sequence[IntermediateGraph], contexts: Sequence[tuple], reaction_types=None) -> list[StepDistribution]:
        """Re-encode each intermediate graph and score the actions at its top atom."""
        if not states:
            return []
        emb, batch = self.embed_graphs([s.graph for s in states], reaction_types)
        rows = [int(batch.atom_offset[k]) + s.top for k, s in enumerate(states)]
        a = Tensor(emb.atoms.data[rows])
        h_s = Tensor(np.concatenate([c[0] for c in contexts]))
        h_p = Tensor(np.concatenate([c[1] for c in contexts]))
        log_o = ad.log_sigmoid(aacp_logit(a, h_s, h_p, self.store)).data[:, 0]
        log_not_o = ad.log_sigmoid(ad.scale(aacp_logit(a, h_s, h_p, self.store), -1.0)).data[:, 0]
        masks = np.stack([self.table.mask(s.graph, s.top) for s in states])
        out = []
        legal = masks.any(axis=1)
        if legal.any():
            lz = ad.log_softmax(aatp_logits(a, h_s, h_p, self.store), np.where(legal[:, None], masks, True)).data
        for k in range(len(states)):
            if not legal[k]:
                log.debug("all units masked at atom %d; forcing stop", states[k].top)
                out.append(StepDistribution(0.0, np.full(len(self.table), -np.inf), True))
            else:
                out.append(StepDistribution(float(log_not_o[k]), log_o[k] + lz[k]))
        return out

    def greedy(self, synthon: MolGraph, centers, product: MolGraph, reaction_type=None, max_steps: int = 30) -> IntermediateGraph:
        """Attach while f^o > 0.5 (ties stop), picking the most likely unit."""
        ctx = self.context(synthon, product, reaction_type)
        ig = start(synthon, centers)
        while not ig.complete and ig.step < max_steps:
            d = self.step_distributions([ig], [ctx], None if reaction_type is None else [reaction_type])[0]
            if d.forced_stop or d.log_stop >= np.log(0.5):
                ig = attach(ig, None, d.log_stop)
            else:
                k = int(np.argmax(d.log_attach))
                ig = attach(ig, self.table.units[k], float(d.log_attach[k]))
        return ig


# teacher forcing -------------------------------------------------------------

@dataclass
class CompletionItem:
    """Teacher-forced intermediate graphs and per-step targets of one trace."""

    product: MolGraph
    synthon: MolGraph
    centers: tuple[int, ...]
    states: list[MolGraph]
    features: list[tuple]
    steps: list[tuple[int, int, int, int]]  # (state, atom, attach flag, unit id or -1)
    masks: list[np.ndarray]
    reaction_type: int | None
    reactant_key: str
    trace: tuple[Step, ...] = field(default=())

    @classmethod
    def from_example(cls, ex: Example, model: SynthonModel) -> "CompletionItem":
        table, vocab = model.table, model.vocab
        rtype = ex.record.reaction_type
        g = ex.synthon
        states, steps, masks = [g], [], []
        for s in ex.trace.steps:
            m = table.mask(g, s.atom)
            if s.is_stop:
                steps.append((len(states) - 1, s.atom, 0, -1))
            else:
                k = vocab.index[s.unit]
                if not m[k]:
                    raise AllMasked(f"ground-truth unit {s.unit} is masked at atom {s.atom}")
                steps.append((len(states) - 1, s.atom, 1, k))
                g, _ = apply_unit(g, s.atom, table.units[k])
                states.append(g)
            masks.append(m)
        feats = [model._features(x, rtype) for x in [ex.record.product] + states]
        return cls(ex.record.product, ex.synthon, tuple(ex.label.center_atoms()), states, feats, steps, masks,
                   rtype, ex.record.reactant_smiles(), tuple(ex.trace.steps))


def completion_loss(items: Sequence[CompletionItem], model: SynthonModel, parts: dict | None = None) -> Tensor:
    """Mean over traces of the summed L^o (binary) and L^z (categorical)
    terms; steps where every unit is masked carry no loss."""
    if not items:
        raise EmptyBatch("completion_loss on an empty batch")
    graphs, feats, base = [], [], []
    for it in items:
        base.append(len(graphs))
        graphs.extend([it.product] + it.states)
        feats.extend(it.features)
    batch = GraphBatch.build(graphs, features=feats)
    emb = encode(batch, model.store, PREFIX, model.cfg, with_bonds=False)
    rows, hs_rows, hp_rows, o_t, z_rows, z_t, z_mask = [], [], [], [], [], [], []
    for k, it in enumerate(items):
        for (state, atom, flag, unit), m in zip(it.steps, it.masks):
            if not m.any():
                continue
            gi = base[k] + 1 + state
            rows.append(int(batch.atom_offset[gi]) + atom)
            hs_rows.append(base[k] + 1)
            hp_rows.append(base[k])
            o_t.append(flag)
            if flag:
                z_rows.append(len(rows) - 1)
                z_t.append(unit)
                z_mask.append(m)
    if not rows:
        raise EmptyBatch("no scorable steps in batch")
    a = ad.gather_rows(emb.atoms, rows)
    h_s = ad.gather_rows(emb.graph, hs_rows)
    h_p = ad.gather_rows(emb.graph, hp_rows)
    l_o = ad.binary_cross_entropy(aacp_logit(a, h_s, h_p, model.store), np.asarray(o_t, dtype=a.dtype)[:, None])
    loss = l_o
    l_z = None
    if z_rows:
        za = ad.gather_rows(a, z_rows)
        logits = aatp_logits(za, ad.gather_rows(h_s, z_rows), ad.gather_rows(h_p, z_rows), model.store)
        l_z = ad.cross_entropy(logits, z_t, np.stack(z_mask))
        loss = ad.add(loss, l_z)
    if parts is not None:
        parts["L_o"] = l_o.item()
        parts["L_z"] = 0.0 if l_z is None else l_z.item()
    return ad.scale(loss, 1.0 / len(items))


def sequence_accuracy(model: SynthonModel, items: Sequence[CompletionItem], max_steps: int = 30) -> tuple[float, float]:
    """Greedy decoding from the ground-truth synthon: fraction reproducing
    the exact action sequence, and fraction reproducing the reactants."""
    if not items:
        return 0.0, 0.0
    seq = same = 0
    for it in items:
        ig = model.greedy(it.synthon, it.centers, it.product, it.reaction_type, max_steps=max(max_steps, len(it.trace)))
        seq += ig.actions == it.trace
        same += ig.complete and ig.reactant_key() == it.reactant_key
    return seq / len(items), same / len(items)


def train_synthon(train: Sequence[Example], valid: Sequence[Example], vocab: SubstructureVocab, cfg: EncoderConfig,
                  tc: TrainConfig, dtype=np.float32, valid_sample: int = 2000) -> tuple[SynthonModel, list[dict]]:
    """Adam on L^o + L^z with teacher forcing; keeps the parameters with the
    best validation top-1 completion accuracy (on a seeded sample)."""
    model = SynthonModel.create(cfg, vocab, seed=tc.seed, dtype=dtype)
    train_items = [CompletionItem.from_example(ex, model) for ex in train]
    rng = np.random.default_rng(tc.seed)
    pool = list(valid) if valid else list(train)
    if len(pool) > valid_sample:
        pool = [pool[i] for i in sorted(rng.choice(len(pool), valid_sample, replace=False))]
    valid_items = [CompletionItem.from_example(ex, model) for ex in pool]
    state = AdamState(lr=tc.lr, decay=tc.decay)
    sched = PlateauDecay(state, tc.patience, tc.min_delta)
    best, best_params, history = -1.0, None, []
    for epoch in range(1, tc.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_items))
        total = 0.0
        for s in range(0, len(order), tc.batch_size):
            chunk = [train_items[i] for i in order[s:s + tc.batch_size]]
            model.store.zero_grad()
            loss = completion_loss(chunk, model)
            backward(loss)
            adam_step(model.store, state)
            total += loss.item() * len(chunk)
        rec = {"module": "synthon", "epoch": epoch, "loss": total / len(train_items), "lr": state.lr,
               "seconds": round(time.perf_counter() - t0, 4)}
        if epoch % tc.eval_every == 0 or epoch == tc.epochs:
            seq, acc = sequence_accuracy(model, valid_items)
            rec["valid_top1"] = acc
            rec["valid_sequence"] = seq
            sched.update(acc)
            if acc > best:
                best = acc
                best_params = {k: v.data.copy() for k, v in model.store.items()}
        history.append(rec)
        _log_line(tc.log_path, rec)
        if tc.target_accuracy is not None and rec.get("valid_top1", 0.0) >= tc.target_accuracy:
            break
    if best_params is not None:
        for k, v in best_params.items():
            model.store[k].data = v
    return model, history

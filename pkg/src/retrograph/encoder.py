"""Graph and fragment message passing encoders.

Graphs are batched as one disjoint union.  Every undirected bond ``k``
becomes directed edges ``2k`` (i -> j) and ``2k + 1`` (j -> i), so the
reverse of edge ``e`` is ``e ^ 1``.  Row-vector convention throughout:
a layer is ``x @ W`` with ``W`` of shape (in, out); no bias terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .brics import BricsGraph, fragment
from .chem.features import BOND_DIM, atom_dim, featurize
from .chem.graph import MolGraph


@dataclass(frozen=True)
class EncoderConfig:
    hidden_dim: int = 512
    t_a: int = 7
    t_e: int = 7
    use_brics: bool = False
    type_known: bool = False

    def __post_init__(self):
        if self.hidden_dim < 1 or self.t_a < 0 or (self.use_brics and self.t_e < 1):
            raise ValueError(f"invalid encoder config {self}")

    @property
    def atom_dim(self) -> int:
        return atom_dim(self.type_known)


def _directed(n_atoms, bi, bj):
    src = np.empty(2 * len(bi), dtype=np.int64)
    dst = np.empty_like(src)
    src[0::2], dst[0::2] = bi, bj
    src[1::2], dst[1::2] = bj, bi
    return src, dst


@dataclass
class GraphBatch:
    x: np.ndarray
    xb: np.ndarray
    bi: np.ndarray
    bj: np.ndarray
    atom_graph: np.ndarray
    bond_graph: np.ndarray
    atom_offset: np.ndarray
    bond_offset: np.ndarray
    n_graphs: int
    # fragment level (only with BRICS)
    membership: np.ndarray | None = None
    frag_graph: np.ndarray | None = None
    n_frags: int = 0
    frag_src: np.ndarray | None = None
    frag_dst: np.ndarray | None = None
    frag_atom: np.ndarray | None = None  # edge member atom on the source side

    @property
    def n_atoms(self) -> int:
        return self.x.shape[0]

    @property
    def n_bonds(self) -> int:
        return self.bi.shape[0]

    @property
    def src(self):
        return _directed(self.n_atoms, self.bi, self.bj)[0]

    @classmethod
    def build(cls, graphs: Sequence[MolGraph], reaction_types=None, with_brics: bool = False,
              dtype=np.float64, brics: Sequence[BricsGraph] | None = None,
              features: Sequence[tuple] | None = None) -> "GraphBatch":
        xs, xbs, bis, bjs, ag, bg = [], [], [], [], [], []
        a_off, b_off = [0], [0]
        mem, fg, fsrc, fdst, fatom = [], [], [], [], []
        n_fr = 0
        for k, g in enumerate(graphs):
            rtype = None if reaction_types is None else reaction_types[k]
            if features is not None:
                x, xb = features[k]
            else:
                x, xb = featurize(g, rtype, dtype=dtype)
            off = a_off[-1]
            xs.append(x)
            xbs.append(xb.reshape(-1, BOND_DIM))
            bis.append(np.fromiter((b.i + off for b in g.bonds), dtype=np.int64, count=g.n_bonds))
            bjs.append(np.fromiter((b.j + off for b in g.bonds), dtype=np.int64, count=g.n_bonds))
            ag.append(np.full(g.n_atoms, k, dtype=np.int64))
            bg.append(np.full(g.n_bonds, k, dtype=np.int64))
            if with_brics:
                bgr = brics[k] if brics is not None else fragment(g)
                mem.append(np.asarray(bgr.membership, dtype=np.int64) + n_fr)
                fg.append(np.full(bgr.n_nodes, k, dtype=np.int64))
                for u, v, bond in bgr.edges:
                    b = g.bonds[bond]
                    au = b.i if bgr.membership[b.i] == u else b.j
                    av = b.j if au == b.i else b.i
                    fsrc += [u + n_fr, v + n_fr]
                    fdst += [v + n_fr, u + n_fr]
                    fatom += [au + off, av + off]
                n_fr += bgr.n_nodes
            a_off.append(off + g.n_atoms)
            b_off.append(b_off[-1] + g.n_bonds)
        cat = lambda parts, d=np.int64: np.concatenate(parts) if parts else np.zeros(0, dtype=d)
        batch = cls(
            x=np.concatenate(xs).astype(dtype, copy=False) if xs else np.zeros((0, 1), dtype=dtype),
            xb=np.concatenate(xbs).astype(dtype, copy=False) if xbs else np.zeros((0, BOND_DIM), dtype=dtype),
            bi=cat(bis), bj=cat(bjs), atom_graph=cat(ag), bond_graph=cat(bg),
            atom_offset=np.asarray(a_off, dtype=np.int64), bond_offset=np.asarray(b_off, dtype=np.int64),
            n_graphs=len(graphs),
        )
        if with_brics:
            batch.membership = cat(mem)
            batch.frag_graph = cat(fg)
            batch.n_frags = n_fr
            batch.frag_src = np.asarray(fsrc, dtype=np.int64)
            batch.frag_dst = np.asarray(fdst, dtype=np.int64)
            batch.frag_atom = np.asarray(fatom, dtype=np.int64)
        return batch


def init_encoder_params(store: ParamStore, prefix: str, cfg: EncoderConfig) -> None:
    H = cfg.hidden_dim
    store.add(f"{prefix}W_a1", (H, H))
    store.add(f"{prefix}W_a2", (cfg.atom_dim, H))
    store.add(f"{prefix}W_a3", (BOND_DIM, H))
    store.add(f"{prefix}W_a4", (H, H))
    store.add(f"{prefix}U_a1", (H, H))
    store.add(f"{prefix}U_a2", (cfg.atom_dim, H))
    if cfg.t_a > 0:
        store.add(f"{prefix}U_a3", (H * cfg.t_a, H))
    if cfg.use_brics:
        for k in (1, 2, 3, 4):
            store.add(f"{prefix}W_e{k}", (H, H))
        for k in (1, 2):
            store.add(f"{prefix}U_e{k}", (H, H))
        store.add(f"{prefix}U_e3", (H * cfg.t_e, H))
        store.add(f"{prefix}V", (2 * H, H))
    store.add(f"{prefix}U_b1", (H, H))
    store.add(f"{prefix}U_b2", (BOND_DIM, H))
    store.add(f"{prefix}U_b3", (H, H))
    store.add(f"{prefix}U_b4", (H, H))


def _message_passing(node_in: Tensor, edge_in: Tensor | None, src, dst, n_nodes: int, T: int,
                     W1: Tensor, W4: Tensor) -> list[Tensor]:
    """Directed messages m_e = W1 ReLU(base_e + W4 * sum of messages into
    src(e) except the reverse of e).  Returns per-iteration incoming sums."""
    base = ad.gather_rows(node_in, src)
    if edge_in is not None:
        base = ad.add(base, edge_in)
    H = W1.shape[1]
    n_edges = len(src)
    rev = np.arange(n_edges) ^ 1
    msg = None
    sums = []
    for _ in range(T):
        if msg is None:
            pre = base
        else:
            incoming = ad.scatter_add_rows(msg, dst, n_nodes)
            others = ad.sub(ad.gather_rows(incoming, src), ad.gather_rows(msg, rev))
            pre = ad.add(base, others @ W4)
        msg = ad.relu(pre) @ W1
        sums.append(ad.scatter_add_rows(msg, dst, n_nodes))
    if n_edges == 0:
        zero = Tensor(np.zeros((n_nodes, H), dtype=W1.dtype))
        sums = [zero] * T
    return sums


def gmpn(batch: GraphBatch, store: ParamStore, prefix: str, cfg: EncoderConfig) -> tuple[Tensor, Tensor]:
    """Atom embeddings a (n_atoms x H) and graph embeddings h = sum a (n_graphs x H)."""
    p = lambda n: store[prefix + n]
    x = Tensor(batch.x)
    src, dst = _directed(batch.n_atoms, batch.bi, batch.bj)
    pre = x @ p("U_a2")
    if cfg.t_a > 0:
        xe = Tensor(np.repeat(batch.xb, 2, axis=0)) @ p("W_a3")
        sums = _message_passing(x @ p("W_a2"), xe, src, dst, batch.n_atoms, cfg.t_a, p("W_a1"), p("W_a4"))
        pre = ad.add(pre, ad.concat(sums, axis=1) @ p("U_a3"))
    a = ad.relu(pre) @ p("U_a1")
    h = ad.scatter_add_rows(a, batch.atom_graph, batch.n_graphs)
    return a, h


def fmpn(batch: GraphBatch, a: Tensor, store: ParamStore, prefix: str, cfg: EncoderConfig) -> Tensor:
    """Fragment embeddings n (n_frags x H) from fragment sums and edge atoms."""
    p = lambda n: store[prefix + n]
    s = ad.scatter_add_rows(a, batch.membership, batch.n_frags)
    s_edge = ad.gather_rows(a, batch.frag_atom) @ p("W_e3") if len(batch.frag_src) else None
    sums = _message_passing(s @ p("W_e2"), s_edge, batch.frag_src, batch.frag_dst, batch.n_frags, cfg.t_e,
                            p("W_e1"), p("W_e4"))
    pre = ad.add(s @ p("U_e2"), ad.concat(sums, axis=1) @ p("U_e3"))
    return ad.relu(pre) @ p("U_e1")


def enrich(a: Tensor, n: Tensor, membership, V: Tensor) -> Tensor:
    """a' = (a ++ n[frag(i)]) V."""
    return ad.concat([a, ad.gather_rows(n, membership)], axis=1) @ V


def bond_embed(batch: GraphBatch, a: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """b_ij = U_b1 ReLU(U_b2 x_ij + U_b3 (a_i + a_j) + U_b4 |a_i - a_j|)."""
    p = lambda n: store[prefix + n]
    if batch.n_bonds == 0:
        return Tensor(np.zeros((0, p("U_b1").shape[1]), dtype=a.dtype))
    ai, aj = ad.gather_rows(a, batch.bi), ad.gather_rows(a, batch.bj)
    pre = ad.add(ad.add(Tensor(batch.xb) @ p("U_b2"), ad.add(ai, aj) @ p("U_b3")), ad.abs_diff(ai, aj) @ p("U_b4"))
    return ad.relu(pre) @ p("U_b1")


@dataclass
class Embeddings:
    atoms: Tensor          # enriched when BRICS is on
    bonds: Tensor
    graph: Tensor          # h = sum of (unenriched) atom embeddings
    plain_atoms: Tensor
    fragments: Tensor | None = None


def encode(batch: GraphBatch, store: ParamStore, prefix: str, cfg: EncoderConfig, with_bonds: bool = True) -> Embeddings:
    a, h = gmpn(batch, store, prefix, cfg)
    atoms, frags = a, None
    if cfg.use_brics:
        frags = fmpn(batch, a, store, prefix, cfg)
        atoms = enrich(a, frags, batch.membership, store[prefix + "V"])
    bonds = bond_embed(batch, atoms, store, prefix) if with_bonds else None
    return Embeddings(atoms, bonds, h, a, frags)

import numpy as np
import pytest

from retrograph.autodiff import ParamStore, Tensor
from retrograph.brics import fragment
from retrograph.chem.features import featurize
from retrograph.chem.smiles import parse_smiles
from retrograph.encoder import EncoderConfig, GraphBatch, bond_embed, encode, enrich, gmpn, init_encoder_params

from gradcheck import max_rel_error

relu = lambda z: np.maximum(z, 0)  # noqa: E731


def make(cfg, seed=0):
    s = ParamStore(seed=seed)
    init_encoder_params(s, "t/", cfg)
    return s


def dense_messages(node_in, edge_in, edges, n, T, W1, W4):
    """Loop-based message passing over an explicit directed edge list."""
    m = {e: np.zeros(W1.shape[1]) for e in edges}
    sums = []
    for t in range(T):
        new = {}
        for (u, v) in edges:
            pre = node_in[u] + (edge_in[(u, v)] if edge_in is not None else 0)
            if t > 0:
                inc = sum((m[(w, x)] for (w, x) in edges if x == u and w != v), np.zeros(W1.shape[1]))
                pre = pre + inc @ W4
            new[(u, v)] = relu(pre) @ W1
        m = new
        s = np.zeros((n, W1.shape[1]))
        for (u, v), val in m.items():
            s[v] += val
        sums.append(s)
    return sums


def dense_gmpn(g, store, cfg):
    p = lambda k: store["t/" + k].data  # noqa: E731
    x, xb = featurize(g)
    edges, e_in = [], {}
    for k, b in enumerate(g.bonds):
        for u, v in ((b.i, b.j), (b.j, b.i)):
            edges.append((u, v))
            e_in[(u, v)] = xb[k] @ p("W_a3")
    pre = x @ p("U_a2")
    if cfg.t_a:
        sums = dense_messages(x @ p("W_a2"), e_in, edges, g.n_atoms, cfg.t_a, p("W_a1"), p("W_a4"))
        pre = pre + np.concatenate(sums, axis=1) @ p("U_a3")
    a = relu(pre) @ p("U_a1")
    return a, a.sum(0)


def dense_fmpn(g, a, store, cfg):
    p = lambda k: store["t/" + k].data  # noqa: E731
    bg = fragment(g)
    s = np.zeros((bg.n_nodes, a.shape[1]))
    for i, f in enumerate(bg.membership):
        s[f] += a[i]
    edges, e_in = [], {}
    for u, v, k in bg.edges:
        b = g.bonds[k]
        au = b.i if bg.membership[b.i] == u else b.j
        av = b.j if au == b.i else b.i
        edges += [(u, v), (v, u)]
        e_in[(u, v)] = a[au] @ p("W_e3")
        e_in[(v, u)] = a[av] @ p("W_e3")
    sums = dense_messages(s @ p("W_e2"), e_in, edges, bg.n_nodes, cfg.t_e, p("W_e1"), p("W_e4"))
    return relu(s @ p("U_e2") + np.concatenate(sums, axis=1) @ p("U_e3")) @ p("U_e1"), bg


@pytest.mark.parametrize("smiles", ["C", "CCO", "c1ccccc1O", "CC(=O)Nc1ccc(OCC(=O)OC)cc1"])
def test_gmpn_matches_dense(smiles):
    cfg = EncoderConfig(hidden_dim=6, t_a=3)
    st = make(cfg)
    g = parse_smiles(smiles)
    a, h = gmpn(GraphBatch.build([g]), st, "t/", cfg)
    ra, rh = dense_gmpn(g, st, cfg)
    assert np.allclose(a.data, ra, atol=1e-12) and np.allclose(h.data[0], rh, atol=1e-12)


def test_single_atom_reduction():
    cfg = EncoderConfig(hidden_dim=5, t_a=2)
    st = make(cfg)
    g = parse_smiles("C")
    a, h = gmpn(GraphBatch.build([g]), st, "t/", cfg)
    x, _ = featurize(g)
    ref = relu(x @ st["t/U_a2"].data) @ st["t/U_a1"].data
    assert np.allclose(a.data, ref) and np.allclose(h.data, ref)


def test_zero_params_zero_embeddings():
    cfg = EncoderConfig(hidden_dim=4, t_a=2, t_e=2, use_brics=True)
    st = make(cfg)
    st.fill(0.0)
    e = encode(GraphBatch.build([parse_smiles("CCOC(C)=O")], with_brics=True), st, "t/", cfg)
    for t in (e.atoms, e.bonds, e.graph, e.fragments):
        assert not t.data.any()


@pytest.mark.parametrize("smiles", ["CCOC(C)=O", "CC(=O)Nc1ccc(OCC(=O)OC)cc1", "CCOC(=O)c1csc(-c2ccc(F)cc2)c1"])
def test_fmpn_matches_dense(smiles):
    cfg = EncoderConfig(hidden_dim=5, t_a=2, t_e=3, use_brics=True)
    st = make(cfg)
    g = parse_smiles(smiles)
    e = encode(GraphBatch.build([g], with_brics=True), st, "t/", cfg)
    ra, _ = dense_gmpn(g, st, cfg)
    rn, bg = dense_fmpn(g, ra, st, cfg)
    assert np.allclose(e.fragments.data, rn, atol=1e-12)
    enriched = np.concatenate([ra, rn[list(bg.membership)]], axis=1) @ st["t/V"].data
    assert np.allclose(e.atoms.data, enriched, atol=1e-12)


def test_single_fragment_fmpn():
    cfg = EncoderConfig(hidden_dim=4, t_a=1, t_e=2, use_brics=True)
    st = make(cfg)
    g = parse_smiles("c1ccccc1")
    e = encode(GraphBatch.build([g], with_brics=True), st, "t/", cfg)
    s0 = e.plain_atoms.data.sum(0)
    ref = relu(s0 @ st["t/U_e2"].data) @ st["t/U_e1"].data
    assert np.allclose(e.fragments.data[0], ref)


def test_enrich_identity_block(rng):
    a, n = rng.normal(size=(4, 3)), rng.normal(size=(2, 3))
    V = np.vstack([np.eye(3), np.zeros((3, 3))])
    out = enrich(Tensor(a), Tensor(n), [0, 1, 1, 0], Tensor(V))
    assert np.allclose(out.data, a)
    out = enrich(Tensor(a), Tensor(np.zeros((2, 3))), [0, 1, 1, 0], Tensor(rng.normal(size=(6, 3))))
    assert out.shape == (4, 3)


def test_bond_embed_symmetric_and_dense():
    cfg = EncoderConfig(hidden_dim=5, t_a=2)
    st = make(cfg)
    g = parse_smiles("CC(=O)O")
    batch = GraphBatch.build([g])
    a, _ = gmpn(batch, st, "t/", cfg)
    b = bond_embed(batch, a, st, "t/")
    p = lambda k: st["t/" + k].data  # noqa: E731
    _, xb = featurize(g)
    for k, bd in enumerate(g.bonds):
        ai, aj = a.data[bd.i], a.data[bd.j]
        ref = relu(xb[k] @ p("U_b2") + (ai + aj) @ p("U_b3") + np.abs(ai - aj) @ p("U_b4")) @ p("U_b1")
        swapped = relu(xb[k] @ p("U_b2") + (aj + ai) @ p("U_b3") + np.abs(aj - ai) @ p("U_b4")) @ p("U_b1")
        assert np.allclose(b.data[k], ref) and np.allclose(ref, swapped)


def test_permutation_invariance(rng):
    cfg = EncoderConfig(hidden_dim=8, t_a=3, t_e=2, use_brics=True)
    st = make(cfg)
    g = parse_smiles("CCOC(=O)c1csc(-c2ccc(F)cc2)c1")
    e = encode(GraphBatch.build([g], with_brics=True), st, "t/", cfg)
    for _ in range(5):
        perm = rng.permutation(g.n_atoms)
        ep = encode(GraphBatch.build([g.permute(perm)], with_brics=True), st, "t/", cfg)
        assert np.allclose(ep.graph.data, e.graph.data, rtol=1e-9, atol=1e-12)
        assert np.allclose(ep.atoms.data[perm], e.atoms.data, atol=1e-10)


def test_batching_equals_single():
    cfg = EncoderConfig(hidden_dim=6, t_a=2, t_e=2, use_brics=True)
    st = make(cfg)
    gs = [parse_smiles(s) for s in ("CCO", "c1ccccc1C(=O)OC", "N")]
    eb = encode(GraphBatch.build(gs, with_brics=True), st, "t/", cfg)
    for k, g in enumerate(gs):
        e1 = encode(GraphBatch.build([g], with_brics=True), st, "t/", cfg)
        assert np.allclose(eb.graph.data[k], e1.graph.data[0])


def test_t_a_zero_allowed():
    cfg = EncoderConfig(hidden_dim=4, t_a=0)
    st = make(cfg)
    assert "t/U_a3" not in st
    a, _ = gmpn(GraphBatch.build([parse_smiles("CCO")]), st, "t/", cfg)
    assert a.shape == (3, 4)


def test_encoder_gradients():
    cfg = EncoderConfig(hidden_dim=4, t_a=2, t_e=2, use_brics=True)
    st = make(cfg, seed=3)
    batch = GraphBatch.build([parse_smiles("CCOC(C)=O"), parse_smiles("c1ccccc1N")], with_brics=True)
    w = np.random.default_rng(0).normal(size=(4, 1))

    def loss():
        from retrograph import autodiff as ad
        e = encode(batch, st, "t/", cfg)
        return ad.add(ad.total(e.bonds @ Tensor(w)), ad.total(ad.mul(e.graph, e.graph)))

    assert max_rel_error(loss, [p for _, p in st.items()], n_probe=6) < 1e-4

import numpy as np
import pytest

from retrograph.autodiff import Tensor
from retrograph.chem.isomorphism import is_isomorphic
from retrograph.chem.smiles import parse_smiles, write_smiles
from retrograph.encoder import EncoderConfig
from retrograph.reactions import (Step, SubstructureVocab, derive_synthons, extract_center_label, extract_trace,
                                  parse_reaction, prepare)
from retrograph.reactions.trace import Unit
from retrograph.synthon import (AllMasked, CompletionItem, SynthonModel, UnitTable, aacp, aatp, attach,
                                completion_loss, init_synthon_params, sequence_accuracy, start)

from gradcheck import max_rel_error

CFG = EncoderConfig(hidden_dim=6, t_a=2)
ALKYL_CL = "[CH3:1][CH2:2]Cl.[NH3:3]>>[CH3:1][CH2:2][NH2:3]"
VOCAB = SubstructureVocab(["[C:1]Cl", "[N:1]C", "[C:1]=O", "[c:1]1ccccc1", "[O:1]C"], [5, 4, 3, 2, 1])


def _example(line=ALKYL_CL):
    return prepare([parse_reaction(line)]).examples[0]


def test_aacp_zero_params_is_half_and_greedy_stops():
    m = SynthonModel.create(CFG, VOCAB)
    m.store.fill(0.0)
    z = Tensor(np.zeros((1, 6)))
    assert np.allclose(aacp(z, z, z, m.store).data, 0.5)
    ex = _example()
    ig = m.greedy(ex.synthon, ex.label.center_atoms(), ex.record.product)
    assert ig.complete and all(s.is_stop for s in ig.actions)
    assert len(ig.actions) == len(ex.label.center_atoms())
    assert np.isclose(ig.score, len(ig.actions) * np.log(0.5))


def test_aatp_uniform_and_single_legal():
    m = SynthonModel.create(CFG, VOCAB, seed=2)
    z = Tensor(np.random.default_rng(0).normal(size=(1, 6)))
    mask = np.array([[True, False, True, True, False]])
    p = aatp(z, z, z, m.store, mask).data[0]
    assert np.isclose(p.sum(), 1.0) and p[1] == 0 and p[4] == 0
    single = np.array([[False, False, True, False, False]])
    assert np.allclose(aatp(z, z, z, m.store, single).data[0], [0, 0, 1, 0, 0])
    m.store.fill(0.0)
    assert np.allclose(aatp(z, z, z, m.store, mask).data[0][mask[0]], 1 / 3)
    with pytest.raises(AllMasked):
        aatp(z, z, z, m.store, np.zeros((1, 5), bool))


def test_brics_rejected():
    from retrograph.autodiff import ParamStore
    with pytest.raises(ValueError):
        init_synthon_params(ParamStore(), EncoderConfig(hidden_dim=4, use_brics=True), 3)


def test_unit_mask_rules():
    vocab = SubstructureVocab(["[C:1]Cl", "[N:1]C", "[C:1]=O", "[c:1]1ccccc1", "[C:1]1CC1"], [1] * 5)
    t = UnitTable(vocab)
    assert t.cost.tolist() == [1, 1, 2, 2, 2]
    g = parse_smiles("CC(C)(C)C.c1ccccc1N.O=CC")
    # quaternary carbon has no hydrogens left
    assert not t.mask(g, 1).any()
    # methyl: element must match, and a fused aromatic anchor may not land on an aliphatic atom
    assert t.mask(g, 0).tolist() == [True, False, True, False, True]
    # aromatic CH: only single-bond units fit its one hydrogen
    assert g.atoms[5].aromatic and t.mask(g, 5).tolist() == [True, False, False, False, False]
    # aniline nitrogen
    n = [i for i, a in enumerate(g.atoms) if a.element == "N"][0]
    assert t.mask(g, n).tolist() == [False, True, False, False, False]


def test_attach_and_frontier():
    ex = _example()
    ig = start(ex.synthon, ex.label.center_atoms())
    assert not ig.complete
    first = ex.trace.steps[0]
    assert ig.top == first.atom
    ig1 = attach(ig, Unit("[C:1]Cl"), -0.5)
    assert ig1.graph.n_atoms == ex.synthon.n_atoms + 1
    assert ig1.top == ex.synthon.n_atoms and ig1.score == -0.5 and ig1.step == 1
    ig2 = ig1
    for _ in range(3):
        ig2 = attach(ig2, None)
    assert ig2.complete
    assert ig2.actions == ex.trace.steps
    assert is_isomorphic(ig2.graph.strip_maps(), ex.record.reactants.strip_maps())
    with pytest.raises(ValueError):
        attach(ig2, None)


def test_step_distribution_normalized(toy_report, toy_vocab):
    m = SynthonModel.create(CFG, toy_vocab, seed=3)
    states, ctxs = [], []
    for ex in toy_report.examples[:8]:
        states.append(start(ex.synthon, ex.label.center_atoms()))
        ctxs.append(m.context(ex.synthon, ex.record.product))
    for d in m.step_distributions(states, ctxs):
        total = np.exp(d.log_stop) + np.exp(d.log_attach).sum()
        assert np.isclose(total, 1.0, atol=1e-9) or d.forced_stop


def test_forced_stop_when_all_masked():
    m = SynthonModel.create(CFG, SubstructureVocab(["[N:1]C"], [1]))
    g = parse_smiles("[CH3:1][CH3:2]")
    ig = start(g, (0, 1))
    d = m.step_distributions([ig], [m.context(g, g)])[0]
    assert d.forced_stop and d.log_stop == 0.0 and np.isneginf(d.log_attach).all()
    out = m.greedy(g, (0, 1), g)
    assert out.complete and out.score == 0.0


def test_loss_with_uniform_heads(toy_report, toy_vocab):
    m = SynthonModel.create(CFG, toy_vocab)
    m.store.fill(0.0)
    items = [CompletionItem.from_example(ex, m) for ex in toy_report.examples[:5]]
    want = 0.0
    for it in items:
        for (_, _, flag, _), mask in zip(it.steps, it.masks):
            if not mask.any():
                continue
            want += np.log(2) + (np.log(mask.sum()) if flag else 0.0)
    parts = {}
    got = completion_loss(items, m, parts).item()
    assert np.isclose(got, want / len(items))
    assert np.isclose(got * len(items), parts["L_o"] + parts["L_z"])


def test_masked_steps_carry_no_loss():
    ex = _example()
    m = SynthonModel.create(CFG, VOCAB)
    it = CompletionItem.from_example(ex, m)
    # the N-center stop has no legal unit only if N has no H; the C stop still counts
    n_scored = sum(mask.any() for mask in it.masks)
    assert n_scored <= len(it.steps)
    m.store.fill(0.0)
    assert np.isclose(completion_loss([it], m).item(), n_scored * np.log(2) + np.log(it.masks[0].sum()))


def test_teacher_forced_states_replay(toy_report, toy_vocab):
    m = SynthonModel.create(CFG, toy_vocab)
    for ex in toy_report.examples[:20]:
        it = CompletionItem.from_example(ex, m)
        assert len(it.states) == 1 + len(ex.trace.units)
        final = it.states[-1]
        assert write_smiles(final.strip_maps()) == it.reactant_key


def test_completion_loss_gradients(toy_report, toy_vocab):
    m = SynthonModel.create(CFG, toy_vocab, seed=5)
    items = [CompletionItem.from_example(ex, m) for ex in toy_report.examples[:3]]
    assert max_rel_error(lambda: completion_loss(items, m), [p for _, p in m.store.items()], n_probe=5) < 1e-4


def test_exact_sequence_implies_same_reactants(toy_report, toy_vocab):
    m = SynthonModel.create(CFG, toy_vocab)
    items = [CompletionItem.from_example(ex, m) for ex in toy_report.examples[:4]]
    seq, same = sequence_accuracy(m, items)
    assert 0 <= seq <= same <= 1

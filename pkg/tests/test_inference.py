import csv

import numpy as np
import pytest

from retrograph.center_id import CenterModel, NoValidCenter
from retrograph.chem.smiles import canonical_smiles, parse_smiles
from retrograph.encoder import EncoderConfig
from retrograph.inference import InferenceConfig, Predictor, beam_search, exhaustive, write_predictions
from retrograph.reactions import SubstructureVocab, parse_reaction, prepare
from retrograph.reactions.trace import Unit
from retrograph.synthon import SynthonModel, attach, start

CFG = EncoderConfig(hidden_dim=8, t_a=2)
ALKYL_BR = "[CH3:1][CH2:2]Br.[OH2:3]>>[CH3:1][CH2:2][OH:3]"


def _entry(line=ALKYL_BR, score=-0.7):
    ex = prepare([parse_reaction(line)]).examples[0]
    return ex, start(ex.synthon, ex.label.center_atoms(), 0, score)


def _replayed_score(model, ctx, entry, actions):
    """Entry score plus the step log-probabilities of ``actions``."""
    ig, total = entry, entry.score
    for step in actions:
        assert step.atom == ig.top
        d = model.step_distributions([ig], [ctx])[0]
        if step.is_stop:
            total += d.log_stop
            ig = attach(ig, None)
        else:
            k = model.vocab.index[step.unit]
            total += d.log_attach[k]
            ig = attach(ig, model.table.units[k])
    assert ig.complete
    return total


def test_br_hand_trace():
    vocab = SubstructureVocab(["[C:1]Br"], [1])
    model = SynthonModel.create(CFG, vocab, seed=4)
    ex, entry = _entry()
    ctx = model.context(ex.synthon, ex.record.product)
    done = beam_search([entry], [ctx], model, N=5, max_steps=10)
    keys = [ig.reactant_key() for ig in done]
    # the carbon keeps receiving bromines until it stops or runs out of hydrogens
    want = {canonical_smiles(s) for s in ("CC.O", "CCBr.O", "CC(Br)Br.O", "CC(Br)(Br)Br.O")}
    assert set(keys) == want and len(keys) == 4
    assert ex.record.reactant_smiles() in keys
    for ig in done:
        assert np.isclose(ig.score, _replayed_score(model, ctx, entry, ig.actions))
    with_br = next(ig for ig in done if "Br" in ig.reactant_key())
    # the aatp head has a single legal unit, so the attach term is log f^o alone; O and Br stops are forced
    c = ex.trace.steps[0].atom
    d = model.step_distributions([entry], [ctx])[0]
    assert entry.top == c and np.isclose(np.exp(d.log_attach[0]) + np.exp(d.log_stop), 1.0)
    assert [s.unit for s in with_br.actions].count("[C:1]Br") >= 1
    assert [r.score for r in done] == sorted((r.score for r in done), reverse=True)


def test_beam_one_is_greedy_on_dominant_paths(toy_report, toy_vocab):
    checked = 0
    for seed in range(12):
        model = SynthonModel.create(CFG, toy_vocab, seed=seed)
        ex = toy_report.examples[seed]
        entry = start(ex.synthon, ex.label.center_atoms(), 0, 0.0)
        ctx = model.context(ex.synthon, ex.record.product)
        g = model.greedy(ex.synthon, ex.label.center_atoms(), ex.record.product, max_steps=4)
        best = exhaustive([entry], [ctx], model, 1, 4)
        if not g.complete or not best or best[0].actions != g.actions:
            continue
        beam = beam_search([entry], [ctx], model, 1, 4)
        assert beam[0].actions == g.actions and np.isclose(beam[0].score, g.score)
        checked += 1
    assert checked >= 3


@pytest.mark.parametrize("N,steps", [(1, 2), (3, 3), (5, 3), (50, 4)])
def test_beam_matches_exhaustive(toy_report, toy_vocab, N, steps):
    units = toy_vocab.encodings[:6]
    vocab = SubstructureVocab(list(units), [1] * len(units))
    rng = np.random.default_rng(N * 10 + steps)
    for trial in range(4):
        model = SynthonModel.create(CFG, vocab, seed=int(rng.integers(1000)))
        picked = [toy_report.examples[k] for k in rng.choice(len(toy_report.examples), 2, replace=False)]
        ctx = [model.context(e.synthon, picked[0].record.product) for e in picked]
        entries = [start(e.synthon, e.label.center_atoms(), k, -float(k)) for k, e in enumerate(picked)]
        got = beam_search(entries, ctx, model, N, steps)
        want = exhaustive(entries, ctx, model, N, steps)
        assert [(r.actions, r.synthon_index) for r in got] == [(r.actions, r.synthon_index) for r in want]
        assert np.allclose([r.score for r in got], [r.score for r in want])


def test_hopeless_entries_pruned():
    model = SynthonModel.create(CFG, SubstructureVocab(["[C:1]Br"], [1]))
    ex, entry = _entry()
    ctx = model.context(ex.synthon, ex.record.product)
    # two center atoms need at least two stops
    assert beam_search([entry], [ctx], model, 3, max_steps=1) == []
    assert exhaustive([entry], [ctx], model, 3, max_steps=1) == []


def test_scores_decrease_along_paths(toy_report, toy_vocab):
    model = SynthonModel.create(CFG, toy_vocab, seed=9)
    ex = toy_report.examples[3]
    entry = start(ex.synthon, ex.label.center_atoms(), 0, -1.0)
    for r in beam_search([entry], [model.context(ex.synthon, ex.record.product)], model, 5, 8):
        assert r.score <= entry.score + 1e-12


def test_inference_config_validation():
    for bad in ({"K": 0}, {"N": 0}, {"max_steps": 0}):
        with pytest.raises(ValueError):
            InferenceConfig(**bad)


@pytest.fixture(scope="module")
def predictor(toy_vocab):
    center = CenterModel.create(EncoderConfig(hidden_dim=16, t_a=2, t_e=2, use_brics=True), seed=2)
    synthon = SynthonModel.create(EncoderConfig(hidden_dim=16, t_a=2), toy_vocab, seed=2)
    return Predictor(center, synthon, InferenceConfig(K=5, N=5, max_steps=10))


def test_predict_dedup_sorted_valid_and_deterministic(predictor, toy_report):
    for ex in toy_report.examples[:6]:
        try:
            out = predictor.predict(ex.record.product)
        except NoValidCenter:
            continue
        keys = [r.reactant_smiles for r in out]
        assert len(keys) == len(set(keys))
        scores = [r.score for r in out]
        assert scores == sorted(scores, reverse=True)
        assert all(not r.reactants.valence_problems() for r in out)
        again = predictor.predict(ex.record.product)
        assert [(r.reactant_smiles, r.score) for r in again] == list(zip(keys, scores))


def test_write_predictions(tmp_path, predictor):
    rows = [("CC(=O)NC", predictor.predict_smiles("CC(=O)NC"))]
    path = tmp_path / "p.tsv"
    write_predictions(path, rows)
    with open(path) as fh:
        lines = list(csv.reader(fh, delimiter="\t"))
    assert lines[0] == ["product", "rank", "score", "reactants", "center"]
    assert [int(r[1]) for r in lines[1:]] == list(range(1, len(rows[0][1]) + 1))
    assert all(parse_smiles(r[3]) for r in lines[1:])


def test_attach_unit_pushes_new_atoms():
    ex, entry = _entry()
    ig = attach(entry, Unit("[C:1]Br"), -0.1)
    assert ig.top == ex.synthon.n_atoms and ig.graph.atoms[ig.top].element == "Br"

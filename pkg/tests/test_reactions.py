import numpy as np
import pytest

from retrograph.chem.graph import BondOrder
from retrograph.chem.isomorphism import is_isomorphic
from retrograph.chem.smiles import SmilesSyntaxError, parse_smiles, write_smiles
from retrograph.reactions import (A, BC, BF, CenterLabel, ChemicallyInvalid, DecompositionError, InvalidLabel,
                                  MappingError, Step, SubstructureVocab, build_vocab, coverage_stats,
                                  derive_synthons, edit_product, extract_center_label, extract_trace,
                                  parse_reaction, prepare, read_reactions, replay_trace)
from retrograph.reactions.synthetic import generate

AMIDE = "[CH3:1][C:2](=[O:3])[OH:4].[NH2:5][CH3:6]>>[CH3:1][C:2](=[O:3])[NH:5][CH3:6]"
OXIDATION = "[CH3:1][CH2:2][OH:3]>>[CH3:1][CH:2]=[O:3]"
BOC = "CC(C)(C)OC(=O)[NH:1][CH3:2]>>[NH2:1][CH3:2]"
ALKYL_CL = "[CH3:1][CH2:2]Cl.[NH3:3]>>[CH3:1][CH2:2][NH2:3]"
PHENYL = "c1ccccc1[NH:1][CH3:2]>>[NH2:1][CH3:2]"


def _replay_ok(line):
    r = parse_reaction(line)
    label = extract_center_label(r)
    syn = derive_synthons(r.product, label)
    trace = extract_trace(r, label, syn)
    out = replay_trace(syn, label.center_atoms(), trace)
    return r, label, syn, trace, out


# parsing ------------------------------------------------------------------

def test_unmapped_product_atom_rejected():
    with pytest.raises(MappingError):
        parse_reaction("[CH3:1][OH:2]>>[CH3:1][O:2]C")


def test_duplicate_map_rejected():
    with pytest.raises(MappingError):
        parse_reaction("[CH3:1][OH:1]>>[CH3:1][OH:1]")


def test_syntax_error_propagates():
    with pytest.raises(SmilesSyntaxError):
        parse_reaction("[CH3:1](>>[CH3:1]")


def test_two_reactant_components():
    r = parse_reaction("CC(=O)O.[NH2:3][CH3:4]>>[NH2:3][CH3:4]")
    # the component without product atoms is kept aside as a reagent
    assert len(r.reactants.components()) + r.n_reagents == 2
    assert r.n_reagents == 1
    assert r.reaction_type is None


def test_two_mapped_reactant_components():
    r = parse_reaction(AMIDE)
    assert len(r.reactants.components()) == 2 and r.n_reagents == 0


def test_type_prefix():
    lines = [f"3,{l.split(',', 1)[1]}" for l in generate(10, seed=2)]
    assert all(parse_reaction(l).reaction_type == 3 for l in lines)


def test_read_reactions_counts_bad(tmp_path):
    p = tmp_path / "r.txt"
    p.write_text(AMIDE + "\nnot a reaction\n" + OXIDATION + "\n")
    recs, bad = read_reactions(p, skip_errors=True)
    assert len(recs) == 2 and bad == 1


# center labels ---------------------------------------------------------------

def test_amide_is_bf():
    r = parse_reaction(AMIDE)
    lab = extract_center_label(r)
    assert lab.kind == BF
    i, j = lab.bond
    assert {r.product.atoms[i].map_num, r.product.atoms[j].map_num} == {2, 5}


def test_oxidation_is_bc_single():
    lab = extract_center_label(parse_reaction(OXIDATION))
    assert lab.kind == BC and lab.original_order == 1


def test_boc_deprotection_is_a_center():
    r = parse_reaction(BOC)
    lab = extract_center_label(r)
    assert lab.kind == A and r.product.atoms[lab.atom].element == "N"


def test_multiple_new_bonds_unsupported():
    lab = extract_center_label(parse_reaction("[CH3:1][NH2:2].[CH3:3]Br.[CH3:4]Br>>[CH3:1][N:2]([CH3:3])[CH3:4]"))
    assert not lab.supported


# synthons ----------------------------------------------------------------------

def test_bf_on_bridge_gives_two_components():
    r = parse_reaction(AMIDE)
    syn = derive_synthons(r.product, extract_center_label(r))
    assert len(syn.components()) == 2
    assert syn.n_atoms == r.product.n_atoms


def test_bc_single_to_double_rebalances_h():
    r = parse_reaction(OXIDATION)
    lab = extract_center_label(r)
    syn = derive_synthons(r.product, lab)
    i, j = lab.bond
    assert syn.n_bonds == r.product.n_bonds
    assert syn.bond_between(i, j).order == BondOrder.SINGLE
    assert syn.atoms[i].explicit_h == r.product.atoms[i].explicit_h + 1
    assert syn.atoms[j].explicit_h == r.product.atoms[j].explicit_h + 1


def test_a_center_synthon_is_product():
    r = parse_reaction(BOC)
    syn = derive_synthons(r.product, extract_center_label(r))
    assert is_isomorphic(syn, r.product, with_maps=True)


def test_invalid_label_bond_missing():
    r = parse_reaction(OXIDATION)
    with pytest.raises(InvalidLabel):
        derive_synthons(r.product, CenterLabel(BF, bond=(0, 2)))


def test_edit_rejects_overvalent_result():
    g = parse_smiles("[C:1]([CH3:3])([CH3:4])([CH3:5])[CH3:2]")
    with pytest.raises(ChemicallyInvalid):
        edit_product(g, BC, (0, 1), None, 2)  # the quaternary carbon has no H to give up
    ok = edit_product(parse_smiles("[CH3:1][CH3:2]"), BC, (0, 1), None, 3)
    assert [a.explicit_h for a in ok.atoms] == [1, 1]


# traces -------------------------------------------------------------------------

def test_trace_single_cl():
    r, lab, syn, trace, out = _replay_ok(ALKYL_CL)
    c = [i for i in lab.center_atoms() if syn.atoms[i].element == "C"][0]
    n = [i for i in lab.center_atoms() if syn.atoms[i].element == "N"][0]
    cl = syn.n_atoms  # first new atom
    assert trace.steps == (Step(c, "[C:1]Cl"), Step(cl), Step(c), Step(n))
    assert is_isomorphic(out, r.reactants)


def test_trace_bc_only_stops():
    r, lab, syn, trace, out = _replay_ok(OXIDATION)
    assert all(s.is_stop for s in trace.steps) and len(trace) == 2
    assert {s.atom for s in trace.steps} == set(lab.bond)


def test_trace_phenyl_ring_unit():
    r, lab, syn, trace, out = _replay_ok(PHENYL)
    first = trace.steps[0]
    assert first.unit is not None and first.atom == lab.atom
    assert parse_smiles(first.unit).n_atoms == 7  # anchor plus six ring atoms
    assert [s.is_stop for s in trace.steps[1:]] == [True] * 7
    assert is_isomorphic(out, r.reactants)


def test_trace_boc_replays():
    r, lab, syn, trace, out = _replay_ok(BOC)
    assert is_isomorphic(out, r.reactants)
    assert len(trace.units) == 7


def test_replay_rejects_wrong_atom():
    r, lab, syn, trace, _ = _replay_ok(ALKYL_CL)
    steps = list(trace.steps)
    steps[0] = Step(steps[2].atom + 100, steps[0].unit)
    with pytest.raises(ValueError):
        replay_trace(syn, lab.center_atoms(), type(trace)(tuple(steps), trace.components))


def test_unsupported_label_has_no_trace():
    r = parse_reaction("[CH3:1][NH2:2].[CH3:3]Br.[CH3:4]Br>>[CH3:1][N:2]([CH3:3])[CH3:4]")
    with pytest.raises(DecompositionError):
        extract_trace(r, extract_center_label(r))


def test_replay_sample_all_extractable(sample_report):
    assert len(sample_report.examples) > 900
    for ex in sample_report.examples[:200]:
        out = replay_trace(ex.synthon, ex.label.center_atoms(), ex.trace)
        assert is_isomorphic(out, ex.record.reactants, with_maps=False)


# vocabulary --------------------------------------------------------------------

def test_empty_vocab():
    assert len(build_vocab([])) == 0


def test_two_bromides_one_entry():
    lines = ["[CH3:1][CH2:2][CH3:3]>>[CH3:1][CH:2](Br)[CH3:3]"]
    recs = [parse_reaction("[CH3:1][CH:2](Br)[CH3:3].[NH3:4]>>[CH3:1][CH:2]([NH2:4])[CH3:3]"),
            parse_reaction("[CH3:1][CH2:2]Br.[OH2:3]>>[CH3:1][CH2:2][OH:3]")]
    del lines
    vocab = build_vocab(recs)
    assert vocab.encodings == ["Br[C:1]"] or len(vocab) == 1
    assert vocab.frequencies == [2]


def test_vocab_tsv_round_trip(tmp_path, toy_vocab):
    p = tmp_path / "v.tsv"
    toy_vocab.write_tsv(p)
    assert p.read_text().splitlines()[0] == "encoding\tanchor\tfrequency"
    back = SubstructureVocab.read_tsv(p)
    assert back.encodings == toy_vocab.encodings and back.frequencies == toy_vocab.frequencies


def test_vocab_sorted_by_frequency(toy_vocab):
    f = toy_vocab.frequencies
    assert f == sorted(f, reverse=True)


def test_coverage_all_bc():
    recs = [parse_reaction(OXIDATION), parse_reaction("[CH3:1][CH2:2][NH2:3]>>[CH3:1][CH:2]=[NH:3]")]
    s = coverage_stats(recs)
    assert s[BC] == 1.0 and s["supported"] == 1.0 and s["n"] == 2


def test_coverage_fractions_sum(sample_records):
    s = coverage_stats(sample_records)
    assert abs(s[BF] + s[BC] + s[A] + s["Unsupported"] - 1.0) < 1e-12
    assert s["supported"] > 0.9


def test_prepare_counts_unsupported(sample_records):
    rep = prepare(sample_records[:300])
    assert len(rep.examples) + rep.n_unsupported + rep.n_decomposition_errors == 300
    assert rep.n_decomposition_errors == 0

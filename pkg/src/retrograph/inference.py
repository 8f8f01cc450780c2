"""End-to-end prediction: top-K synthons, then beam-searched completion."""

from __future__ import annotations

import csv
import heapq
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .center_id import CenterModel, NoValidCenter, SynthonCandidate
from .chem.graph import MolGraph
from .chem.smiles import parse_smiles
from .synthon import IntermediateGraph, SynthonModel, attach, start

log = logging.getLogger(__name__)


@dataclass
class InferenceConfig:
    K: int = 10
    N: int = 10
    max_steps: int = 30

    def __post_init__(self):
        if self.K < 1 or self.N < 1 or self.max_steps < 1:
            raise ValueError("K, N and max_steps must all be at least 1")


@dataclass
class RankedReaction:
    reactants: MolGraph
    reactant_smiles: str
    score: float
    center: str
    synthon_index: int = 0
    actions: tuple = ()


def _children(ig: IntermediateGraph, d, N: int, units) -> list[IntermediateGraph]:
    out = [attach(ig, None, d.log_stop)]
    if d.forced_stop:
        return out
    legal = np.flatnonzero(np.isfinite(d.log_attach))
    # stable: equal scores keep vocabulary order
    best = legal[np.argsort(-d.log_attach[legal], kind="stable")][:N]
    out.extend(attach(ig, units[k], float(d.log_attach[k])) for k in best)
    return out


def _hopeless(ig: IntermediateGraph, max_steps: int) -> bool:
    # every frontier atom still needs at least one Stop
    return len(ig.frontier) > max_steps - ig.step


def beam_search(entries: Sequence[IntermediateGraph], contexts: Sequence[tuple], model: SynthonModel, N: int,
                max_steps: int = 30, reaction_type=None) -> list[IntermediateGraph]:
    """Top-N completed intermediate graphs.

    ``entries`` are the starting synthon states (their score is the synthon
    score); ``contexts[e.synthon_index]`` holds (h_s, h_p).  Each step
    expands every queued entry into its Stop branch plus its N best Attach
    branches, keeps the global N best incomplete children and moves
    completed ones to the result list.  The loop ends when the queue is
    empty, after ``max_steps`` expansions, or when no queued entry can beat
    the N-th completed result (scores only decrease).
    """
    queue = [e for e in entries if not _hopeless(e, max_steps)]
    done = [e for e in entries if e.complete]
    queue = [e for e in queue if not e.complete]
    units = model.table.units
    tie = 0
    for _ in range(max_steps):
        if not queue:
            break
        if len(done) >= N:
            nth = sorted((-r.score for r in done))[N - 1]
            if max(e.score for e in queue) <= -nth:
                break
        dists = model.step_distributions(queue, [contexts[e.synthon_index] for e in queue],
                                         None if reaction_type is None else [reaction_type] * len(queue))
        pool = []
        for e, d in zip(queue, dists):
            for child in _children(e, d, N, units):
                if child.complete:
                    done.append(child)
                elif not _hopeless(child, max_steps):
                    pool.append((-child.score, tie, child))
                    tie += 1
        queue = [c for _, _, c in heapq.nsmallest(N, pool)]
    if not done:
        log.info("beam search finished without a complete reactant set")
    done.sort(key=lambda r: (-r.score, r.reactant_key()))
    return done[:N]


def exhaustive(entries: Sequence[IntermediateGraph], contexts: Sequence[tuple], model: SynthonModel, N: int,
               max_steps: int = 30, reaction_type=None) -> list[IntermediateGraph]:
    """Every legal action sequence of at most ``max_steps`` steps, ranked by
    summed log-probability (reference for small instances)."""
    done, stack = [], [e for e in entries]
    units = model.table.units
    while stack:
        e = stack.pop()
        if e.complete:
            done.append(e)
            continue
        if e.step >= max_steps:
            continue
        d = model.step_distributions([e], [contexts[e.synthon_index]], None if reaction_type is None else [reaction_type])[0]
        stack.extend(_children(e, d, len(units), units))
    done.sort(key=lambda r: (-r.score, r.reactant_key()))
    return done[:N]


class Predictor:
    def __init__(self, center: CenterModel, synthon: SynthonModel, cfg: InferenceConfig):
        self.center = center
        self.synthon = synthon
        self.cfg = cfg

    def synthons(self, product: MolGraph, reaction_type=None) -> list[SynthonCandidate]:
        res = self.center.top_k([product], self.cfg.K, None if reaction_type is None else [reaction_type])[0]
        if not res:
            raise NoValidCenter("no chemically valid reaction center")
        return res

    def predict(self, product: MolGraph, reaction_type=None) -> list[RankedReaction]:
        """Ranked, de-duplicated reactant sets for one product."""
        cands = self.synthons(product, reaction_type)
        entries, contexts = [], []
        for k, c in enumerate(cands):
            contexts.append(self.synthon.context(c.synthon, product, reaction_type))
            entries.append(start(c.synthon, c.label().center_atoms(), k, c.score))
        done = beam_search(entries, contexts, self.synthon, self.cfg.N, self.cfg.max_steps, reaction_type)
        best: dict[str, RankedReaction] = {}
        for ig in done:
            key = ig.reactant_key()
            if key not in best or ig.score > best[key].score:
                best[key] = RankedReaction(ig.graph.strip_maps(), key, ig.score,
                                           cands[ig.synthon_index].candidate.describe(product), ig.synthon_index, ig.actions)
        return sorted(best.values(), key=lambda r: (-r.score, r.reactant_smiles))

    def predict_smiles(self, smiles: str, reaction_type=None) -> list[RankedReaction]:
        return self.predict(parse_smiles(smiles), reaction_type)


def write_predictions(path, rows: Sequence[tuple[str, list[RankedReaction]]]) -> None:
    """TSV: product, rank, score, reactants, center."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["product", "rank", "score", "reactants", "center"])
        for product, ranked in rows:
            for k, r in enumerate(ranked, 1):
                w.writerow([product, k, f"{r.score:.6f}", r.reactant_smiles, r.center])

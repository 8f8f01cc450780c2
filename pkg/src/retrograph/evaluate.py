"""Accuracy metrics, reaction similarity and diversity clustering."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans

from .chem.fingerprint import morgan_fingerprint, tanimoto
from .chem.smiles import canonical_smiles, parse_smiles

OVERALL_KS = (1, 3, 5, 10)
MODULE_KS = (1, 2, 3, 5)


class MissingGroundTruth(ValueError):
    pass


class FewerPointsThanClusters(ValueError):
    pass


def _canon(smiles: str) -> str:
    try:
        return canonical_smiles(smiles)
    except Exception:
        return smiles


def first_hit(ranked: Sequence[str], truth: str, canonicalize: bool = True) -> int | None:
    """1-based rank of the ground truth in ``ranked`` or None."""
    key = _canon(truth) if canonicalize else truth
    for k, s in enumerate(ranked, 1):
        if (_canon(s) if canonicalize else s) == key:
            return k
    return None


def topk_accuracy(predictions: Sequence[Sequence[str]], ground_truth: Sequence[str], ks=OVERALL_KS,
                  canonicalize: bool = True) -> dict[int, float]:
    """Fraction of records whose ground-truth reactant set is among the k
    best predictions.  ``predictions[i]`` is the ranked list for record i."""
    if len(predictions) != len(ground_truth):
        raise ValueError("predictions and ground truth differ in length")
    hits = {k: 0 for k in ks}
    for i, (ranked, truth) in enumerate(zip(predictions, ground_truth)):
        if not truth:
            raise MissingGroundTruth(f"record {i} has no ground-truth reactants")
        r = first_hit(ranked, truth, canonicalize)
        for k in ks:
            hits[k] += r is not None and r <= k
    n = max(len(ground_truth), 1)
    return {k: hits[k] / n for k in ks}


def module_accuracy(predictions: Sequence[Sequence[str]], labels: Sequence[str], ks=MODULE_KS) -> dict[int, float]:
    """Top-k accuracy of one module on exact keys (synthon SMILES with maps
    for the center module, reactant SMILES for completion given the true
    center)."""
    return topk_accuracy(predictions, labels, ks, canonicalize=False)


def per_class_accuracy(predictions, ground_truth, classes, ks=OVERALL_KS) -> dict[object, dict[int, float]]:
    groups = defaultdict(list)
    for p, g, c in zip(predictions, ground_truth, classes):
        groups[c].append((p, g))
    return {c: topk_accuracy([p for p, _ in v], [g for _, g in v], ks) for c, v in sorted(groups.items(), key=lambda kv: str(kv[0]))}


# similarity -----------------------------------------------------------------

def _fps(reactants):
    if isinstance(reactants, str):
        reactants = reactants.split(".")
    return [morgan_fingerprint(parse_smiles(s) if isinstance(s, str) else s) for s in reactants]


def similarity_matrix(r1, r2) -> np.ndarray:
    f1, f2 = _fps(r1), _fps(r2)
    return np.array([[tanimoto(a, b) for b in f2] for a in f1])


def reaction_similarity(r1, r2) -> float:
    """Best one-to-one pairing of reactants by Tanimoto similarity, summed
    and divided by the larger reactant count."""
    s = similarity_matrix(r1, r2)
    if s.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(s, maximize=True)
    return float(s[rows, cols].sum() / max(s.shape))


def similarity_histogram(reactant_sets: Sequence, bins: int = 10) -> np.ndarray:
    """Normalized histogram of pairwise similarities among predictions."""
    sims = [reaction_similarity(a, b) for i, a in enumerate(reactant_sets) for b in reactant_sets[i + 1:]]
    h, _ = np.histogram(sims, bins=bins, range=(0.0, 1.0))
    return h / max(len(sims), 1)


@dataclass
class DiversityReport:
    labels: np.ndarray
    cluster_mean_similarity: np.ndarray
    cluster_center_count: np.ndarray
    correlation: float
    inertia: float

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["cluster", "size", "mean_similarity", "mean_center_count"])
            for c in range(len(self.cluster_mean_similarity)):
                w.writerow([c, int((self.labels == c).sum()), f"{self.cluster_mean_similarity[c]:.6f}",
                            f"{self.cluster_center_count[c]:.6f}"])
            w.writerow(["correlation", "", f"{self.correlation:.6f}", ""])


def diversity_cluster(histograms, mean_similarity, center_counts, n_clusters: int = 10, seed: int = 0) -> DiversityReport:
    """Seeded k-means (k-means++ init) on per-product similarity histograms;
    reports per-cluster mean similarity and number of distinct centers, and
    their correlation across clusters."""
    X = np.asarray(histograms, dtype=np.float64)
    if len(X) < n_clusters:
        raise FewerPointsThanClusters(f"{len(X)} points for {n_clusters} clusters")
    km = KMeans(n_clusters=n_clusters, init="k-means++", n_init=10, random_state=seed).fit(X)
    labels = km.labels_
    sim = np.asarray(mean_similarity, dtype=np.float64)
    cnt = np.asarray(center_counts, dtype=np.float64)
    ms = np.array([sim[labels == c].mean() for c in range(n_clusters)])
    mc = np.array([cnt[labels == c].mean() for c in range(n_clusters)])
    corr = float(np.corrcoef(ms, mc)[0, 1]) if n_clusters > 1 and ms.std() > 0 and mc.std() > 0 else float("nan")
    return DiversityReport(labels, ms, mc, corr, float(km.inertia_))


# file-level evaluation ---------------------------------------------------------

def read_predictions(path) -> dict[str, list[str]]:
    """product -> reactant sets ordered by rank (from the prediction TSV)."""
    rows = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for rec in csv.DictReader(fh, delimiter="\t"):
            rows[rec["product"]].append((int(rec["rank"]), rec["reactants"]))
    return {p: [s for _, s in sorted(v)] for p, v in rows.items()}


def evaluate_files(pred_path, records, out_csv, ks=OVERALL_KS) -> dict[str, dict[int, float]]:
    """Top-k table overall and per reaction class; products are matched by
    canonical SMILES."""
    preds = {_canon(p): v for p, v in read_predictions(pred_path).items()}
    ranked = [preds.get(r.product_smiles(), []) for r in records]
    gold = [r.reactant_smiles() for r in records]
    table = {"all": topk_accuracy(ranked, gold, ks)}
    classes = [r.reaction_type for r in records]
    if any(c is not None for c in classes):
        for c, acc in per_class_accuracy(ranked, gold, classes, ks).items():
            table[f"class_{c}"] = acc
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["subset", "n"] + [f"top{k}" for k in ks])
        for name, acc in table.items():
            n = len(records) if name == "all" else sum(1 for c in classes if f"class_{c}" == name)
            w.writerow([name, n] + [f"{acc[k]:.6f}" for k in ks])
    return table

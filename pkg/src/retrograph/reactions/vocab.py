"""Substructure vocabulary and center-type coverage statistics."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .center import A, BC, BF, UNSUPPORTED, CenterLabel, ChemicallyInvalid, derive_synthons, extract_center_label
from .record import ReactionRecord
from .trace import AttachmentTrace, DecompositionError, Unit, extract_trace

log = logging.getLogger(__name__)


@dataclass
class SubstructureVocab:
    """Units sorted by descending frequency, then encoding."""

    encodings: list[str] = field(default_factory=list)
    frequencies: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.index = {e: k for k, e in enumerate(self.encodings)}
        if len(self.index) != len(self.encodings):
            raise ValueError("duplicate vocabulary encodings")
        self._units = [Unit(e) for e in self.encodings]

    def __len__(self) -> int:
        return len(self.encodings)

    def __contains__(self, enc: str) -> bool:
        return enc in self.index

    def unit(self, k: int) -> Unit:
        return self._units[k]

    @property
    def units(self) -> list[Unit]:
        return self._units

    def unit_map(self) -> dict[str, Unit]:
        return dict(zip(self.encodings, self._units))

    def anchors(self) -> list[str]:
        return [u.anchor_element for u in self._units]

    @classmethod
    def from_counts(cls, counts: Counter) -> "SubstructureVocab":
        items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([e for e, _ in items], [c for _, c in items])

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("encoding\tanchor\tfrequency\n")
            for e, u, c in zip(self.encodings, self._units, self.frequencies):
                fh.write(f"{e}\t{u.anchor_element}\t{c}\n")

    @classmethod
    def read_tsv(cls, path) -> "SubstructureVocab":
        enc, freq = [], []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if header[:3] != ["encoding", "anchor", "frequency"]:
                raise ValueError(f"{path}: not a vocabulary file")
            for line in fh:
                if not line.strip():
                    continue
                e, _, c = line.rstrip("\n").split("\t")
                enc.append(e)
                freq.append(int(c))
        return cls(enc, freq)


@dataclass
class Example:
    """A record with its label, synthon graph and teacher-forcing trace."""

    record: ReactionRecord
    label: CenterLabel
    synthon: object = None
    trace: AttachmentTrace | None = None


@dataclass
class ExtractionReport:
    examples: list[Example]
    n_unsupported: int = 0
    n_decomposition_errors: int = 0
    reasons: Counter = field(default_factory=Counter)


def prepare(records: Sequence[ReactionRecord]) -> ExtractionReport:
    """Label every record and extract traces; failures are counted, not raised."""
    out, n_uns, n_dec = [], 0, 0
    reasons: Counter = Counter()
    for r in records:
        label = extract_center_label(r)
        if not label.supported:
            n_uns += 1
            reasons[label.reason] += 1
            continue
        try:
            synthon = derive_synthons(r.product, label)
            trace = extract_trace(r, label, synthon)
        except (DecompositionError, ChemicallyInvalid) as exc:
            n_dec += 1
            reasons[f"decomposition: {exc}"] += 1
            continue
        out.append(Example(r, label, synthon, trace))
    if n_uns or n_dec:
        log.info("excluded %d unsupported and %d undecomposable records", n_uns, n_dec)
    return ExtractionReport(out, n_uns, n_dec, reasons)


def build_vocab(records: Iterable[ReactionRecord] | ExtractionReport) -> SubstructureVocab:
    report = records if isinstance(records, ExtractionReport) else prepare(list(records))
    counts: Counter = Counter()
    for ex in report.examples:
        counts.update(ex.trace.units)
    return SubstructureVocab.from_counts(counts)


KINDS = (BF, BC, A, UNSUPPORTED)


def coverage_stats(records: Iterable[ReactionRecord]) -> dict[str, float]:
    """Fraction of records per center kind; also ``supported`` and ``n``."""
    counts = Counter(extract_center_label(r).kind for r in records)
    n = sum(counts.values())
    out = {k: (counts[k] / n if n else 0.0) for k in KINDS}
    out["supported"] = 1.0 - out[UNSUPPORTED] if n else 0.0
    out["n"] = n
    return out


def write_stats_csv(stats: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "value"])
        for k in (*KINDS, "supported", "n"):
            w.writerow([k, stats[k]])

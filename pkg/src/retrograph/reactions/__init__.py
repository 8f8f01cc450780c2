"""Atom-mapped reactions: records, center labels, synthons, traces, vocabulary."""

from .center import (
    A,
    BC,
    BF,
    UNSUPPORTED,
    CenterLabel,
    ChemicallyInvalid,
    InvalidLabel,
    derive_synthons,
    edit_product,
    extract_center_label,
)
from .record import MappingError, ReactionRecord, parse_reaction, read_reactions
from .trace import (
    AttachmentTrace,
    DecompositionError,
    Step,
    Unit,
    apply_unit,
    extract_trace,
    initial_frontier,
    push_new_atoms,
    replay_trace,
)
from .vocab import (
    Example,
    ExtractionReport,
    SubstructureVocab,
    build_vocab,
    coverage_stats,
    prepare,
    write_stats_csv,
)

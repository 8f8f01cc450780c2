"""Two-step graph retrosynthesis: reaction centers, synthons, substructure completion."""

from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path of a bundled data file (reactions_1000.txt, toy_64.txt, corpus_500.smi)."""
    return Path(__file__).resolve().parent / "data" / name

import numpy as np
import pytest

from retrograph import data_path
from retrograph.reactions import build_vocab, prepare, read_reactions


@pytest.fixture(scope="session")
def toy_records():
    records, n_bad = read_reactions(data_path("toy_64.txt"), skip_errors=False)
    assert n_bad == 0
    return records


@pytest.fixture(scope="session")
def toy_report(toy_records):
    return prepare(toy_records)


@pytest.fixture(scope="session")
def toy_vocab(toy_report):
    return build_vocab(toy_report)


@pytest.fixture(scope="session")
def sample_records():
    records, _ = read_reactions(data_path("reactions_1000.txt"), skip_errors=False)
    return records


@pytest.fixture(scope="session")
def sample_report(sample_records):
    return prepare(sample_records)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines, printed at the end of the run ------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

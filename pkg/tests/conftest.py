import numpy as np
import pytest

from textexplain.embeddings import build_neighbor_index, train_embeddings
from textexplain.synthetic import synthetic_corpus, train_test_split
from textexplain.text import TfidfVectorizer


@pytest.fixture(scope="session")
def small_corpus():
    return synthetic_corpus(n_docs=300, seed=11, length_range=(30, 60))


@pytest.fixture(scope="session")
def split(small_corpus):
    return train_test_split(small_corpus, 0.25, seed=3)


@pytest.fixture(scope="session")
def vectorizer(split):
    return TfidfVectorizer().fit(split[0])


@pytest.fixture(scope="session")
def table(split):
    return train_embeddings(split[0], dim=20, window=4)


@pytest.fixture(scope="session")
def index(table):
    return build_neighbor_index(table, k=10)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "notes": []})
    entry["gating"] = marker.kwargs.get("gating", True)
    if call.excinfo is not None:
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: {call.excinfo.typename}")


@pytest.fixture
def acceptance_note(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "notes": []})
    return entry["notes"].append


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        if not e.get("gating", True):
            status = "LOGGED" if e["ok"] else "ERROR"
        terminalreporter.write_line(f"criterion {number} {status}  {e['title']}")
        for note in e["notes"]:
            terminalreporter.write_line(f"    {note}")

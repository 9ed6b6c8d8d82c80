from __future__ import annotations

import numpy as np
import pytest

from sqp.corpus import Document, Qrels, Topic, build_index, load_documents, parse_qrels, parse_topics
from sqp.desk import DeskSpec, generate


def make_index(docs: dict[str, list[str]]):
    return build_index(Document(d, tuple(toks)) for d, toks in docs.items())


@pytest.fixture
def tiny_index():
    # d1=[a,b], d2=[a,a,b], d3=[c]
    return make_index({"d1": ["a", "b"], "d2": ["a", "a", "b"], "d3": ["c"]})


@pytest.fixture
def ten_doc_index():
    rng = np.random.default_rng(3)
    vocab = list("abcdefgh")
    docs = {f"d{i:02d}": [vocab[j] for j in rng.integers(0, len(vocab), rng.integers(3, 12))]
            for i in range(10)}
    return make_index(docs)


@pytest.fixture(scope="session")
def desk_paths(tmp_path_factory):
    return generate(tmp_path_factory.mktemp("desk"), DeskSpec())


@pytest.fixture(scope="session")
def desk(desk_paths):
    index = build_index(load_documents([desk_paths["documents"]]))
    topics = parse_topics(desk_paths["topics"])
    qrels = parse_qrels(desk_paths["qrels"])
    return index, topics, qrels


def topic(tid: str, *terms: str) -> Topic:
    return Topic(tid, tuple(terms))


def qrels_of(**by_topic: dict[str, int]) -> Qrels:
    return Qrels({(t, d): g for t, grades in by_topic.items() for d, g in grades.items()})


# PASS/FAIL lines from the acceptance suite, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)

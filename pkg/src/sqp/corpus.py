"""TREC-format ingestion, tokenisation and the immutable inverted index."""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from nltk.stem.porter import PorterStemmer

from .errors import FormatError, IndexBuildError

log = logging.getLogger(__name__)

_SPLIT = re.compile(r"[^a-z0-9]+")
_SPLIT_CASED = re.compile(r"[^A-Za-z0-9]+")


def default_stopwords() -> frozenset[str]:
    text = resources.files("sqp").joinpath("data/stopwords.txt").read_text()
    return frozenset(w for w in text.split() if not w.startswith("#"))


@lru_cache(maxsize=1)
def _default_stopwords_cached() -> frozenset[str]:
    return default_stopwords()


@dataclass(frozen=True)
class Pipeline:
    """Normalisation settings applied to documents and topics alike."""

    lowercase: bool = True
    stopwords: frozenset[str] | None = field(default_factory=_default_stopwords_cached)
    stem: bool = True


_stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=200_000)
def _stem(word: str) -> str:
    # the original algorithm maps a bare "s" to ""; keep such words unstemmed
    return _stemmer.stem(word) or word


def tokenize(text: str, pipeline: Pipeline | None = None) -> list[str]:
    """Split on non-alphanumerics, case-fold, drop stopwords, stem."""
    pipeline = pipeline or Pipeline()
    if pipeline.lowercase:
        raw = _SPLIT.split(text.lower())
    else:
        raw = _SPLIT_CASED.split(text)
    stop = pipeline.stopwords or frozenset()
    out = []
    for w in raw:
        if not w or w in stop:
            continue
        out.append(_stem(w) if pipeline.stem else w)
    return out


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class Topic:
    topic_id: str
    title_terms: tuple[str, ...]

    @property
    def degenerate(self) -> bool:
        return len(self.title_terms) == 0


class Qrels:
    """Graded judgments; unjudged (topic, doc) pairs read as grade 0."""

    def __init__(self, judgments: dict[tuple[str, str], int] | None = None):
        self._by_topic: dict[str, dict[str, int]] = {}
        for (topic, doc), grade in (judgments or {}).items():
            self._by_topic.setdefault(topic, {})[doc] = int(grade)

    @property
    def judgments(self) -> dict[tuple[str, str], int]:
        return {(t, d): g for t, docs in self._by_topic.items() for d, g in docs.items()}

    def grades(self, topic_id: str) -> dict[str, int]:
        return self._by_topic.get(topic_id, {})

    def grade(self, topic_id: str, doc_id: str) -> int:
        return self._by_topic.get(topic_id, {}).get(doc_id, 0)

    def num_relevant(self, topic_id: str) -> int:
        return sum(1 for g in self.grades(topic_id).values() if g > 0)

    def __contains__(self, topic_id: str) -> bool:
        return topic_id in self._by_topic

    def topics(self) -> list[str]:
        return sorted(self._by_topic)

    def subset(self, topic_ids: Iterable[str]) -> "Qrels":
        keep = set(topic_ids)
        return Qrels({(t, d): g for (t, d), g in self.judgments.items() if t in keep})


# --- file formats ---------------------------------------------------------

_DOC = re.compile(r"<DOC>(.*?)</DOC>", re.S | re.I)
_DOCNO = re.compile(r"<DOCNO>\s*(.*?)\s*</DOCNO>", re.S | re.I)
_TAG = re.compile(r"<[^>]*>")
_TOP = re.compile(r"<top>(.*?)</top>", re.S | re.I)
_NUM = re.compile(r"<num>\s*(?:Number:)?\s*([^\s<]+)", re.I)
_TITLE = re.compile(r"<title>\s*(?:Topic:)?(.*?)(?=<|\Z)", re.S | re.I)


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def parse_documents(path: str | Path, pipeline: Pipeline | None = None) -> Iterator[Document]:
    """Yield documents from ``<DOC><DOCNO>..</DOCNO>..</DOC>`` records."""
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    for m in _DOC.finditer(text):
        body = m.group(1)
        no = _DOCNO.search(body)
        if no is None or not no.group(1):
            raise FormatError("<DOC> record without <DOCNO>", path, _line_of(text, m.start()))
        rest = body[: no.start()] + " " + body[no.end():]
        yield Document(no.group(1), tuple(tokenize(_TAG.sub(" ", rest), pipeline)))


def parse_topics(path: str | Path, pipeline: Pipeline | None = None) -> list[Topic]:
    """Read ``<top>`` records, keeping only the number and the title."""
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    topics = []
    for m in _TOP.finditer(text):
        body = m.group(1)
        num = _NUM.search(body)
        title = _TITLE.search(body)
        line = _line_of(text, m.start())
        if num is None:
            raise FormatError("topic without <num>", path, line)
        if title is None:
            raise FormatError(f"topic {num.group(1)} without <title>", path, line)
        topic = Topic(num.group(1), tuple(tokenize(title.group(1), pipeline)))
        if topic.degenerate:
            log.warning("topic %s has an empty title after normalisation", topic.topic_id)
        topics.append(topic)
    return topics


def parse_qrels(path: str | Path) -> Qrels:
    """Read ``topic iteration docno grade`` lines. Negative grades clamp to 0."""
    judgments: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 4:
                raise FormatError(f"expected 4 fields, got {len(fields)}", path, lineno)
            topic, _, doc, grade_s = fields
            try:
                grade = int(grade_s)
            except ValueError:
                raise FormatError(f"non-integer grade {grade_s!r}", path, lineno) from None
            if grade < 0:
                log.warning("%s:%d: negative grade %d for (%s, %s) clamped to 0",
                            path, lineno, grade, topic, doc)
                grade = 0
            judgments[(topic, doc)] = grade
    return Qrels(judgments)


def write_qrels(path: str | Path, qrels: Qrels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (topic, doc), grade in sorted(qrels.judgments.items()):
            fh.write(f"{topic} 0 {doc} {grade}\n")


# --- index ------------------------------------------------------------------

def _segment_sums(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    cs = np.concatenate(([0], np.cumsum(values, dtype=np.int64)))
    return cs[offsets[1:]] - cs[offsets[:-1]]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class InvertedIndex:
    """Term-major postings plus a doc-major forward index, both CSR.

    Documents are numbered by ascending ``doc_id`` so internal order equals
    the canonical tie-break order. All arrays are read-only.
    """

    def __init__(self, doc_ids, vocab, offsets, post_docs, post_tfs,
                 doc_offsets, doc_terms, doc_tfs):
        self.doc_ids: tuple[str, ...] = tuple(doc_ids)
        self.vocab: tuple[str, ...] = tuple(vocab)
        self.term_id: dict[str, int] = {t: i for i, t in enumerate(self.vocab)}
        self.doc_index: dict[str, int] = {d: i for i, d in enumerate(self.doc_ids)}
        self.offsets = _frozen(np.asarray(offsets, dtype=np.int64))
        self.post_docs = _frozen(np.asarray(post_docs, dtype=np.int32))
        self.post_tfs = _frozen(np.asarray(post_tfs, dtype=np.int32))
        self.doc_offsets = _frozen(np.asarray(doc_offsets, dtype=np.int64))
        self.doc_terms = _frozen(np.asarray(doc_terms, dtype=np.int64))
        self.doc_tfs = _frozen(np.asarray(doc_tfs, dtype=np.int32))

        self.N = len(self.doc_ids)
        self.doc_length = _frozen(_segment_sums(self.doc_tfs, self.doc_offsets).astype(np.float64))
        self.total_tokens = int(self.post_tfs.sum())
        self.avg_doc_length = self.total_tokens / self.N if self.N else 0.0
        self.df = _frozen(np.diff(self.offsets))
        self.cf = _frozen(_segment_sums(self.post_tfs, self.offsets))

    def n_t(self, term: str) -> int:
        i = self.term_id.get(term)
        return 0 if i is None else int(self.df[i])

    def F_t(self, term: str) -> int:
        i = self.term_id.get(term)
        return 0 if i is None else int(self.cf[i])

    def postings(self, term: str) -> list[tuple[str, int]]:
        i = self.term_id.get(term)
        if i is None:
            return []
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return [(self.doc_ids[d], int(tf)) for d, tf in zip(self.post_docs[lo:hi], self.post_tfs[lo:hi])]

    def doc_len(self, doc_id: str) -> int:
        return int(self.doc_length[self.doc_index[doc_id]])

    def save(self, path: str | Path) -> None:
        np.savez_compressed(
            path,
            doc_ids=np.array(self.doc_ids, dtype=object),
            vocab=np.array(self.vocab, dtype=object),
            offsets=self.offsets, post_docs=self.post_docs, post_tfs=self.post_tfs,
            doc_offsets=self.doc_offsets, doc_terms=self.doc_terms, doc_tfs=self.doc_tfs,
        )

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        with np.load(path, allow_pickle=True) as z:
            return cls(list(z["doc_ids"]), list(z["vocab"]), z["offsets"], z["post_docs"],
                       z["post_tfs"], z["doc_offsets"], z["doc_terms"], z["doc_tfs"])


def build_index(documents: Iterable[Document]) -> InvertedIndex:
    """Build the index; rejects duplicate doc ids and empty corpora."""
    by_id: dict[str, tuple[str, ...]] = {}
    for doc in documents:
        if not doc.doc_id:
            raise IndexBuildError("empty doc_id")
        if doc.doc_id in by_id:
            raise IndexBuildError(f"duplicate doc_id {doc.doc_id!r}")
        by_id[doc.doc_id] = tuple(doc.tokens)
    if not by_id:
        raise IndexBuildError("empty corpus")

    doc_ids = sorted(by_id)
    counts = [Counter(by_id[d]) for d in doc_ids]
    vocab = sorted(set().union(*counts))
    tid = {t: i for i, t in enumerate(vocab)}

    doc_offsets = np.zeros(len(doc_ids) + 1, dtype=np.int64)
    term_col, tf_col = [], []
    for i, c in enumerate(counts):
        items = sorted((tid[t], n) for t, n in c.items())
        term_col.extend(t for t, _ in items)
        tf_col.extend(n for _, n in items)
        doc_offsets[i + 1] = doc_offsets[i] + len(items)
    doc_terms = np.asarray(term_col, dtype=np.int64)
    doc_tfs = np.asarray(tf_col, dtype=np.int32)
    doc_col = np.repeat(np.arange(len(doc_ids), dtype=np.int32), np.diff(doc_offsets))

    # term-major: stable sort on term keeps doc order ascending inside each list
    order = np.argsort(doc_terms, kind="stable")
    post_docs = doc_col[order]
    post_tfs = doc_tfs[order]
    offsets = np.zeros(len(vocab) + 1, dtype=np.int64)
    np.cumsum(np.bincount(doc_terms, minlength=len(vocab)), out=offsets[1:])
    return InvertedIndex(doc_ids, vocab, offsets, post_docs, post_tfs, doc_offsets, doc_terms, doc_tfs)


def load_documents(paths: Iterable[str | Path], pipeline: Pipeline | None = None) -> Iterator[Document]:
    for p in paths:
        yield from parse_documents(p, pipeline)

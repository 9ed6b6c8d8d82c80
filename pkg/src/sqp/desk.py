"""Deterministic generator for a small TREC-format test collection.

Documents mix a Zipfian background vocabulary with topic vocabularies.
Topics come in clusters that share part of their vocabulary, so some title
words are ambiguous and feedback can drift; this gives processing threads
genuinely different per-query effectiveness. Relevance grades follow the
topical mass a document was generated with.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import tokenize

_ONSETS = ["b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t",
           "v", "w", "z", "br", "cl", "dr", "gr", "pl", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u"]
_FILLER = ["the", "of", "and", "to", "in", "a", "is", "for", "on", "with"]


@dataclass(frozen=True)
class DeskSpec:
    """Collection shape. ``n_docs`` is a floor: judged documents for every topic are always written."""

    n_docs: int = 4000
    n_clusters: int = 20
    topics_per_cluster: int = 3
    vocab_size: int = 6000
    cluster_terms: int = 25
    topic_terms: int = 30
    mean_doc_len: float = 120.0
    seed: int = 7


def _vocabulary(rng: np.random.Generator, size: int) -> list[str]:
    words: set[str] = set()
    seen_stems: set[str] = set()
    out = []
    while len(out) < size:
        n = int(rng.integers(2, 5))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(n))
        if w in words:
            continue
        stem = tokenize(w)
        # keep words that survive stopping/stemming as one distinct token
        if len(stem) != 1 or stem[0] in seen_stems:
            continue
        words.add(w)
        seen_stems.add(stem[0])
        out.append(w)
    return out


def generate(out_dir: str | Path, spec: DeskSpec = DeskSpec()) -> dict[str, Path]:
    """Write ``docs.trec``, ``topics.trec`` and ``qrels.txt`` under ``out_dir``."""
    rng = np.random.default_rng(spec.seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab = _vocabulary(rng, spec.vocab_size)
    V = len(vocab)
    ranks = np.arange(V)
    background = 1.0 / (ranks + 5.0) ** 1.05
    background /= background.sum()

    # topical words come from the mid-frequency band
    pool = rng.permutation(np.arange(150, V))
    pos = 0
    clusters = []
    for _ in range(spec.n_clusters):
        ct = pool[pos:pos + spec.cluster_terms]
        pos += spec.cluster_terms
        topics = []
        for _ in range(spec.topics_per_cluster):
            tt = pool[pos:pos + spec.topic_terms]
            pos += spec.topic_terms
            topics.append(tt)
        clusters.append((ct, topics))

    def zipf_weights(n, s):
        w = 1.0 / (np.arange(n) + 1.0) ** s
        return w / w.sum()

    topic_defs = []  # (topic number, cluster terms, topic terms, title words)
    num = 401
    for ct, topics in clusters:
        for tt in topics:
            n_title = int(rng.integers(2, 4))
            kind = rng.random()
            if kind < 0.35:
                # ambiguous: leads with a shared cluster word
                title = [ct[int(rng.integers(0, 3))]] + list(tt[:n_title - 1])
            elif kind < 0.7:
                title = list(tt[:n_title])
            else:
                # one strong word plus a weaker specific one
                title = [tt[0], tt[int(rng.integers(3, 10))]][:n_title] + list(tt[1:n_title - 1])
            topic_defs.append((str(num), ct, tt, [vocab[i] for i in dict.fromkeys(title)]))
            num += 1

    docs_tokens: list[list[int]] = []
    qrels: list[tuple[str, int, int]] = []  # topic, doc position, grade

    def make_doc(mix: list[tuple[np.ndarray, np.ndarray, float]]) -> list[int]:
        L = max(20, int(rng.lognormal(np.log(spec.mean_doc_len), 0.5)))
        toks = []
        rest = L
        for terms, weights, share in mix:
            n = int(round(share * L))
            toks.extend(terms[rng.choice(len(terms), size=n, p=weights)].tolist())
            rest -= n
        toks.extend(rng.choice(V, size=max(rest, 0), p=background).tolist())
        rng.shuffle(toks)
        return toks

    cw = zipf_weights(spec.cluster_terms, 0.9)
    tw = zipf_weights(spec.topic_terms, 0.8)
    for tid, ct, tt, _ in topic_defs:
        n_rel = int(rng.integers(6, 36))
        for _ in range(n_rel):
            grade = 2 if rng.random() < 0.4 else 1
            share = rng.uniform(0.05, 0.12) if grade == 2 else rng.uniform(0.015, 0.05)
            docs_tokens.append(make_doc([(tt, tw, share * 0.7), (ct, cw, share * 0.3)]))
            qrels.append((tid, len(docs_tokens) - 1, grade))
        # judged non-relevant: same cluster, touching the topic only in passing
        for _ in range(int(rng.integers(10, 30))):
            docs_tokens.append(make_doc([(ct, cw, rng.uniform(0.04, 0.12)),
                                         (tt[:8], tw[:8] / tw[:8].sum(), rng.uniform(0.0, 0.02))]))
            qrels.append((tid, len(docs_tokens) - 1, 0))
    all_topical = np.concatenate([tt for _, _, tt, _ in topic_defs])
    uniform = np.full(len(all_topical), 1.0 / len(all_topical))
    while len(docs_tokens) < spec.n_docs:
        docs_tokens.append(make_doc([(all_topical, uniform, rng.uniform(0.0, 0.04))]))

    order = rng.permutation(len(docs_tokens))
    doc_name = {int(p): f"DSK-{k:05d}" for k, p in enumerate(order)}

    with open(out / "docs.trec", "w", encoding="utf-8") as fh:
        for k, p in enumerate(order):
            words = [vocab[i] for i in docs_tokens[p]]
            # sprinkle stopwords so the tokenizer has something to drop
            for j in rng.choice(len(words), size=len(words) // 10, replace=False):
                words[j] = _FILLER[j % len(_FILLER)] + " " + words[j]
            fh.write(f"<DOC>\n<DOCNO> {doc_name[int(p)]} </DOCNO>\n<TEXT>\n{' '.join(words)}\n</TEXT>\n</DOC>\n")
    with open(out / "topics.trec", "w", encoding="utf-8") as fh:
        for tid, _, tt, title in topic_defs:
            desc = " ".join(vocab[i] for i in tt[:6])
            fh.write(f"<top>\n<num> Number: {tid}\n<title> {' '.join(title)}\n\n"
                     f"<desc> Description:\nDocuments about {desc}.\n\n"
                     f"<narr> Narrative:\nA relevant document discusses {desc}.\n</top>\n\n")
    with open(out / "qrels.txt", "w", encoding="utf-8") as fh:
        for tid, p, g in sorted(qrels, key=lambda r: (int(r[0]), doc_name[r[1]])):
            fh.write(f"{tid} 0 {doc_name[p]} {g}\n")
    return {"documents": out / "docs.trec", "topics": out / "topics.trec", "qrels": out / "qrels.txt"}

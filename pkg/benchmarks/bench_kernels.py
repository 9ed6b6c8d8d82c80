"""Compare the numba and numpy kernel paths on a synthetic desk collection.

Usage: python benchmarks/bench_kernels.py [--docs 4000] [--repeat 200]
"""
import argparse
import tempfile
import timeit
from pathlib import Path

import numpy as np

from sqp import _accel
from sqp.corpus import build_index, parse_documents, parse_topics
from sqp.desk import DeskSpec, generate
from sqp.retrieval import MODEL_IDS, WeightingModel


def build(n_docs: int):
    tmp = Path(tempfile.mkdtemp(prefix="sqp-bench-"))
    files = generate(tmp, DeskSpec(n_docs=n_docs))
    index = build_index(parse_documents(files["documents"]))
    topics = parse_topics(files["topics"])
    return index, topics


def query_arrays(index, topic):
    ids = sorted({index.term_id[t] for t in topic.title_terms if t in index.term_id})
    return np.array(ids, dtype=np.int64)


def bench(label, fn, repeat):
    fn()  # compile / warm caches
    per_call = min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3
    print(f"  {label:<28} {per_call:9.4f} ms")
    return per_call


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--docs", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    index, topics = build(args.docs)
    terms = query_arrays(index, topics[0])
    weights = np.ones(len(terms))
    stats = (index.offsets, index.post_docs, index.post_tfs, index.doc_length, index.df, index.cf,
             index.N, index.avg_doc_length, index.total_tokens)
    print(f"collection: {index.N} docs, {len(index.vocab)} terms; query terms: {len(terms)}")

    rng = np.random.default_rng(0)
    docs = np.sort(rng.choice(index.N, size=min(20, index.N), replace=False)).astype(np.int64)
    X = rng.normal(size=(100, 44))
    y = np.sign(X[:, 0] + 0.2 * rng.normal(size=100))
    cost = rng.uniform(0.1, 1.0, 100)

    rows = []
    for name, numpy_fn, numba_fn in [
        ("accumulate", _accel.accumulate_numpy, _accel.accumulate_numba),
        ("doc_features", _accel.doc_features_numpy, _accel.doc_features_numba),
        ("hinge_descent", _accel.hinge_descent_numpy, _accel.hinge_descent_numba),
    ]:
        print(name)
        timings = []
        for backend, fn in (("numpy", numpy_fn), ("numba", numba_fn)):
            if name == "accumulate":
                def call(fn=fn):
                    for m in MODEL_IDS:
                        model = WeightingModel.create(m)
                        fn(model.code, np.array(model.param_vector()), terms, weights, *stats,
                           np.zeros(index.N), np.zeros(index.N, dtype=np.bool_))
                label = f"{backend} (8 models)"
            elif name == "doc_features":
                def call(fn=fn):
                    fn(terms, docs, *stats, 2500.0, np.zeros((len(docs), 8)))
                label = f"{backend} (20 docs)"
            else:
                def call(fn=fn):
                    fn(X, y, cost, 0.01, 300, 1.0, True)
                label = f"{backend} (300 epochs)"
            timings.append(bench(label, call, args.repeat if name != "hinge_descent" else 5))
        rows.append((name, timings[0] / timings[1]))

    print("speedup (numpy / numba)")
    for name, ratio in rows:
        print(f"  {name:<28} {ratio:9.2f}x")


if __name__ == "__main__":
    main()

import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sqp import _accel
from sqp.retrieval import MODEL_IDS, WeightingModel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not importable")

TESTS = Path(__file__).parent


def random_postings(rng, n_docs=60, n_terms=12):
    tf = rng.integers(0, 4, size=(n_terms, n_docs)) * (rng.random((n_terms, n_docs)) < 0.4)
    tf[:, 0] += 1  # no empty posting lists
    offsets = np.concatenate([[0], np.cumsum((tf > 0).sum(axis=1))]).astype(np.int64)
    post_docs = np.concatenate([np.nonzero(r)[0] for r in tf]).astype(np.int32)
    post_tfs = np.concatenate([r[r > 0] for r in tf]).astype(np.int32)
    doc_len = tf.sum(axis=0).astype(np.float64) + rng.integers(1, 20, n_docs)
    df = (tf > 0).sum(axis=1).astype(np.int64)
    cf = tf.sum(axis=1).astype(np.int64)
    return offsets, post_docs, post_tfs, doc_len, df, cf, n_docs, float(doc_len.mean()), int(doc_len.sum())


@needs_numba
@pytest.mark.parametrize("model_id", MODEL_IDS)
def test_accumulate_parity(model_id):
    rng = np.random.default_rng(4)
    idx = random_postings(rng)
    m = WeightingModel.create(model_id)
    q_terms = np.array([0, 3, 7, 11], dtype=np.int64)
    q_w = np.array([1.0, 0.5, 2.0, 0.25])
    outs = []
    for kernel in (_accel.accumulate_numpy, _accel.accumulate_numba):
        scores, matched = np.zeros(idx[6]), np.zeros(idx[6], dtype=np.bool_)
        kernel(m.code, np.array(m.param_vector()), q_terms, q_w, *idx, scores, matched)
        outs.append((scores, matched))
    np.testing.assert_allclose(outs[0][0], outs[1][0], rtol=1e-12, atol=1e-12)
    assert np.array_equal(outs[0][1], outs[1][1])


@needs_numba
def test_doc_features_parity():
    rng = np.random.default_rng(9)
    idx = random_postings(rng)
    offsets, post_docs, post_tfs, doc_len, df, cf, N, avgdl, tokens = idx
    terms = np.array([1, 2, 5, 8], dtype=np.int64)
    docs = rng.permutation(N)[:25].astype(np.int64)
    a, b = np.zeros((25, 8)), np.zeros((25, 8))
    _accel.doc_features_numpy(terms, docs, *idx, 2500.0, a)
    _accel.doc_features_numba(terms, docs, *idx, 2500.0, b)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("fit_bias", [True, False])
def test_hinge_parity(fit_bias):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 6))
    y = np.sign(X[:, 0] + 0.3 * rng.normal(size=40))
    cost = rng.uniform(0.1, 1.0, 40)
    wa, ba = _accel.hinge_descent_numpy(X, y, cost, 0.01, 200, 1.0, fit_bias)
    wb, bb = _accel.hinge_descent_numba(X, y, cost, 0.01, 200, 1.0, fit_bias)
    np.testing.assert_allclose(wa, wb, rtol=1e-9, atol=1e-12)
    assert ba == pytest.approx(bb, rel=1e-9, abs=1e-12)
    if not fit_bias:
        assert ba == 0.0


def test_hinge_never_worse_than_start():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    y = np.sign(X[:, 1])
    cost = np.ones(30)
    w, b = _accel.hinge_descent(X, y, cost, 0.1, 50, 1.0, True)
    assert _accel._objective_numpy(X, y, cost, 0.1, w, b) <= _accel._objective_numpy(
        X, y, cost, 0.1, np.zeros(4), 0.0)


SCRIPT = """
import json, sys
sys.path.insert(0, {tests!r})
from conftest import make_index
from sqp import _accel
from sqp.retrieval import MODEL_IDS, WeightedQuery, WeightingModel, score
from sqp.features import extract_features
from sqp.corpus import Topic
import numpy as np
rng = np.random.default_rng(1)
docs = {{f"d{{i:02d}}": list(rng.choice(list("abcdefgh"), size=int(rng.integers(2, 12)))) for i in range(40)}}
idx = make_index(docs)
q = WeightedQuery("q", {{"a": 1.0, "c": 0.5, "f": 2.0}})
out = {{"backend": _accel.backend()}}
for m in MODEL_IDS:
    r = score(idx, q, WeightingModel.create(m))
    out[m] = [list(r.doc_ids), r.scores.tolist()]
out["features"] = extract_features(idx, Topic("q", ("a", "c", "f"))).vector.tolist()
print(json.dumps(out))
"""


def _run_backend(disable: bool) -> dict:
    env = dict(os.environ, SQP_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", SCRIPT.format(tests=str(TESTS))], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


@needs_numba
def test_env_flag_selects_backend_and_results_agree():
    fast, slow = _run_backend(False), _run_backend(True)
    assert fast["backend"] == "numba" and slow["backend"] == "numpy"
    for m in MODEL_IDS:
        assert fast[m][0] == slow[m][0]
        np.testing.assert_allclose(fast[m][1], slow[m][1], rtol=1e-12)
    np.testing.assert_allclose(fast["features"], slow["features"], rtol=1e-12)

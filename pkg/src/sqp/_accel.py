"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``SQP_DISABLE_NUMBA`` is unset (or ``0``). Both paths share the
per-posting weighting formulas in :func:`term_score`, so they agree to
floating point rounding of the libm in use.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SQP_DISABLE_NUMBA", "0").lower() in ("", "0", "false", "no")

# Closed set of weighting models, in canonical roster order.
BM25, TFIDF, DIRICHLET_LM, HIEMSTRA_LM, PL2, INL2, DPH, LGD = range(8)

_LOG2E = 1.4426950408889634
_TWO_PI = 6.283185307179586


def term_score(code, tf, dl, n_t, F_t, N, avgdl, total_tokens, k1, b, mu, lam, c):
    """Score contribution of one query term to one (or many) documents.

    ``tf`` and ``dl`` may be scalars or equal-length arrays; every other
    argument is a scalar. Written with numpy ufuncs only so the same source
    compiles under numba and runs vectorised under numpy.
    """
    if code == BM25:
        idf = np.log(1.0 + (N - n_t + 0.5) / (n_t + 0.5))
        return idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
    elif code == TFIDF:
        robertson_tf = k1 * tf / (tf + k1 * (1.0 - b + b * dl / avgdl))
        return robertson_tf * np.log(N / n_t)
    elif code == DIRICHLET_LM:
        return np.log(1.0 + tf / (mu * F_t / total_tokens)) + np.log(mu / (dl + mu))
    elif code == HIEMSTRA_LM:
        return np.log(1.0 + (lam * tf * total_tokens) / ((1.0 - lam) * F_t * dl))
    elif code == PL2:
        tfn = tf * np.log2(1.0 + c * avgdl / dl)
        f = F_t / N
        return (
            tfn * np.log2(1.0 / f)
            + f * _LOG2E
            + 0.5 * np.log2(_TWO_PI * tfn)
            + tfn * (np.log2(tfn) - _LOG2E)
        ) / (tfn + 1.0)
    elif code == INL2:
        tfn = tf * np.log2(1.0 + c * avgdl / dl)
        return tfn * np.log2((N + 1.0) / (n_t + 0.5)) / (tfn + 1.0)
    elif code == DPH:
        # tf == dl would give 0 * -inf; the floor turns it into an exact 0.
        rest = np.maximum(1.0 - tf / dl, 1e-300)
        norm = rest * rest / (tf + 1.0)
        return norm * (
            tf * np.log2((tf * avgdl / dl) * (N / F_t)) + 0.5 * np.log2(_TWO_PI * tf * rest)
        )
    elif code == LGD:
        tfn = tf * np.log2(1.0 + c * avgdl / dl)
        f = F_t / N
        return np.log2((f + tfn) / f)
    return 0.0 * tf


def accumulate_numpy(code, params, q_terms, q_weights, offsets, post_docs, post_tfs,
                     doc_len, df, cf, N, avgdl, total_tokens, scores, matched):
    """Term-at-a-time accumulation into ``scores`` (numpy path)."""
    k1, b, mu, lam, c = params[0], params[1], params[2], params[3], params[4]
    for i in range(q_terms.shape[0]):
        t = q_terms[i]
        lo, hi = offsets[t], offsets[t + 1]
        docs = post_docs[lo:hi]
        contrib = term_score(code, post_tfs[lo:hi].astype(np.float64), doc_len[docs],
                             float(df[t]), float(cf[t]), float(N), avgdl, float(total_tokens),
                             k1, b, mu, lam, c)
        # postings of one term hold each document once, so fancy-index add is safe
        scores[docs] += q_weights[i] * contrib
        matched[docs] = True


def doc_features_numpy(term_ids, docs, offsets, post_docs, post_tfs, doc_len, df, cf,
                       N, avgdl, total_tokens, mu, out):
    """Fill columns 2..7 of ``out`` (len(docs), 8) with tf/idf/LM sums over ``term_ids``.

    Columns: sum tf, sum log(1+tf), sum idf of present terms, sum tf*idf,
    sum tf/dl, Dirichlet LM score. ``term_ids`` must be distinct.
    """
    tf = np.zeros((docs.shape[0], term_ids.shape[0]))
    for k in range(term_ids.shape[0]):
        t = term_ids[k]
        lo, hi = offsets[t], offsets[t + 1]
        plist = post_docs[lo:hi]
        pos = np.minimum(np.searchsorted(plist, docs), hi - lo - 1)
        hit = plist[pos] == docs
        tf[hit, k] = post_tfs[lo:hi][pos[hit]]
    dl = doc_len[docs]
    n_t = df[term_ids].astype(np.float64)
    idf = np.log(1.0 + (N - n_t + 0.5) / (n_t + 0.5))
    present = tf > 0
    lm = term_score(DIRICHLET_LM, tf, dl[:, None], n_t, cf[term_ids].astype(np.float64), float(N),
                    avgdl, float(total_tokens), 0.0, 0.0, mu, 0.0, 0.0)
    out[:, 2] = tf.sum(axis=1)
    out[:, 3] = np.log1p(tf).sum(axis=1)
    out[:, 4] = (present * idf).sum(axis=1)
    out[:, 5] = (tf * idf).sum(axis=1)
    out[:, 6] = (tf / np.maximum(dl, 1.0)[:, None]).sum(axis=1)
    out[:, 7] = np.where(present, lm, 0.0).sum(axis=1)


def hinge_descent_numpy(X, y, cost, reg, epochs, lr, fit_bias):
    """Full-batch subgradient descent on a cost-weighted hinge loss.

    Minimises ``sum_i cost_i * max(0, 1 - y_i (w.x_i + b)) + reg * |w|^2``
    and returns the iterate with the lowest objective seen.
    """
    n, d = X.shape
    w = np.zeros(d)
    bias = 0.0
    scale = cost.sum()
    best_w = w.copy()
    best_b = 0.0
    best_obj = _objective_numpy(X, y, cost, reg, w, bias)
    for epoch in range(epochs):
        margins = y * (X @ w + bias)
        active = (margins < 1.0) * cost * y
        grad_w = 2.0 * reg * w - active @ X
        grad_b = -active.sum() if fit_bias else 0.0
        step = lr / np.sqrt(epoch + 1.0) / scale
        w = w - step * grad_w
        bias = bias - step * grad_b
        obj = _objective_numpy(X, y, cost, reg, w, bias)
        if obj < best_obj:
            best_obj = obj
            best_w = w.copy()
            best_b = bias
    return best_w, best_b


def _objective_numpy(X, y, cost, reg, w, bias):
    margins = y * (X @ w + bias)
    return float((cost * np.maximum(0.0, 1.0 - margins)).sum() + reg * (w @ w))


if HAVE_NUMBA:
    _term_score_nb = njit(cache=True, nogil=True)(term_score)

    @njit(cache=True, nogil=True)
    def accumulate_numba(code, params, q_terms, q_weights, offsets, post_docs, post_tfs,
                         doc_len, df, cf, N, avgdl, total_tokens, scores, matched):
        k1, b, mu, lam, c = params[0], params[1], params[2], params[3], params[4]
        for i in range(q_terms.shape[0]):
            t = q_terms[i]
            n_t = float(df[t])
            F_t = float(cf[t])
            w = q_weights[i]
            for j in range(offsets[t], offsets[t + 1]):
                d = post_docs[j]
                scores[d] += w * _term_score_nb(code, float(post_tfs[j]), doc_len[d], n_t, F_t,
                                                float(N), avgdl, float(total_tokens),
                                                k1, b, mu, lam, c)
                matched[d] = True

    @njit(cache=True, nogil=True)
    def doc_features_numba(term_ids, docs, offsets, post_docs, post_tfs, doc_len, df, cf,
                           N, avgdl, total_tokens, mu, out):
        for i in range(docs.shape[0]):
            d = docs[i]
            dl = doc_len[d]
            for c in range(2, 8):
                out[i, c] = 0.0
            for k in range(term_ids.shape[0]):
                t = term_ids[k]
                lo, hi = offsets[t], offsets[t + 1]
                # binary search for d in the sorted posting list
                while lo < hi:
                    mid = (lo + hi) // 2
                    if post_docs[mid] < d:
                        lo = mid + 1
                    else:
                        hi = mid
                if lo >= offsets[t + 1] or post_docs[lo] != d:
                    continue
                tf = float(post_tfs[lo])
                n_t = float(df[t])
                idf = np.log(1.0 + (N - n_t + 0.5) / (n_t + 0.5))
                out[i, 2] += tf
                out[i, 3] += np.log1p(tf)
                out[i, 4] += idf
                out[i, 5] += tf * idf
                out[i, 6] += tf / max(dl, 1.0)
                out[i, 7] += _term_score_nb(DIRICHLET_LM, tf, dl, n_t, float(cf[t]), float(N),
                                            avgdl, float(total_tokens), 0.0, 0.0, mu, 0.0, 0.0)

    @njit(cache=True, nogil=True)
    def _objective_nb(X, y, cost, reg, w, bias):
        n, d = X.shape
        total = 0.0
        for i in range(n):
            s = bias
            for k in range(d):
                s += X[i, k] * w[k]
            m = 1.0 - y[i] * s
            if m > 0.0:
                total += cost[i] * m
        for k in range(d):
            total += reg * w[k] * w[k]
        return total

    @njit(cache=True, nogil=True)
    def hinge_descent_numba(X, y, cost, reg, epochs, lr, fit_bias):
        n, d = X.shape
        w = np.zeros(d)
        bias = 0.0
        scale = cost.sum()
        best_w = w.copy()
        best_b = 0.0
        best_obj = _objective_nb(X, y, cost, reg, w, bias)
        grad_w = np.empty(d)
        for epoch in range(epochs):
            for k in range(d):
                grad_w[k] = 2.0 * reg * w[k]
            grad_b = 0.0
            for i in range(n):
                s = bias
                for k in range(d):
                    s += X[i, k] * w[k]
                if y[i] * s < 1.0:
                    g = cost[i] * y[i]
                    for k in range(d):
                        grad_w[k] -= g * X[i, k]
                    grad_b -= g
            if not fit_bias:
                grad_b = 0.0
            step = lr / np.sqrt(epoch + 1.0) / scale
            for k in range(d):
                w[k] -= step * grad_w[k]
            bias -= step * grad_b
            obj = _objective_nb(X, y, cost, reg, w, bias)
            if obj < best_obj:
                best_obj = obj
                best_w[:] = w
                best_b = bias
        return best_w, best_b
else:  # pragma: no cover
    accumulate_numba = None
    doc_features_numba = None
    hinge_descent_numba = None


if USE_NUMBA:
    accumulate = accumulate_numba
    doc_features = doc_features_numba
    hinge_descent = hinge_descent_numba
else:
    accumulate = accumulate_numpy
    doc_features = doc_features_numpy
    hinge_descent = hinge_descent_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def warmup() -> None:
    """Trigger JIT compilation so first-call latency stays out of timed phases."""
    if not USE_NUMBA:
        return
    def frozen(a):
        # the index hands out read-only arrays; compile for that signature
        a.setflags(write=False)
        return a

    offsets = frozen(np.array([0, 1], dtype=np.int64))
    docs = frozen(np.array([0], dtype=np.int32))
    tfs = frozen(np.array([1], dtype=np.int32))
    dl = frozen(np.array([1.0]))
    df = frozen(np.array([1], dtype=np.int64))
    params = np.array([1.2, 0.75, 2500.0, 0.15, 1.0])
    for code in range(8):
        accumulate(code, params, np.array([0], dtype=np.int64), np.array([1.0]), offsets,
                   docs, tfs, dl, df, df, 2, 1.0, 2, np.zeros(1), np.zeros(1, dtype=np.bool_))
    doc_features(np.array([0], dtype=np.int64), np.array([0], dtype=np.int64), offsets, docs, tfs,
                 dl, df, df, 2, 1.0, 2, 2500.0, np.zeros((1, 8)))
    hinge_descent(np.ones((2, 2)), np.array([1.0, -1.0]), np.ones(2), 0.1, 1, 0.1, True)

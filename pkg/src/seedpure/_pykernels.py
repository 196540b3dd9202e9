"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_core`` extension. Results agree exactly for the pooling, split-search,
tree-traversal and selection paths; the floating-point reductions
(convolution, distances, SVM dot products) may differ in the last bits
because the summation order differs.
"""
import numpy as np

_CHUNK_ELEMS = 1 << 22


def conv2d(x, weights, bias, stride, padding):
    n, c, h, w = x.shape
    co, _, kh, kw = weights.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    wmat = weights.reshape(co, c * kh * kw)
    out = np.empty((n, co, ho, wo), dtype=np.float32)
    for i in range(n):
        xp = x[i]
        if padding:
            xp = np.pad(xp, ((0, 0), (padding, padding), (padding, padding)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
        win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
        # (C, Ho, Wo, kh, kw) -> (C*kh*kw, Ho*Wo)
        cols = win.transpose(0, 3, 4, 1, 2).astype(np.float64).reshape(c * kh * kw, ho * wo)
        acc = wmat @ cols
        if bias is not None:
            acc += bias[:, None]
        out[i] = acc.reshape(co, ho, wo)
    return out


def maxpool2d(x, kernel, stride, padding):
    n, c, h, w = x.shape
    ho = (h + 2 * padding - kernel) // stride + 1
    wo = (w + 2 * padding - kernel) // stride + 1
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                   constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    return np.ascontiguousarray(win.max(axis=(4, 5)), dtype=np.float32)


def _gini_score(l0, l1, r0, r1):
    nl = l0 + l1
    nr = r0 + r1
    return (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr


def split_node(X, y, rows, candidates, uniforms, quota):
    """Scan candidate features for the best binary split of ``rows``.

    Candidates are visited in order until ``quota`` non-constant features
    have been examined. With ``uniforms`` set, each feature gets a single
    random threshold ``lo + u * (hi - lo)`` (extra-trees mode); otherwise
    every midpoint between consecutive distinct values is scored.

    Returns ``(feature, threshold, score, consumed, n_nonconstant)`` where
    score is sum over children of (sum of squared class counts / size),
    and feature is -1 when nothing splits.
    """
    m = rows.shape[0]
    yr = y[rows].astype(np.int64)
    tot1 = int(yr.sum())
    ncand = candidates.shape[0]
    step = max(1, _CHUNK_ELEMS // max(m, 1))

    nonconst = np.empty(ncand, dtype=bool)
    consumed = 0
    found = 0
    for start in range(0, ncand, step):
        sub = X[np.ix_(rows, candidates[start:start + step])]
        nc = sub.min(axis=0) < sub.max(axis=0)
        nonconst[start:start + nc.shape[0]] = nc
        cum = np.cumsum(nc)
        if found + (int(cum[-1]) if cum.size else 0) >= quota:
            need = quota - found
            consumed = start + int(np.searchsorted(cum, need)) + 1
            found = quota
            break
        found += int(cum[-1]) if cum.size else 0
        consumed = start + nc.shape[0]

    active = np.flatnonzero(nonconst[:consumed])
    if active.size == 0:
        return -1, 0.0, -np.inf, consumed, 0

    best_f = -1
    best_t = 0.0
    best_s = -np.inf
    for start in range(0, active.size, step):
        pos = active[start:start + step]
        feats = candidates[pos]
        sub = X[np.ix_(rows, feats)].astype(np.float64)
        if uniforms is None:
            order = np.argsort(sub, axis=0, kind="stable")
            vs = np.take_along_axis(sub, order, axis=0)
            l1 = np.cumsum(yr[order], axis=0)[:-1]
            nl = np.arange(1, m, dtype=np.int64)[:, None]
            l0 = nl - l1
            r1 = tot1 - l1
            r0 = (m - nl) - r1
            score = _gini_score(l0, l1, r0, r1)
            score[~(vs[:-1] < vs[1:])] = -np.inf
            at = np.argmax(score, axis=0)
            cols = np.arange(pos.size)
            s = score[at, cols]
            a = vs[at, cols]
            b = vs[at + 1, cols]
            t = 0.5 * (a + b)
            t = np.where(t >= b, a, t)
        else:
            lo = sub.min(axis=0)
            hi = sub.max(axis=0)
            t = lo + uniforms[pos] * (hi - lo)
            t = np.where(t >= hi, lo, t)
            left = sub <= t
            nl = left.sum(axis=0).astype(np.int64)
            l1 = (left & (yr[:, None] == 1)).sum(axis=0).astype(np.int64)
            l0 = nl - l1
            r1 = tot1 - l1
            r0 = (m - nl) - r1
            s = _gini_score(l0, l1, r0, r1)
        for j in range(pos.size):
            sj = s[j]
            fj = int(feats[j])
            if sj > best_s or (sj == best_s and fj < best_f):
                best_s = float(sj)
                best_f = fj
                best_t = float(t[j])
    return best_f, best_t, best_s, consumed, found


def tree_apply(X, feature, threshold, left, right):
    """Leaf index reached by each row of X."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.intp)
    live = np.arange(n)
    while live.size:
        nd = node[live]
        f = feature[nd]
        internal = f >= 0
        live = live[internal]
        if not live.size:
            break
        nd = nd[internal]
        f = f[internal]
        go_left = X[live, f].astype(np.float64) <= threshold[nd]
        node[live] = np.where(go_left, left[nd], right[nd])
    return node


def sq_distances(Q, X):
    """Squared Euclidean distances, shape (len(Q), len(X)), in float64."""
    X64 = X.astype(np.float64)
    out = np.empty((Q.shape[0], X.shape[0]), dtype=np.float64)
    for i in range(Q.shape[0]):
        diff = X64 - Q[i].astype(np.float64)
        out[i] = np.einsum("ij,ij->i", diff, diff)
    return out


def svm_epoch(X, y, qdiag, alpha, w, order, C):
    """One pass of dual coordinate descent; updates alpha and w in place.

    ``w`` carries the bias as its last entry (constant feature 1).
    Returns the largest absolute projected gradient seen in the pass.
    """
    d = X.shape[1]
    wv = w[:d]
    worst = 0.0
    for i in order:
        xi = X[i].astype(np.float64)
        yi = y[i]
        g = yi * (float(wv @ xi) + w[d]) - 1.0
        a = alpha[i]
        if a == 0.0:
            pg = min(g, 0.0)
        elif a == C:
            pg = max(g, 0.0)
        else:
            pg = g
        if abs(pg) > worst:
            worst = abs(pg)
        if pg != 0.0:
            new = min(max(a - g / qdiag[i], 0.0), C)
            delta = (new - a) * yi
            alpha[i] = new
            if delta != 0.0:
                wv += delta * xi
                w[d] += delta
    return worst

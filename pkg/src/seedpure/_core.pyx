# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Signatures mirror ``seedpure._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs
from libcpp.algorithm cimport sort
from libcpp.pair cimport pair
from libcpp.vector cimport vector
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _im2col(const float[:, :, ::1] x, double[:, ::1] cols, int kh, int kw,
                  int stride, int pad, int ho, int wo) noexcept nogil:
    cdef int c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef int ci, ki, kj, oi, oj, ii, jj, row
    for ci in range(c):
        for ki in range(kh):
            for kj in range(kw):
                row = (ci * kh + ki) * kw + kj
                for oi in range(ho):
                    ii = oi * stride + ki - pad
                    if ii < 0 or ii >= h:
                        for oj in range(wo):
                            cols[row, oi * wo + oj] = 0.0
                        continue
                    for oj in range(wo):
                        jj = oj * stride + kj - pad
                        if jj < 0 or jj >= w:
                            cols[row, oi * wo + oj] = 0.0
                        else:
                            cols[row, oi * wo + oj] = x[ci, ii, jj]


def conv2d(const float[:, :, :, ::1] x, const double[:, :, :, ::1] weights, bias,
           int stride, int padding):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int co = weights.shape[0], kh = weights.shape[2], kw = weights.shape[3]
    cdef int ho = (h + 2 * padding - kh) // stride + 1
    cdef int wo = (w + 2 * padding - kw) // stride + 1
    cdef int K = c * kh * kw, P = ho * wo
    cdef double[:, ::1] cols = np.empty((K, P), dtype=np.float64)
    cdef double[:, ::1] acc = np.empty((co, P), dtype=np.float64)
    cdef const double[:, ::1] wmat = np.asarray(weights).reshape(co, K)
    cdef const double[::1] b
    cdef bint has_bias = bias is not None
    if has_bias:
        b = bias
    out_arr = np.empty((n, co, ho, wo), dtype=np.float32)
    cdef float[:, :, :, ::1] out = out_arr
    cdef int i, o, p
    cdef double one = 1.0, zero = 0.0
    cdef char tr = b'N'
    with nogil:
        for i in range(n):
            _im2col(x[i], cols, kh, kw, stride, padding, ho, wo)
            # row-major acc(co, P) = wmat(co, K) @ cols(K, P), via column-major BLAS
            dgemm(&tr, &tr, &P, &co, &K, &one, &cols[0, 0], &P, <double*>&wmat[0, 0], &K,
                  &zero, &acc[0, 0], &P)
            for o in range(co):
                for p in range(P):
                    if has_bias:
                        out[i, o, p // wo, p % wo] = <float>(acc[o, p] + b[o])
                    else:
                        out[i, o, p // wo, p % wo] = <float>acc[o, p]
    return out_arr


def maxpool2d(const float[:, :, :, ::1] x, int kernel, int stride, int padding):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int ho = (h + 2 * padding - kernel) // stride + 1
    cdef int wo = (w + 2 * padding - kernel) // stride + 1
    out_arr = np.empty((n, c, ho, wo), dtype=np.float32)
    cdef float[:, :, :, ::1] out = out_arr
    cdef int i, ch, oi, oj, ki, kj, ii, jj
    cdef float best, v
    with nogil:
        for i in range(n):
            for ch in range(c):
                for oi in range(ho):
                    for oj in range(wo):
                        best = -INFINITY
                        for ki in range(kernel):
                            ii = oi * stride + ki - padding
                            if ii < 0 or ii >= h:
                                continue
                            for kj in range(kernel):
                                jj = oj * stride + kj - padding
                                if jj < 0 or jj >= w:
                                    continue
                                v = x[i, ch, ii, jj]
                                if v > best:
                                    best = v
                        out[i, ch, oi, oj] = best
    return out_arr


cdef inline double _gini_score(long l0, long l1, long r0, long r1) noexcept nogil:
    return <double>(l0 * l0 + l1 * l1) / <double>(l0 + l1) + \
        <double>(r0 * r0 + r1 * r1) / <double>(r0 + r1)


def split_node(const float[:, ::1] X, const unsigned char[::1] y, const cnp.intp_t[::1] rows,
               const cnp.intp_t[::1] candidates, uniforms, int quota):
    cdef Py_ssize_t m = rows.shape[0], ncand = candidates.shape[0]
    cdef bint random_mode = uniforms is not None
    cdef const double[::1] u
    if random_mode:
        u = uniforms
    cdef long tot1 = 0
    cdef Py_ssize_t r, k, pos
    for r in range(m):
        tot1 += y[rows[r]]
    cdef vector[pair[double, int]] buf
    buf.resize(m)
    cdef long best_f = -1, f, l0, l1, nl, yl
    cdef double best_t = 0.0, best_s = -INFINITY, lo, hi, v, s, t, a, bnext
    cdef Py_ssize_t consumed = 0
    cdef int found = 0
    with nogil:
        for pos in range(ncand):
            if found >= quota:
                break
            consumed = pos + 1
            f = candidates[pos]
            lo = X[rows[0], f]
            hi = lo
            for r in range(1, m):
                v = X[rows[r], f]
                if v < lo:
                    lo = v
                elif v > hi:
                    hi = v
            if not lo < hi:
                continue
            found += 1
            if random_mode:
                t = lo + u[pos] * (hi - lo)
                if t >= hi:
                    t = lo
                nl = 0
                l1 = 0
                for r in range(m):
                    if X[rows[r], f] <= t:
                        nl += 1
                        l1 += y[rows[r]]
                l0 = nl - l1
                s = _gini_score(l0, l1, (m - nl) - (tot1 - l1), tot1 - l1)
                if s > best_s or (s == best_s and f < best_f):
                    best_s = s
                    best_f = f
                    best_t = t
            else:
                for r in range(m):
                    buf[r].first = X[rows[r], f]
                    buf[r].second = y[rows[r]]
                sort(buf.begin(), buf.end())
                l1 = 0
                for k in range(m - 1):
                    l1 += buf[k].second
                    a = buf[k].first
                    bnext = buf[k + 1].first
                    if not a < bnext:
                        continue
                    nl = k + 1
                    l0 = nl - l1
                    s = _gini_score(l0, l1, (m - nl) - (tot1 - l1), tot1 - l1)
                    if s > best_s or (s == best_s and f < best_f):
                        best_s = s
                        best_f = f
                        t = 0.5 * (a + bnext)
                        if t >= bnext:
                            t = a
                        best_t = t
    return best_f, best_t, best_s, consumed, found


def tree_apply(const float[:, ::1] X, const cnp.intp_t[::1] feature, const double[::1] threshold,
               const cnp.intp_t[::1] left, const cnp.intp_t[::1] right):
    cdef Py_ssize_t n = X.shape[0], i, node
    out_arr = np.empty(n, dtype=np.intp)
    cdef cnp.intp_t[::1] out = out_arr
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if <double>X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = node
    return out_arr


def sq_distances(const float[:, ::1] Q, const float[:, ::1] X):
    cdef Py_ssize_t q = Q.shape[0], n = X.shape[0], d = X.shape[1], i, j, k
    out_arr = np.empty((q, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double acc, diff
    with nogil:
        for i in range(q):
            for j in range(n):
                acc = 0.0
                for k in range(d):
                    diff = <double>Q[i, k] - <double>X[j, k]
                    acc += diff * diff
                out[i, j] = acc
    return out_arr


def svm_epoch(const float[:, ::1] X, const double[::1] y, const double[::1] qdiag,
              double[::1] alpha, double[::1] w, const cnp.intp_t[::1] order, double C):
    cdef Py_ssize_t n = order.shape[0], d = X.shape[1], t, i, k
    cdef double worst = 0.0, g, a, pg, new, delta
    with nogil:
        for t in range(n):
            i = order[t]
            g = w[d]
            for k in range(d):
                g += w[k] * X[i, k]
            g = y[i] * g - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = g if g < 0.0 else 0.0
            elif a == C:
                pg = g if g > 0.0 else 0.0
            else:
                pg = g
            if fabs(pg) > worst:
                worst = fabs(pg)
            if pg != 0.0:
                new = a - g / qdiag[i]
                if new < 0.0:
                    new = 0.0
                elif new > C:
                    new = C
                delta = (new - a) * y[i]
                alpha[i] = new
                if delta != 0.0:
                    for k in range(d):
                        w[k] += delta * X[i, k]
                    w[d] += delta
    return worst

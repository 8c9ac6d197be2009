# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in ``_kernels_py``.

Scan order, accumulation order and tie-breaking are kept bit-compatible with
the numpy fallback (see that module's docstring); the equivalence is enforced
by tests/test_backend.py.
"""

import numpy as np

NAME = "native"

cdef double MIN_GAIN = 1e-12


def assign_codes(z, codes):
    """Nearest-code index per row of z, lowest index on ties."""
    cdef double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(codes, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0], d = zv.shape[1], k = cv.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] ov = out
    cdef double[::1] code_sq = np.einsum("kd,kd->k", np.asarray(cv), np.asarray(cv))
    cdef Py_ssize_t i, j, c
    cdef double score, best, dot
    cdef long long best_idx
    for i in range(n):
        best = 1e300
        best_idx = 0
        for c in range(k):
            dot = 0.0
            for j in range(d):
                dot += zv[i, j] * cv[c, j]
            score = code_sq[c] - 2.0 * dot
            if score < best:
                best = score
                best_idx = c
        ov[i] = best_idx
    return out


def best_split(values_t, order, in_node, grad, hess, int min_leaf, double lam):
    """Exact greedy best split over all features for one node.

    Same contract as the numpy fallback: returns (feature, threshold, gain)
    with feature == -1 when no valid split exists.
    """
    cdef double[:, ::1] vv = np.ascontiguousarray(values_t, dtype=np.float64)
    cdef long long[:, ::1] ov = np.ascontiguousarray(order, dtype=np.int64)
    mask = np.ascontiguousarray(in_node, dtype=np.uint8)
    cdef unsigned char[::1] mv = mask
    cdef double[::1] gv = np.ascontiguousarray(grad, dtype=np.float64)
    cdef double[::1] hv = np.ascontiguousarray(hess, dtype=np.float64)

    bool_mask = mask.view(bool)
    cdef double g_total = float(np.asarray(gv)[bool_mask].sum())
    cdef double h_total = float(np.asarray(hv)[bool_mask].sum())
    cdef Py_ssize_t n_node = int(mask.sum())
    if n_node < 2 * min_leaf or n_node < 2:
        return (-1, 0.0, 0.0)
    cdef double parent_score = g_total * g_total / (h_total + lam)

    cdef Py_ssize_t n_features = vv.shape[0], n = vv.shape[1]
    cdef int best_feature = -1
    cdef double best_threshold = 0.0, best_gain = 0.0
    cdef Py_ssize_t f, pos, row
    cdef double gl, hl, gr, hr, v_prev, v_cur, thr, gain
    cdef Py_ssize_t count_left
    cdef bint have_prev

    for f in range(n_features):
        gl = 0.0
        hl = 0.0
        count_left = 0
        have_prev = False
        v_prev = 0.0
        for pos in range(n):
            row = ov[f, pos]
            if not mv[row]:
                continue
            v_cur = vv[f, row]
            if have_prev and count_left >= min_leaf and n_node - count_left >= min_leaf and v_prev < v_cur:
                thr = 0.5 * (v_prev + v_cur)
                if thr > v_prev and thr < v_cur:
                    gr = g_total - gl
                    hr = h_total - hl
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score)
                    if gain > best_gain and gain > MIN_GAIN:
                        best_feature = <int>f
                        best_threshold = thr
                        best_gain = gain
            gl += gv[row]
            hl += hv[row]
            count_left += 1
            v_prev = v_cur
            have_prev = True
    return (best_feature, best_threshold, best_gain)

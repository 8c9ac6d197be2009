"""Pure-numpy implementations of the hot kernels.

These are the reference semantics for the compiled extension in
``_native.pyx``; both must produce identical outputs for identical inputs
(same scan order, same accumulation order, same tie-breaking).
"""

from __future__ import annotations

import numpy as np

NAME = "python"

_NO_SPLIT = (-1, 0.0, 0.0)
_MIN_GAIN = 1e-12


def assign_codes(z: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Index of the nearest code (squared Euclidean) for each row of z.

    Ties resolve to the lowest code index. The squared-norm term of z is
    constant per row and omitted from the distance.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    codes = np.ascontiguousarray(codes, dtype=np.float64)
    code_sq = np.einsum("kd,kd->k", codes, codes)
    out = np.empty(z.shape[0], dtype=np.int64)
    step = 8192
    for start in range(0, z.shape[0], step):
        chunk = z[start:start + step]
        scores = code_sq[None, :] - 2.0 * (chunk @ codes.T)
        out[start:start + step] = np.argmin(scores, axis=1)
    return out


def best_split(values_t: np.ndarray, order: np.ndarray, in_node: np.ndarray,
               grad: np.ndarray, hess: np.ndarray, min_leaf: int,
               lam: float) -> tuple[int, float, float]:
    """Exact greedy best split over all features for one tree node.

    values_t: (F, n) feature values, one row per feature.
    order:    (F, n) row indices sorting each feature ascending (precomputed once).
    in_node:  (n,) membership mask for the node.
    Returns (feature, threshold, gain); feature is -1 when no valid split
    exists. Ties break to the lowest feature index, then the lowest threshold
    (strictly-greater comparisons in ascending scan order).
    """
    in_node = np.asarray(in_node, dtype=bool)
    g_total = float(grad[in_node].sum())
    h_total = float(hess[in_node].sum())
    n_node = int(in_node.sum())
    if n_node < 2 * min_leaf or n_node < 2:
        return _NO_SPLIT
    parent_score = g_total * g_total / (h_total + lam)

    best_feature, best_threshold, best_gain = _NO_SPLIT
    n_features = values_t.shape[0]
    for f in range(n_features):
        rows = order[f][in_node[order[f]]]
        v = values_t[f, rows]
        gl = np.cumsum(grad[rows])[:-1]
        hl = np.cumsum(hess[rows])[:-1]
        count_left = np.arange(1, n_node)
        thr = 0.5 * (v[:-1] + v[1:])
        valid = (
            (v[:-1] < v[1:])
            & (thr > v[:-1]) & (thr < v[1:])
            & (count_left >= min_leaf) & (n_node - count_left >= min_leaf)
        )
        if not valid.any():
            continue
        gr = g_total - gl
        hr = h_total - hl
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score)
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain and gain[i] > _MIN_GAIN:
            best_feature, best_threshold, best_gain = f, float(thr[i]), float(gain[i])
    return best_feature, best_threshold, best_gain

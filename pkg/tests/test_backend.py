"""Equivalence of the compiled kernels and the numpy fallback, plus a
brute-force oracle for the split scan."""

import numpy as np
import pytest

from biomech import _kernels_py as pyk
from biomech import backend

try:
    from biomech import _native as native
except ImportError:  # pragma: no cover
    native = None

needs_native = pytest.mark.skipif(native is None, reason="compiled extension not built")


def random_split_problem(rng, n=200, n_features=9, with_ties=True):
    x = rng.normal(size=(n, n_features))
    if with_ties:
        x[:, 0] = np.round(x[:, 0] * 2) / 2  # heavy ties
        x[:, 1] = 0.0  # constant column: never splittable
    values_t = np.ascontiguousarray(x.T)
    order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T.astype(np.int64))
    mask = (rng.random(n) < 0.8).astype(np.uint8)
    grad = rng.normal(size=n)
    hess = np.abs(rng.normal(size=n)) + 0.05
    return x, values_t, order, mask, grad, hess


def brute_force_best_split(x, mask, grad, hess, min_leaf, lam):
    """Enumerate every (feature, midpoint) candidate directly."""
    rows = np.flatnonzero(mask)
    n_node = len(rows)
    if n_node < max(2, 2 * min_leaf):
        return (-1, 0.0, 0.0)
    g_total, h_total = grad[rows].sum(), hess[rows].sum()
    parent = g_total ** 2 / (h_total + lam)
    candidates = []
    for f in range(x.shape[1]):
        vals = np.unique(x[rows, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (lo + hi)
            if not lo < thr < hi:
                continue
            left = rows[x[rows, f] <= thr]
            if len(left) < min_leaf or n_node - len(left) < min_leaf:
                continue
            gl, hl = grad[left].sum(), hess[left].sum()
            gr, hr = g_total - gl, h_total - hl
            gain = 0.5 * (gl ** 2 / (hl + lam) + gr ** 2 / (hr + lam) - parent)
            if gain > 1e-12:
                candidates.append((gain, f, thr))
    if not candidates:
        return (-1, 0.0, 0.0)
    gain, f, thr = max(candidates, key=lambda c: (c[0], -c[1], -c[2]))
    return (f, thr, gain)


class TestAssignCodes:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(300, 12))
        codes = rng.normal(size=(40, 12))
        got = pyk.assign_codes(z, codes)
        expected = np.argmin(((z[:, None, :] - codes[None, :, :]) ** 2).sum(-1), axis=1)
        assert np.array_equal(got, expected)

    def test_lowest_index_tie_break(self):
        codes = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
        z = np.array([[1.0, 0.0], [0.0, 0.0]])
        got = pyk.assign_codes(z, codes)
        assert got[0] == 0  # exact duplicate codes: lowest index wins
        assert got[1] == 0  # exactly equidistant between codes 0 and 2

    @needs_native
    def test_native_matches_python(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            z = rng.normal(size=(rng.integers(1, 400), rng.integers(1, 20)))
            codes = rng.normal(size=(rng.integers(1, 64), z.shape[1]))
            assert np.array_equal(native.assign_codes(z, codes), pyk.assign_codes(z, codes))


class TestBestSplit:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x, values_t, order, mask, grad, hess = random_split_problem(rng, n=120, n_features=5)
        got = pyk.best_split(values_t, order, mask, grad, hess, 3, 1.0)
        want = brute_force_best_split(x, mask, grad, hess, 3, 1.0)
        assert got[0] == want[0]
        if got[0] >= 0:
            assert got[1] == pytest.approx(want[1], abs=1e-12)
            assert got[2] == pytest.approx(want[2], rel=1e-9)

    @needs_native
    @pytest.mark.parametrize("seed", range(10))
    def test_native_matches_python_bitwise(self, seed):
        rng = np.random.default_rng(100 + seed)
        _, values_t, order, mask, grad, hess = random_split_problem(
            rng, n=int(rng.integers(10, 500)), n_features=int(rng.integers(1, 12)))
        min_leaf = int(rng.integers(1, 8))
        a = pyk.best_split(values_t, order, mask, grad, hess, min_leaf, 1.0)
        b = native.best_split(values_t, order, mask, grad, hess, min_leaf, 1.0)
        assert a == b  # bit-identical: same feature, threshold, gain

    def test_min_leaf_enforced(self):
        x = np.arange(10, dtype=np.float64).reshape(-1, 1)
        values_t = np.ascontiguousarray(x.T)
        order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T.astype(np.int64))
        mask = np.ones(10, dtype=np.uint8)
        grad = np.where(np.arange(10) < 5, -1.0, 1.0)
        hess = np.ones(10)
        f, thr, _ = pyk.best_split(values_t, order, mask, grad, hess, 4, 1.0)
        assert f == 0
        left = (x[:, 0] <= thr).sum()
        assert 4 <= left <= 6

    def test_no_split_when_node_too_small(self):
        x = np.arange(4, dtype=np.float64).reshape(-1, 1)
        values_t = np.ascontiguousarray(x.T)
        order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T.astype(np.int64))
        mask = np.ones(4, dtype=np.uint8)
        got = pyk.best_split(values_t, order, mask, np.ones(4), np.ones(4), 3, 1.0)
        assert got[0] == -1

    def test_constant_feature_never_split(self):
        x = np.zeros((20, 1))
        values_t = np.ascontiguousarray(x.T)
        order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T.astype(np.int64))
        mask = np.ones(20, dtype=np.uint8)
        grad = np.random.default_rng(0).normal(size=20)
        got = pyk.best_split(values_t, order, mask, grad, np.ones(20), 1, 1.0)
        assert got[0] == -1


def test_backend_selection_reports_name():
    assert backend.backend_name() in ("native", "python")

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from domdiar._validation import DegenerateRecordingError, FormatError
from domdiar.embedkit import (EmbeddingPreprocessor, EmbeddingSet, EnergyPCA, PcaProjection,
                              apply_pca, emit_embedding_table, fit_center_whiten, fit_pca,
                              length_normalize, load_preprocessor, parse_embedding_table,
                              save_preprocessor, window_segments)
from oracles import minimal_k, pca_spectrum_svd

CROSS = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


class TestTable:
    def test_single_row(self):
        es = parse_embedding_table("#dim 2\nrec1 0.0 1.5 1.0 0.0")
        assert (es.recording_id, es.dim, len(es)) == ("rec1", 2, 1)

    def test_wrong_length(self):
        with pytest.raises(FormatError, match="line 2"):
            parse_embedding_table("#dim 2\nrec1 0.0 1.5 1.0 0.0 3.0")

    def test_mixed_recordings(self):
        with pytest.raises(FormatError, match="one recording"):
            parse_embedding_table("#dim 1\na 0 1 1\nb 1 2 1")

    def test_sorted(self):
        es = parse_embedding_table("#dim 1\nr 2.0 3.0 5.0\nr 0.0 1.0 7.0")
        assert es.segments == [(0.0, 1.0), (2.0, 3.0)]
        assert es.vectors[:, 0].tolist() == [7.0, 5.0]

    def test_missing_header(self):
        with pytest.raises(FormatError, match="header"):
            parse_embedding_table("r 0 1 1")

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)),
                  elements=st.floats(-1e6, 1e6, allow_nan=False)))
    def test_round_trip(self, V):
        times = np.column_stack([np.arange(len(V)) * 0.75, np.arange(len(V)) * 0.75 + 1.5])
        es = EmbeddingSet("rec", times, V)
        assert parse_embedding_table(emit_embedding_table(es)) == es


class TestPreprocess:
    def test_length_normalize(self):
        np.testing.assert_allclose(length_normalize([3.0, 4.0]), [0.6, 0.8])
        u = np.array([0.0, 1.0])
        np.testing.assert_array_equal(length_normalize(u), u)
        with pytest.raises(ValueError):
            length_normalize([0.0, 0.0])

    def test_whitener_scalar(self):
        mean, W = fit_center_whiten([[-2.0], [2.0]])
        assert mean[0] == 0.0
        # variance 4 plus ridge 1e-6 * 4
        assert W[0, 0] == pytest.approx(1 / np.sqrt(4 + 4e-6), rel=1e-12)
        assert W[0, 0] == pytest.approx(0.5, abs=1e-6)

    def test_whitener_identity(self):
        X = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        mean, W = fit_center_whiten(X)
        np.testing.assert_allclose(mean, 0, atol=1e-15)
        np.testing.assert_allclose(W, np.eye(2), atol=1e-5)

    def test_whitener_single_vector(self):
        with pytest.raises(ValueError):
            fit_center_whiten([[1.0, 2.0]])

    def test_order_and_norm(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 4)) @ rng.normal(size=(4, 4)) + 3
        pre = EmbeddingPreprocessor(center=True, whiten=True).fit(X)
        Y = pre.transform(X)
        np.testing.assert_allclose(np.linalg.norm(Y, axis=1), 1.0)
        Z = EmbeddingPreprocessor(whiten=True, length_norm=False).fit(X).transform(X)
        np.testing.assert_allclose(np.cov(Z.T, bias=True), np.eye(4), atol=1e-4)

    def test_save_load(self):
        X = np.random.default_rng(1).normal(size=(20, 3))
        for kwargs in ({}, {"center": True}, {"whiten": True, "length_norm": False}):
            pre = EmbeddingPreprocessor(**kwargs).fit(X)
            back = load_preprocessor(save_preprocessor(pre))
            np.testing.assert_array_equal(back.transform(X), pre.transform(X))


class TestPca:
    def test_cross_k1(self):
        proj = fit_pca(CROSS, 0.9)
        assert proj.n_components == 1
        assert proj.eigenvalues[0] == pytest.approx(4.5)

    def test_cross_k2(self):
        proj = fit_pca(CROSS, 0.91)
        assert proj.n_components == 2
        np.testing.assert_allclose(proj.eigenvalues, [4.5, 0.5])

    def test_full_fraction_capped(self):
        X = np.random.default_rng(2).normal(size=(3, 6))
        assert fit_pca(X, 1.0).n_components == 2

    def test_apply_examples(self):
        proj = fit_pca(CROSS, 0.9)
        np.testing.assert_allclose(apply_pca(proj, [3.0, 0.0]), [3.0])
        np.testing.assert_allclose(apply_pca(proj, proj.mean), [0.0])
        v = np.array([1.5, -2.0, 0.25])
        np.testing.assert_array_equal(apply_pca(PcaProjection.identity(3), v), v)
        with pytest.raises(ValueError):
            apply_pca(proj, [1.0, 2.0, 3.0])

    def test_degenerate(self):
        with pytest.raises(DegenerateRecordingError, match="degenerate recording"):
            fit_pca(np.ones((5, 3)), 0.5)

    @pytest.mark.parametrize("seed", range(10))
    def test_orthonormal_and_residual(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 12)) * rng.uniform(0.1, 5, size=12)
        proj = fit_pca(X, 0.9)
        B = proj.basis
        np.testing.assert_allclose(B @ B.T, np.eye(len(B)), atol=1e-8)
        C = np.cov(X.T, bias=True)
        for v, lam in zip(B, proj.eigenvalues):
            assert np.linalg.norm(C @ v - lam * v) <= 1e-8 * np.linalg.norm(C, 2)
        assert np.all(np.diff(proj.eigenvalues) <= 0)
        assert all(row[np.flatnonzero(np.abs(row) > 1e-12)[0]] >= 0 for row in B)

    def test_estimator(self):
        X = np.random.default_rng(3).normal(size=(30, 5))
        pca = EnergyPCA(0.5).fit(X)
        assert pca.transform(X).shape == (30, pca.n_components_)
        assert pca.get_params() == {"energy_fraction": 0.5}

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 25), st.integers(1, 10))
    def test_minimal_k_matches_svd_oracle(self, seed, n, d):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d)) * rng.uniform(0.01, 3, size=d)
        lam = pca_spectrum_svd(X)
        for f in np.round(np.arange(1, 10) * 0.1, 1):
            assert fit_pca(X, f).n_components == minimal_k(lam, f, min(d, n - 1))


class TestWindows:
    def test_examples(self):
        assert window_segments([(0.0, 2.0)]) == [(0.0, 1.5), (0.75, 2.0), (1.5, 2.0)]
        assert window_segments([(0.0, 1.0)]) == [(0.0, 1.0)]
        assert window_segments([(0.0, 0.1)]) == [(0.0, 0.1)]

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 1000), st.integers(1, 500)), max_size=5))
    def test_cover_and_bounds(self, ivs):
        speech = [(a / 100, (a + d) / 100) for a, d in ivs]
        for a, b in speech:
            segs = window_segments([(a, b)])
            assert segs and segs[0][0] == a
            assert max(s[1] for s in segs) == pytest.approx(b)
            assert all(a <= s < e <= b + 1e-12 and e - s <= 1.5 + 1e-12 for s, e in segs)

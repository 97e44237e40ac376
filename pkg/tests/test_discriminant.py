import math

import numpy as np
import pytest
from scipy import stats

from truncount import discriminant as da
from truncount.exceptions import NumericalError, ValidationError


def two_clouds(seed, n=60, shift=(3.0, 0.0, 0.0), scale=1.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, scale, (n, 3)) - np.asarray(shift) / 2
    b = rng.normal(0, scale, (n, 3)) + np.asarray(shift) / 2
    return np.vstack([a, b]), ["Q"] * n + ["NQ"] * n


class TestFit:
    def test_hand_computed_four_points(self):
        # Q: (0,0), (2,1); NQ: (4,2), (4,4)
        # pooled S = [[1, .5], [.5, 1.25]] (det 1), S^-1 = [[1.25, -.5], [-.5, 1]]
        # m_Q - m_NQ = (-3, -2.5)  ->  raw = (-2.5, -1)
        X = np.array([[0.0, 0.0], [2.0, 1.0], [4.0, 2.0], [4.0, 4.0]])
        model = da.fit_lda(X, ["Q", "Q", "NQ", "NQ"], ("B", "L"))
        assert np.allclose(model.pooled_cov, [[1.0, 0.5], [0.5, 1.25]], atol=1e-12)
        assert np.allclose(model.raw_coefficients, [-2.5, -1.0], atol=1e-10)
        # raw' S raw = 10; standardized = |raw| * sqrt(diag S) / sqrt(10)
        assert np.allclose(model.standardized_coefficients, [2.5 / math.sqrt(10), math.sqrt(1.25) / math.sqrt(10)], atol=1e-10)

    def test_separation_axis(self):
        X, g = two_clouds(0, n=5000)
        # mirror the first cloud so group means differ along B only, up to noise
        X = np.vstack([X[:5000], -X[:5000]])
        model = da.fit_lda(X, g)
        c = model.standardized_coefficients
        assert abs(c[0]) > 0.99 * np.linalg.norm(c)
        assert abs(c[1]) < 0.05 and abs(c[2]) < 0.05

    def test_unit_within_variance_and_cutoff(self):
        X, g = two_clouds(1)
        model = da.fit_lda(X, g)
        unit = model.standardized_coefficients / np.sqrt(np.diag(model.pooled_cov))
        assert float(unit @ model.pooled_cov @ unit) == pytest.approx(1.0, rel=1e-12)
        assert model.cutoff == pytest.approx(model.centroids.mean())
        assert model.standardized_coefficients[0] >= 0

    def test_identical_means_degenerate(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0, 1, (30, 3))
        a -= a.mean(axis=0)
        b = rng.normal(0, 1, (30, 3))
        b -= b.mean(axis=0)
        X = np.vstack([a, b])
        g = ["Q"] * 30 + ["NQ"] * 30
        with pytest.warns(RuntimeWarning, match="no usable discriminant direction"):
            model = da.fit_lda(X, g)
        assert model.degenerate
        assert da.wilks(X, g).lam == pytest.approx(1.0, abs=1e-10)

    def test_singular_within_covariance(self):
        X, g = two_clouds(3)
        X[:, 2] = 2 * X[:, 0] - X[:, 1]
        with pytest.raises(NumericalError, match="collinear"):
            da.fit_lda(X, g)

    def test_validation(self):
        with pytest.raises(ValidationError):
            da.fit_lda(np.zeros((4, 3)), ["Q", "Q", "Q", "Q"])
        with pytest.raises(ValidationError):
            da.fit_lda(np.full((4, 3), np.nan), ["Q", "Q", "NQ", "NQ"])

    def test_label_swap(self):
        X, g = two_clouds(4, shift=(2.0, 1.0, -0.5))
        swapped = ["NQ" if lab == "Q" else "Q" for lab in g]
        a = da.fit_lda(X, g)
        b = da.fit_lda(X, swapped)
        assert np.allclose(a.raw_coefficients, -b.raw_coefficients)
        assert np.allclose(a.centroids, b.centroids[::-1])
        side_a = [da.classify(a, x) == a.low_group for x in X]
        side_b = [da.classify(b, x) == b.low_group for x in X]
        assert side_a == side_b


class TestScoreAndClassify:
    def test_worked_example(self):
        s = da.score((0.390, 0.923, -0.288), (9, 22, 7))
        assert s == pytest.approx(21.8, abs=0.05)
        assert da.classify_score(s, 18.79) == da.NON_QUANTITATIVE

    def test_zero_and_linear(self):
        c = (0.390, 0.923, -0.288)
        assert da.score(c, (0, 0, 0)) == 0
        assert da.score(c, (18, 44, 14)) == pytest.approx(2 * da.score(c, (9, 22, 7)))

    def test_ties_and_below(self):
        assert da.classify_score(18.79, 18.79) == da.NON_QUANTITATIVE
        assert da.classify_score(0.0, 18.79) == da.QUANTITATIVE

    def test_rescaling_invariance(self):
        X, g = two_clouds(5, shift=(2.0, 1.0, 0.0))
        model = da.fit_lda(X, g)
        for x in X[:40]:
            base = da.classify_score(da.score(model.standardized_coefficients, x), model.cutoff)
            scaled = da.classify_score(da.score(3.7 * model.standardized_coefficients, x), 3.7 * model.cutoff)
            assert base == scaled


class TestBoxM:
    def test_identical_covariances(self):
        rng = np.random.default_rng(6)
        a = rng.normal(0, 1, (20, 3))
        X = np.vstack([a, a + [5.0, -1.0, 2.0]])
        res = da.box_m(X, ["Q"] * 20 + ["NQ"] * 20)
        assert res.M == pytest.approx(0.0, abs=1e-9)
        assert res.p == pytest.approx(1.0, abs=1e-9)
        assert res.df == 6

    def test_scalar_case(self):
        rng = np.random.default_rng(7)
        a, b = rng.normal(0, 1, 15), rng.normal(0, 2, 25)
        X = np.concatenate([a, b])[:, None]
        res = da.box_m(X, ["Q"] * 15 + ["NQ"] * 25)
        s1, s2 = a.var(ddof=1), b.var(ddof=1)
        sp = (14 * s1 + 24 * s2) / 38
        assert res.M == pytest.approx(38 * math.log(sp) - 14 * math.log(s1) - 24 * math.log(s2), abs=1e-10)
        c = (1 / 14 + 1 / 24 - 1 / 38) * (2 + 3 - 1) / (6 * 2 * 1)
        assert res.chi2 == pytest.approx(res.M * (1 - c), abs=1e-10)
        assert res.df == 1

    def test_null_uniform(self):
        pvalues = []
        for seed in range(2000):
            rng = np.random.default_rng(seed)
            X = rng.normal(0, 1, (100, 3))
            pvalues.append(da.box_m(X, ["Q"] * 50 + ["NQ"] * 50).p)
        assert stats.kstest(pvalues, "uniform").pvalue > 0.01

    def test_group_too_small(self):
        with pytest.raises(ValidationError):
            da.box_m(np.random.default_rng(0).normal(size=(6, 3)), ["Q"] * 3 + ["NQ"] * 3)


class TestWilks:
    def test_separated_clusters(self):
        X, g = two_clouds(8, shift=(20.0, 0, 0), scale=0.5)
        res = da.wilks(X, g)
        centered = X - X.mean(axis=0)
        W = sum(
            (X[np.array(g) == lab] - X[np.array(g) == lab].mean(axis=0)).T
            @ (X[np.array(g) == lab] - X[np.array(g) == lab].mean(axis=0))
            for lab in ("Q", "NQ")
        )
        assert res.lam == pytest.approx(np.linalg.det(W) / np.linalg.det(centered.T @ centered), rel=1e-10)
        assert res.lam < 0.01
        assert res.df == 3

    def test_bartlett_statistic(self):
        X, g = two_clouds(9, shift=(0.8, 0.3, 0))
        res = da.wilks(X, g)
        n, p = X.shape
        assert res.chi2 == pytest.approx(-(n - 1 - (p + 2) / 2) * math.log(res.lam))
        assert res.p == pytest.approx(stats.chi2.sf(res.chi2, 3))

    def test_linear_invariance(self):
        X, g = two_clouds(10, shift=(1.0, 0.5, 0))
        A = np.random.default_rng(11).normal(size=(3, 3)) + 3 * np.eye(3)
        assert da.wilks(X @ A.T + 7.0, g).lam == pytest.approx(da.wilks(X, g).lam, rel=1e-9)


class TestConfusion:
    def test_printed_counts(self):
        conf = da.ConfusionMatrix.from_counts([[86, 26], [12, 76]])
        assert conf.n == 200
        assert conf.overall_accuracy == 0.81
        assert np.allclose(conf.row_percentages.sum(axis=1), 100.0)

    def test_perfect_on_separable(self):
        X, g = two_clouds(12, shift=(10.0, 0, 0))
        model = da.fit_lda(X, g)
        conf = da.confusion(model, X, g)
        assert conf.counts[0, 1] == 0 and conf.counts[1, 0] == 0
        assert conf.overall_accuracy == 1.0

    def test_counts_sum(self):
        X, g = two_clouds(13, shift=(0.5, 0.5, 0.5))
        model = da.fit_lda(X, g)
        conf = da.confusion(model, X, g)
        assert conf.n == len(g)
        assert 0.0 <= conf.overall_accuracy <= 1.0
        assert np.all(np.abs(conf.row_percentages.sum(axis=1) - 100) <= 0.5)

    def test_margin_three_sds(self):
        rng = np.random.default_rng(14)
        a = rng.uniform(-0.5, 0.5, (50, 3))
        b = rng.uniform(-0.5, 0.5, (50, 3)) + [4.0, 0, 0]
        X = np.vstack([a, b])
        g = ["Q"] * 50 + ["NQ"] * 50
        assert da.confusion(da.fit_lda(X, g), X, g).overall_accuracy == 1.0

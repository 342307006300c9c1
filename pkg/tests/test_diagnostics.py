import numpy as np
import pytest
from scipy import stats
from statsmodels.stats.diagnostic import het_breuschpagan

from urbanrisk import diagnostics, numerics, pca
from urbanrisk.errors import DegenerateDataError, DimensionError, DomainError

from conftest import random_indicator_table


class TestShapiroWilk:
    def test_ideal_normal_sample(self):
        n = 50
        sample = np.array(
            [numerics.normal_ppf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)]
        )
        w, p = diagnostics.shapiro_wilk(sample)
        assert w > 0.99
        assert p > 0.5

    def test_exponential_sample_rejected(self):
        rng = np.random.default_rng(1)
        sample = rng.exponential(size=100)
        w, p = diagnostics.shapiro_wilk(sample)
        assert p < 0.01
        w_ref, _ = stats.shapiro(sample)
        assert abs(w - w_ref) <= 1e-4

    def test_matches_reference_across_sizes(self):
        rng = np.random.default_rng(2)
        for n in (4, 7, 11, 12, 25, 100, 700, 4999):
            sample = rng.normal(size=n)
            w, p = diagnostics.shapiro_wilk(sample)
            w_ref, p_ref = stats.shapiro(sample)
            assert abs(w - w_ref) <= 1e-4
            assert abs(p - p_ref) <= 1e-4

    def test_constant_vector(self):
        with pytest.raises(DegenerateDataError):
            diagnostics.shapiro_wilk(np.full(10, 3.3))

    def test_out_of_range_n(self):
        with pytest.raises(DomainError):
            diagnostics.shapiro_wilk(np.array([1.0, 2.0]))
        with pytest.raises(DomainError):
            diagnostics.shapiro_wilk(np.zeros(5001))

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(3)
        sample = rng.normal(size=60)
        w1, _ = diagnostics.shapiro_wilk(sample)
        w2, _ = diagnostics.shapiro_wilk(-sample)
        assert w1 == pytest.approx(w2, abs=1e-12)

    def test_p_in_unit_interval(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            sample = rng.standard_t(df=2, size=int(rng.integers(5, 300)))
            w, p = diagnostics.shapiro_wilk(sample)
            assert 0 < w <= 1
            assert 0 <= p <= 1


class TestBreuschPagan:
    def make_design(self, rng, n, k=2):
        return np.hstack([np.ones((n, 1)), rng.normal(size=(n, k))])

    def test_constant_magnitude_residuals_give_zero(self):
        rng = np.random.default_rng(5)
        x = self.make_design(rng, 30)
        residuals = np.tile([1.0, -1.0], 15)  # squares are constant
        lm, p = diagnostics.breusch_pagan(residuals, x)
        assert lm == 0.0
        assert p == 1.0

    def test_heteroskedastic_residuals_detected(self):
        # variance proportional to a (positive) regressor, so the auxiliary
        # linear regression of squared residuals picks it up
        rng = np.random.default_rng(6)
        regressor = rng.uniform(0.5, 4.0, size=500)
        x = np.column_stack([np.ones(500), regressor])
        residuals = rng.normal(size=500) * np.sqrt(regressor)
        lm, p = diagnostics.breusch_pagan(residuals, x)
        assert p < 0.01
        lm_ref, p_ref, _, _ = het_breuschpagan(residuals, x)
        assert abs(lm - lm_ref) <= 1e-6
        assert abs(p - p_ref) <= 1e-6

    def test_matches_reference_on_random_problems(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(25, 200))
            k = int(rng.integers(1, 4))
            x = self.make_design(rng, n, k)
            residuals = rng.normal(size=n)
            lm, p = diagnostics.breusch_pagan(residuals, x)
            lm_ref, p_ref, _, _ = het_breuschpagan(residuals, x)
            assert abs(lm - lm_ref) <= 1e-8
            assert abs(p - p_ref) <= 1e-8

    def test_monte_carlo_size(self):
        rng = np.random.default_rng(8)
        x = self.make_design(rng, 20, k=1)
        rejections = 0
        for _ in range(1000):
            residuals = rng.normal(size=20)
            _, p = diagnostics.breusch_pagan(residuals, x)
            rejections += p < 0.05
        assert 0.02 <= rejections / 1000 <= 0.09

    def test_classic_variant(self):
        rng = np.random.default_rng(9)
        x = self.make_design(rng, 200, k=2)
        residuals = rng.normal(size=200) * (1.0 + 0.8 * np.abs(x[:, 1]))
        lm_classic, p_classic = diagnostics.breusch_pagan(residuals, x, studentized=False)
        # classic variant = studentized scaled by kurtosis factor; both chi2_2
        assert lm_classic > 0
        assert 0 <= p_classic <= 1

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(10)
        x = self.make_design(rng, 50)
        residuals = rng.normal(size=50)
        lm1, _ = diagnostics.breusch_pagan(residuals, x)
        lm2, _ = diagnostics.breusch_pagan(-residuals, x)
        assert lm1 == pytest.approx(lm2, abs=1e-12)


class TestDurbinWatson:
    def test_constant_residuals(self):
        assert diagnostics.durbin_watson(np.full(10, 2.5)) == 0.0

    def test_alternating_closed_form(self):
        for n in (2, 5, 20, 101):
            residuals = np.array([1.0, -1.0] * n)[:n]
            expected = 4.0 * (n - 1) / n
            assert diagnostics.durbin_watson(residuals) == pytest.approx(expected, abs=1e-12)

    def test_iid_noise_near_two(self):
        residuals = np.random.default_rng(11).normal(size=1000)
        assert 1.8 <= diagnostics.durbin_watson(residuals) <= 2.2

    def test_sign_flip_invariance(self):
        residuals = np.random.default_rng(12).normal(size=80)
        assert diagnostics.durbin_watson(residuals) == pytest.approx(
            diagnostics.durbin_watson(-residuals), abs=1e-15
        )

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateDataError):
            diagnostics.durbin_watson(np.zeros(5))

    def test_range(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            dw = diagnostics.durbin_watson(rng.normal(size=30))
            assert 0.0 <= dw <= 4.0


class TestVif:
    def test_orthogonal_columns_are_one(self):
        rng = np.random.default_rng(14)
        raw = rng.normal(size=(40, 3))
        q, _ = np.linalg.qr(raw - raw.mean(axis=0))
        out = diagnostics.vif(q)
        assert np.max(np.abs(out - 1.0)) <= 1e-9

    def test_duplicated_column_is_infinite(self):
        rng = np.random.default_rng(15)
        col = rng.normal(size=30)
        x = np.column_stack([col, col, rng.normal(size=30)])
        out = diagnostics.vif(x)
        assert np.isinf(out[0]) and np.isinf(out[1])
        assert np.isfinite(out[2])

    def test_pca_scores_have_unit_vif(self):
        table = random_indicator_table(np.random.default_rng(16))
        model = pca.fit_pca(table)
        scores = pca.transform(model, table)
        out = diagnostics.vif(scores.scores)
        assert np.max(np.abs(out - 1.0)) <= 1e-6

    def test_correlated_columns_exceed_one(self):
        rng = np.random.default_rng(17)
        a = rng.normal(size=100)
        b = 0.9 * a + 0.1 * rng.normal(size=100)
        out = diagnostics.vif(np.column_stack([a, b]))
        assert np.all(out > 5.0)

    def test_needs_two_columns(self):
        with pytest.raises(DimensionError):
            diagnostics.vif(np.ones((10, 1)))


class TestDiagnose:
    def test_report_rows_and_verdicts(self):
        rng = np.random.default_rng(18)
        table = random_indicator_table(rng, n=60)
        model = pca.fit_pca(table)
        scores = pca.transform(model, table).select([1, 2, 4, 5, 6])
        residuals = rng.normal(size=60)
        report = diagnostics.diagnose(residuals, scores.scores)
        rows = report.rows()
        assert [r[0] for r in rows] == [
            "Shapiro-Wilk (Normality)",
            "Breusch-Pagan (Homoscedasticity)",
            "Durbin-Watson (Autocorrelation)",
            "Variance Inflation Factor (VIF)",
        ]
        assert all(r[2] in ("Satisfied", "Violated") for r in rows)
        assert report.verdicts["vif"]
        assert 0 < report.shapiro_w <= 1
        assert 0 <= report.dw <= 4

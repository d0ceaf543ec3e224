import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abc_misspec.diagnostics import (DiscrepancyReport, accept_curve, accept_curve_benchmark, calibrate_cutoff,
                                     calibration_sample, detect, discrepancy_replicate, h_values,
                                     order_statistic_quantile, reg_discrepancy_statistic)
from abc_misspec.errors import DegenerateCurveError
from abc_misspec.models import Scenario
from abc_misspec.rng import RngStream
from abc_misspec.table import compute_distances, generate_table
from conftest import make_posterior

# independent pure-Python computation for d_i = sqrt(i/N), N = 10^4, so alpha(eps) = eps^2
QUADRATIC_SCORE = 0.13414000000000004


class TestAcceptCurve:
    def test_uniform_grid_is_linear(self):
        N = 1000
        c = accept_curve(np.arange(1, N + 1) / N)
        assert c.score <= 1 / N
        assert c.eps.size == 100 and np.all(np.diff(c.eps) > 0)

    def test_alpha_equals_eps_on_grid(self):
        N = 1000
        c = accept_curve(np.arange(1, N + 1) / N, J=10, q_lo=0.01, q_hi=0.1)
        assert np.allclose(c.alpha_hat, c.eps)

    def test_quadratic_curve(self):
        N = 10_000
        c = accept_curve(np.sqrt(np.arange(1, N + 1) / N))
        assert c.score > 0.05
        assert c.score == pytest.approx(QUADRATIC_SCORE, rel=1e-9)

    def test_quadratic_is_linear_in_eps_squared(self):
        N = 10_000
        c = accept_curve(np.sqrt(np.arange(1, N + 1) / N), k_theta=2)
        assert c.score < 1e-3

    def test_endpoints(self):
        c = accept_curve(RngStream(2).uniform(5000) ** 0.7)
        assert c.alpha_ref[0] == c.alpha_hat[0]
        assert c.alpha_ref[-1] == pytest.approx(c.alpha_hat[-1], abs=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateCurveError):
            accept_curve(np.ones(100))

    @pytest.mark.parametrize("kw", [dict(q_lo=0.2, q_hi=0.1), dict(q_lo=0.0), dict(q_hi=1.5), dict(J=1)])
    def test_bad_arguments(self, kw):
        with pytest.raises(ValueError):
            accept_curve(np.arange(100.0), **kw)

    def test_quantile_grid(self):
        c = accept_curve(RngStream(3).uniform(2000), grid="quantile")
        assert np.all(np.diff(c.eps) > 0) and c.alpha_hat[-1] == pytest.approx(0.1, abs=1e-3)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 100, allow_nan=False), min_size=50, max_size=400))
    def test_alpha_nondecreasing(self, d):
        try:
            c = accept_curve(d, J=20)
        except DegenerateCurveError:
            return
        assert np.all(np.diff(c.alpha_hat) >= 0)

    def test_csv(self, tmp_path):
        c = accept_curve(np.arange(1, 101) / 100, J=5)
        c.write_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "eps,alpha_hat,alpha_ref" and len(lines) == 6


class TestBenchmark:
    def test_single_index_and_deterministic(self):
        table = generate_table(Scenario(), 2000, 4)
        a = accept_curve_benchmark(table, [5])
        b = accept_curve_benchmark(table, [5])
        assert len(a) == 1 and a[0].score == b[0].score
        direct = accept_curve(compute_distances(table.drop([5]), table.etas[5]))
        assert a[0].score == direct.score

    def test_correct_specification_agrees(self):
        scen = Scenario(sigma2=1.0)
        ok = 0
        for seed in range(50):
            table = generate_table(scen, 5000, seed)
            y = RngStream(10_000 + seed).normal(scen.n) + scen.theta0
            obs = accept_curve(compute_distances(table, scen.summarize(y))).score
            bench = np.array([c.score for c in accept_curve_benchmark(table, np.arange(0, 5000, 250))])
            q1, med, q3 = np.quantile(bench, [0.25, 0.5, 0.75])
            ok += abs(obs - med) <= 3 * (q3 - q1)
        assert ok >= 45


class TestStatistic:
    def test_identical(self):
        p = make_posterior(RngStream(1).normal(50))
        assert reg_discrepancy_statistic(p, p) == 0.0

    def test_arithmetic(self):
        # h = identity on 2-d draws: means (1.2, 1) and (1, 1)
        a = make_posterior(np.array([[1.2, 1.0], [1.2, 1.0]]))
        b = make_posterior(np.array([[1.0, 1.0], [1.0, 1.0]]), method="Reg")
        assert reg_discrepancy_statistic(a, b, "identity", 100) == pytest.approx(2.0)

    def test_square_cube_degenerate(self):
        a = make_posterior(np.array([1.0]))
        b = make_posterior(np.array([2.0]), method="Reg")
        assert reg_discrepancy_statistic(a, b, "square-cube", 4) == pytest.approx(2 * math.sqrt(58))

    def test_h_values(self):
        x = np.array([[2.0, -1.0]])
        assert np.array_equal(h_values(x, "identity"), x)
        assert np.array_equal(h_values(x, "square-cube"), [[4.0, 8.0, 1.0, -1.0]])
        assert np.array_equal(h_values(x, "1,3"), h_values(x, [1, 3]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_swap_symmetry(self, seed):
        r = RngStream(seed)
        a = make_posterior(r.normal(30), r.uniform(30))
        b = make_posterior(r.normal(40), r.uniform(40), method="Reg")
        for h in ("identity", "square-cube"):
            assert reg_discrepancy_statistic(a, b, h, 100, weighted=True) == \
                reg_discrepancy_statistic(b, a, h, 100, weighted=True)

    def test_weighting_convention(self):
        draws = np.array([0.0, 1.0])
        ar = make_posterior(draws, np.array([1.0, 3.0]))
        reg = make_posterior(draws, np.array([1.0, 3.0]), method="Reg")
        # AR unweighted (mean 0.5) against weighted Reg (mean 0.75)
        assert reg_discrepancy_statistic(ar, reg, "identity", 16) == pytest.approx(4 * 0.25)
        assert reg_discrepancy_statistic(ar, reg, "identity", 16, weighted=False) == 0.0


class TestCutoff:
    def test_order_statistic(self):
        assert order_statistic_quantile([1, 2, 3], 0.95) == 3
        assert order_statistic_quantile([3, 1, 2], 0.5) == 2
        assert order_statistic_quantile(np.arange(1, 101), 0.95) == 95

    def test_detect(self):
        assert detect(5, 3) and not detect(3, 3) and not detect(0, 0)
        with pytest.raises(ValueError):
            detect(-1, 2)

    @given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 1e6))
    def test_detect_monotone(self, T, t, s):
        if detect(T, t) and s < t:
            assert detect(T, s)

    def test_report(self, tmp_path):
        rep = DiscrepancyReport(4.0, 3.0, "square-cube", 3, np.array([1.0]), np.array([1.0, 2.0, 3.0]))
        assert rep.flagged and rep.decision == "flagged"
        rep.write_csv(tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().splitlines()[0] == "T,t_n,flagged,h,B,theta_cal_1"

    def test_needs_two_replications(self):
        with pytest.raises(ValueError):
            calibration_sample(Scenario(), [1.0], B=1, N=1000)


@pytest.fixture(scope="module")
def null_runs():
    scen = Scenario(sigma2=1.0)
    cal = calibration_sample(scen, [1.0], B=400, N=10_000, q=0.01, seed=123)["square-cube"]
    fresh = np.array([discrepancy_replicate(scen, 9_000 + r, N=10_000, q=0.01, which="true")["square-cube"]
                      for r in range(100)])
    return scen, cal, fresh


class TestCalibration:
    def test_false_flag_rate(self, null_runs):
        _, cal, fresh = null_runs
        t_n = order_statistic_quantile(cal[:100], 0.95)
        assert np.mean(fresh > t_n) <= 0.10

    def test_quantile_consistency(self, null_runs):
        _, cal, _ = null_runs
        for B in (50, 100):
            # distribution-free band: the B-sample 0.95 order statistic should sit between
            # the 400-sample quantiles at 0.95 -/+ 3 binomial standard errors
            half = 3 * math.sqrt(0.95 * 0.05 / B)
            lo = order_statistic_quantile(cal, 0.95 - half)
            hi = order_statistic_quantile(cal, min(1.0, 0.95 + half))
            assert lo <= order_statistic_quantile(cal[:B], 0.95) <= hi

    def test_prefix_reuse_and_cutoff(self, null_runs):
        scen, cal, _ = null_runs
        t_n, sample = calibrate_cutoff(scen, [1.0], B=20, N=10_000, q=0.01, seed=123)
        assert np.array_equal(sample, cal[:20])
        assert t_n == order_statistic_quantile(cal[:20], 0.95)

    def test_threads_match(self):
        a = calibration_sample(Scenario(), [1.0], B=4, N=2000, seed=1, threads=1)
        b = calibration_sample(Scenario(), [1.0], B=4, N=2000, seed=1, threads=3)
        assert np.array_equal(a["square-cube"], b["square-cube"])

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtri

from abc_misspec.errors import NonConvergenceError
from abc_misspec.models import OCTILE_LEVELS, Scenario, simulate_summaries
from abc_misspec.pseudotrue import (LimitMaps, b0_mixture, b0_normal, binding_gk, binding_normal,
                                    limit_maps, reg_pseudo_true, solve_pseudo_true)
from abc_misspec.rng import RngStream

# 30-digit mpmath evaluation of the g-and-k quantile (c = 0.8) at the seven octiles
SEPTET_ORACLE = [-0.53669977067483480783, 0.18836196089839457211, 0.70679356244560901326, 1.17,
                 1.6842106600793400132, 2.3940837471482914458, 3.65273462337119738]
# mpmath bisection on 0.9 N(1, 2) + 0.1 N(7, 2) (variances), 40 digits
MIXTURE_OCTILES = [-0.53488123983263854066, 0.16638329970890866775, 0.7024076065128345467,
                   1.1975720867536523225, 1.719068502461963237, 2.3678090084664806159, 3.684428183540255712]


class TestBindingMaps:
    def test_normal(self):
        assert np.array_equal(binding_normal(0.0), [0, 1])
        assert np.array_equal(binding_normal([1.0]), [1, 1])
        assert np.array_equal(b0_normal(1, 1), [1, 1]) and np.array_equal(b0_normal(1, 3), [1, 3])
        with pytest.raises(ValueError):
            b0_normal(1, 0)

    @pytest.mark.parametrize("which,theta,target", [("assumed", 1.0, (1, 1)), ("true", 1.0, (1, 3))])
    def test_monte_carlo_consistency(self, which, theta, target):
        scen = Scenario(n=10_000, sigma2=3.0)
        s = simulate_summaries(scen, [[theta]], which, 31, np.arange(2000))
        se = s.std(axis=0, ddof=1) / np.sqrt(s.shape[0])
        assert np.all(np.abs(s.mean(axis=0) - target) < 4 * se)

    def test_gk_examples(self):
        assert np.allclose(binding_gk([2.5, 0, 0.3, 0.7]), 2.5)
        assert np.allclose(binding_gk([0, 1, 0, 0]), ndtri(OCTILE_LEVELS), atol=1e-14)
        assert np.allclose(binding_gk([1.17, 1.50, 0.41, 0.23]), SEPTET_ORACLE, rtol=0, atol=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 10), min_size=4, max_size=4), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
    def test_gk_lipschitz(self, theta, direction):
        theta = np.array(theta)
        delta = 1e-4 * np.array(direction)
        moved = np.clip(theta + delta, 0, 10)
        step = np.linalg.norm(moved - theta)
        # |dQ/dtheta| is bounded on [0,10]^4 by roughly 10 * 2.2 * (1+z^2)^10 |z| at the extreme octile
        L = 1e6
        assert np.linalg.norm(binding_gk(moved) - binding_gk(theta)) <= L * step + 1e-12


class TestMixture:
    def test_default_mixture(self):
        assert np.allclose(b0_mixture(0.9, 1, 2, 7, 2), MIXTURE_OCTILES, rtol=0, atol=1e-10)

    def test_single_component(self):
        got = b0_mixture(1.0, 0.5, 4.0, 7.0, 2.0)
        assert np.allclose(got, 0.5 + 2.0 * ndtri(OCTILE_LEVELS), atol=1e-10)

    def test_symmetric_median(self):
        got = b0_mixture(0.5, -3, 1.5, 3, 1.5)
        assert got[3] == pytest.approx(0.0, abs=1e-10)
        assert np.allclose(got[:3], -got[4:][::-1], atol=1e-10)

    def test_live_oracle_other_parameters(self):
        w, m1, v1, m2, v2 = 0.3, -1.0, 0.5, 2.0, 3.0
        with mp.workdps(30):
            F = lambda x: w * mp.ncdf((x - m1) / mp.sqrt(v1)) + (1 - w) * mp.ncdf((x - m2) / mp.sqrt(v2))  # noqa: E731
            ref = [float(mp.findroot(lambda x: F(x) - mp.mpf(j) / 8, (-20, 20), solver="bisect", tol=1e-25))
                   for j in range(1, 8)]
        assert np.allclose(b0_mixture(w, m1, v1, m2, v2), ref, rtol=0, atol=1e-10)

    def test_bracket_failure(self):
        with pytest.raises(ArithmeticError):
            b0_mixture(0.9, 1, 2, 7, 2, levels=[0.0, 0.5])


class TestSolver:
    def test_normal_misspecified(self):
        res = solve_pseudo_true(limit_maps(Scenario(sigma2=3.0)), restarts=4)
        assert res.theta[0] == pytest.approx(1.0, abs=1e-6)
        assert res.eps_star == pytest.approx(2.0, abs=1e-9)

    def test_normal_correct(self):
        res = solve_pseudo_true(limit_maps(Scenario(sigma2=1.0)), restarts=4)
        assert res.theta[0] == pytest.approx(1.0, abs=1e-6)
        assert res.eps_star < 1e-6

    def test_gk_default_mixture(self):
        maps = limit_maps(Scenario(kind="gk-mixture"))
        res = solve_pseudo_true(maps)
        assert np.allclose(res.theta, [1.17, 1.50, 0.41, 0.23], atol=0.02)
        assert res.eps_star == pytest.approx(maps.gap(res.theta))
        assert maps.in_box(res.theta) and len(res.trace) == 20

    def test_gk_correct_specification(self):
        truth = np.array([3.0, 1.0, 2.0, 0.5])
        maps = limit_maps(Scenario(kind="gk-mixture"))
        maps = LimitMaps(maps.binding, binding_gk(truth), maps.box)
        res = solve_pseudo_true(maps)
        assert res.eps_star < 1e-6 and np.allclose(res.theta, truth, atol=1e-4)

    def test_beats_random_probes(self):
        maps = limit_maps(Scenario(kind="gk-mixture"))
        res = solve_pseudo_true(maps, restarts=8, seed=3)
        probes = maps.box[:, 0] + RngStream(5).uniform(4000).reshape(1000, 4) * np.ptp(maps.box, axis=1)
        assert res.eps_star <= min(maps.gap(p) for p in probes)

    def test_deterministic(self):
        maps = limit_maps(Scenario(kind="gk-mixture"))
        a, b = solve_pseudo_true(maps, restarts=3, seed=7), solve_pseudo_true(maps, restarts=3, seed=7)
        assert np.array_equal(a.theta, b.theta) and a.best_restart == b.best_restart

    def test_non_convergence(self):
        maps = LimitMaps(lambda t: np.array([t[0], 0.0]), np.array([50.0, 0.0]), np.array([[0.0, 1.0]]))
        with pytest.raises(NonConvergenceError) as info:
            solve_pseudo_true(maps, restarts=2, penalty=0.0)
        assert len(info.value.trace) == 2

    def test_bad_restarts(self):
        with pytest.raises(ValueError):
            solve_pseudo_true(limit_maps(Scenario()), restarts=0)


class TestRegPseudoTrue:
    maps = limit_maps(Scenario(sigma2=3.0))

    def test_zero_beta(self):
        assert np.array_equal(reg_pseudo_true([1.0], [[0.0, 0.0]], self.maps), [1.0])

    def test_arithmetic(self):
        assert reg_pseudo_true([1.0], [[0.0, 0.5]], self.maps) == pytest.approx([2.0])

    def test_correct_specification(self):
        maps = limit_maps(Scenario(sigma2=1.0))
        assert np.array_equal(reg_pseudo_true([1.0], [[0.3, -0.8]], maps), [1.0])

    def test_outside_box_flagged(self, caplog):
        out = reg_pseudo_true([1.0], [[0.0, 20.0]], self.maps)
        assert out[0] == pytest.approx(41.0) and "outside" in caplog.text

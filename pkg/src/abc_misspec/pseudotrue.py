"""Limit summary maps, misspecification gap and pseudo-true values."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .adjust import fit_local_linear
from .errors import NonConvergenceError
from .models import OCTILE_LEVELS, Scenario, gk_from_normal
from .table import abc_reject, generate_table

log = logging.getLogger(__name__)

_Z_OCT = ndtri(OCTILE_LEVELS)


@dataclass
class LimitMaps:
    binding: Callable[[np.ndarray], np.ndarray]
    b0: np.ndarray
    box: np.ndarray  # (k_theta, 2)

    @property
    def k_theta(self) -> int:
        return self.box.shape[0]

    def gap(self, theta) -> float:
        return float(np.linalg.norm(self.b0 - self.binding(np.asarray(theta, dtype=float))))

    def in_box(self, theta, tol: float = 1e-6) -> bool:
        t = np.asarray(theta, dtype=float)
        return bool(np.all(t >= self.box[:, 0] - tol) and np.all(t <= self.box[:, 1] + tol))


@dataclass
class PseudoTrueResult:
    theta: np.ndarray
    eps_star: float
    trace: list = field(default_factory=list)

    @property
    def best_restart(self) -> int:
        return min(self.trace, key=lambda t: (t["objective"], t["restart"]))["restart"]


def binding_normal(theta) -> np.ndarray:
    """Assumed N(theta, 1): mean and variance converge to (theta, 1)."""
    return np.array([float(np.ravel(theta)[0]), 1.0])


def b0_normal(theta0: float, sigma2: float) -> np.ndarray:
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return np.array([float(theta0), float(sigma2)])


def binding_gk(theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    if th[1] < 0:
        raise ValueError("g-and-k scale b must be nonnegative")
    return gk_from_normal(_Z_OCT, th)


def binding_prop1(theta) -> np.ndarray:
    t = float(np.ravel(theta)[0])
    return np.array([t, t])


def mixture_cdf(x, w, mu1, s1sq, mu2, s2sq):
    return w * ndtr((x - mu1) / np.sqrt(s1sq)) + (1.0 - w) * ndtr((x - mu2) / np.sqrt(s2sq))


def b0_mixture(w, mu1, s1sq, mu2, s2sq, levels=OCTILE_LEVELS, tol: float = 1e-12) -> np.ndarray:
    """Population quantiles of the two-component normal mixture by bisection."""
    smax = np.sqrt(max(s1sq, s2sq))
    lo = np.full(len(levels), min(mu1, mu2) - 10.0 * smax)
    hi = np.full(len(levels), max(mu1, mu2) + 10.0 * smax)
    levels = np.asarray(levels, dtype=float)
    f = lambda x: mixture_cdf(x, w, mu1, s1sq, mu2, s2sq) - levels  # noqa: E731
    if np.any(f(lo) > 0) or np.any(f(hi) < 0):
        raise ArithmeticError("bisection bracket does not contain the quantile")
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = f(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def limit_maps(scenario: Scenario) -> LimitMaps:
    if scenario.kind == "normal":
        # the N(0, 25) prior is unbounded; search within five prior sds
        half = 5.0 * scenario.prior_sd
        return LimitMaps(binding_normal, b0_normal(scenario.theta0, scenario.sigma2),
                         np.array([[-half, half]]))
    if scenario.kind == "gk-mixture":
        b0 = b0_mixture(scenario.w, scenario.mu1, scenario.s1sq, scenario.mu2, scenario.s2sq)
        return LimitMaps(binding_gk, b0, scenario.box)
    return LimitMaps(binding_prop1, np.array([scenario.b0bar, -scenario.b0bar]), scenario.box)


def nelder_mead(f, x0, scale, xtol: float = 1e-8, max_iter: int = 20000):
    """Simplex descent with coefficients reflection 1, expansion 2, contraction 0.5, shrink 0.5.

    Stops once every vertex is within ``xtol`` of the best one. Returns
    (x, f(x), iterations, converged).
    """
    x0 = np.asarray(x0, dtype=float)
    k = x0.size
    sim = np.vstack([x0] + [x0 + scale[j] * np.eye(k)[j] for j in range(k)])
    fs = np.array([f(v) for v in sim])
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if np.max(np.linalg.norm(sim[1:] - sim[0], axis=1)) < xtol:
            converged = True
            break
        it += 1
        c = sim[:-1].mean(axis=0)
        xr = c + (c - sim[-1])
        fr = f(xr)
        if fr < fs[0]:
            xe = c + 2.0 * (c - sim[-1])
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = c + 0.5 * (xr - c)
                fc = f(xc)
                ok = fc <= fr
            else:
                xc = c + 0.5 * (sim[-1] - c)
                fc = f(xc)
                ok = fc < fs[-1]
            if ok:
                sim[-1], fs[-1] = xc, fc
            else:
                sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
                fs[1:] = [f(v) for v in sim[1:]]
    best = int(np.argmin(fs))
    return sim[best], float(fs[best]), it, converged


def solve_pseudo_true(maps: LimitMaps, restarts: int = 20, seed: int = 0,
                      penalty: float = 1e6, xtol: float = 1e-8) -> PseudoTrueResult:
    """Minimize |b0 - b(theta)| over the box by multi-start simplex descent.

    Starting points are scrambled Sobol points in the box; leaving the box costs
    ``penalty`` times the squared violation.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    lo, hi = maps.box[:, 0], maps.box[:, 1]
    width = hi - lo

    def objective(t):
        viol = np.maximum(lo - t, 0.0) + np.maximum(t - hi, 0.0)
        pen = penalty * float(viol @ viol)
        if t.size == 4 and t[1] < 0:
            # b(theta) needs b >= 0; evaluate at the boundary and let the penalty steer back
            t = t.copy()
            t[1] = 0.0
        return float(np.linalg.norm(maps.b0 - maps.binding(t))) + pen

    sobol = qmc.Sobol(maps.k_theta, scramble=True, seed=np.random.default_rng(seed))
    m = max(0, int(np.ceil(np.log2(restarts))))
    starts = lo + sobol.random_base2(m)[:restarts] * width
    trace = []
    for r, x0 in enumerate(starts):
        x, fx, its, conv = nelder_mead(objective, x0, 0.05 * width, xtol=xtol)
        inside = maps.in_box(x)
        trace.append({"restart": r, "start": x0.tolist(), "theta": x.tolist(),
                      "objective": fx, "iterations": its, "converged": conv, "inside": inside})
    good = [t for t in trace if t["converged"] and t["inside"]]
    if not good:
        raise NonConvergenceError("no restart converged inside the parameter box", trace)
    best = min(good, key=lambda t: (t["objective"], t["restart"]))
    theta = np.array(best["theta"])
    return PseudoTrueResult(theta, maps.gap(theta), trace)


def reg_pseudo_true(theta_star, beta0, maps: LimitMaps) -> np.ndarray:
    """theta* - beta0 (b(theta*) - b0); not clamped to the box."""
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    beta0 = np.atleast_2d(np.asarray(beta0, dtype=float))
    out = theta_star - beta0 @ (maps.binding(theta_star) - maps.b0)
    if not maps.in_box(out):
        log.warning("regression-adjusted pseudo-true value %s lies outside the parameter box", out)
    return out


def estimate_beta0(scenario: Scenario, N: int = 1_000_000, q: float = 0.01, seed: int = 0,
                   maps: LimitMaps | None = None) -> np.ndarray:
    """Slope matrix of the local-linear fit on a large table with eta_obs = b0.

    There is no closed form for the limit of the fitted slopes; this is the
    large-sample approximation.
    """
    maps = maps or limit_maps(scenario)
    table = generate_table(scenario, N, seed)
    post = abc_reject(table, maps.b0, q)
    return fit_local_linear(post, maps.b0).slopes

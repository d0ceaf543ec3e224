"""Post-processing of accepted draws by local regression."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateScaleError, DivergenceError, SingularDesignError
from .models import Scenario, simulate_summaries
from .posterior import PosteriorDraws
from .rng import RngStream

EPANECHNIKOV_C = 0.75
LOG_FLOOR = 1e-12


def epanechnikov_weight(t, eps: float):
    """K_eps(t) = 0.75 / eps * (1 - (t / eps)^2) on t <= eps, zero beyond."""
    if eps <= 0:
        raise ValueError("bandwidth must be positive")
    t = np.asarray(t, dtype=float)
    w = np.where(t <= eps, EPANECHNIKOV_C / eps * (1.0 - (t / eps) ** 2), 0.0)
    return float(w) if w.ndim == 0 else w


def kernel_weights(p: PosteriorDraws) -> np.ndarray:
    if p.distances is not None and p.epsilon > 0:
        return epanechnikov_weight(p.distances, p.epsilon)
    return p.weights


@dataclass
class RegressionFit:
    intercepts: np.ndarray  # (k_theta,)
    slopes: np.ndarray  # (k_theta, k_eta)
    weights: np.ndarray
    center: np.ndarray

    def predict(self, eta) -> np.ndarray:
        x = np.atleast_2d(eta) - self.center
        return self.intercepts + x @ self.slopes.T


def solve_wls(X: np.ndarray, Y: np.ndarray, w: np.ndarray, cond_max: float = 1e13) -> np.ndarray:
    """Weighted least squares via the normal equations (X'WX) b = X'WY.

    ``X`` already carries the intercept column. Returns coefficients with
    one column per response.
    """
    XtW = X.T * w
    A = XtW @ X
    rhs = XtW @ Y
    # equilibrate before judging conditioning so unit choices do not matter
    s = np.sqrt(np.diag(A))
    if np.any(~(s > 0)):
        raise SingularDesignError("weighted design has a zero column")
    As = A / np.outer(s, s)
    if not np.all(np.isfinite(As)) or np.linalg.cond(As) > cond_max:
        raise SingularDesignError("weighted design matrix is singular")
    return np.linalg.solve(A, rhs)


def fit_local_linear(p: PosteriorDraws, eta_obs, weights=None) -> RegressionFit:
    """Kernel-weighted regression of theta on eta(z) - eta_obs, with intercept."""
    if p.summaries is None:
        raise ValueError("posterior carries no simulated summaries")
    w = kernel_weights(p) if weights is None else np.asarray(weights, dtype=float)
    eta_obs = np.asarray(eta_obs, dtype=float).ravel()
    k_eta = p.summaries.shape[1]
    if np.count_nonzero(w > 0) < k_eta + 2:
        raise SingularDesignError(f"need at least {k_eta + 2} positively weighted draws")
    X = np.column_stack([np.ones(p.size), p.summaries - eta_obs])
    coef = solve_wls(X, p.draws, w)
    return RegressionFit(coef[0].copy(), coef[1:].T.copy(), w, eta_obs)


def adjust_linear(p: PosteriorDraws, fit: RegressionFit) -> PosteriorDraws:
    shift = (p.summaries - fit.center) @ fit.slopes.T
    return p.with_draws(p.draws - shift, "Reg")


def regn_center(scenario: Scenario, theta_hat, M_sim: int, master_seed: int) -> np.ndarray:
    """Average summary of M_sim assumed-model datasets simulated at theta_hat."""
    if M_sim < 1:
        raise ValueError("M_sim must be >= 1")
    th = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    eta = simulate_summaries(scenario, th[None, :], "assumed", master_seed, np.arange(M_sim))
    return eta.mean(axis=0)


def adjust_regn(p: PosteriorDraws, fit: RegressionFit, eta_hat) -> PosteriorDraws:
    shift = (np.asarray(eta_hat, dtype=float) - p.summaries) @ fit.slopes.T
    return p.with_draws(p.draws + shift, "RegN")


# --- single-hidden-layer network ------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class NonlinearFit:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: np.ndarray
    y_sd: np.ndarray
    activation: str = "logistic"
    loss: float = float("nan")
    iterations: int = 0

    @property
    def hidden(self) -> int:
        return self.b1.size

    def predict(self, eta) -> np.ndarray:
        x = (np.atleast_2d(eta) - self.x_mean) / self.x_sd
        h = _sigmoid(x @ self.W1 + self.b1)
        return (h @ self.W2 + self.b2) * self.y_sd + self.y_mean


def _weighted_standardize(a, w):
    m = w @ a / w.sum()
    sd = np.sqrt(w @ (a - m) ** 2 / w.sum())
    sd = np.where(sd > 1e-12 * np.maximum(1.0, np.abs(m)), sd, 1.0)
    return m, sd


def train_network(X, Y, w, hidden: int = 5, epochs: int = 500, step: float = 0.01,
                  decay: float = 1e-4, seed: int = 0, optimizer: str = "lbfgs") -> NonlinearFit:
    """Fit a one-hidden-layer logistic network minimizing weighted squared error.

    Inputs and outputs are standardized by their weighted mean and sd. The
    objective is sum_i w_i |f(x_i) - y_i|^2 / sum_i w_i plus ``decay / M`` times
    the squared norm of the connection weights, i.e. ``decay`` is measured against
    the summed (not averaged) squared error with weights rescaled to mean one. ``optimizer='lbfgs'`` runs full-batch
    L-BFGS for at most ``epochs`` iterations; ``'gd'`` runs ``epochs`` steps of
    plain gradient descent with step size ``step``.
    """
    if hidden < 1:
        raise ValueError("hidden units must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    w = np.asarray(w, dtype=float)
    wn = w / w.sum()
    pen = decay / w.size
    xm, xs = _weighted_standardize(X, w)
    ym, ys = _weighted_standardize(Y, w)
    Xs = (X - xm) / xs
    Ys = (Y - ym) / ys
    kin, kout = X.shape[1], Y.shape[1]

    rng = RngStream(seed, 0)
    W1 = (rng.uniform(kin * hidden) - 0.5).reshape(kin, hidden) / kin
    W2 = (rng.uniform(hidden * kout) - 0.5).reshape(hidden, kout) / hidden
    shapes = [(kin, hidden), (hidden,), (hidden, kout), (kout,)]
    sizes = [int(np.prod(s)) for s in shapes]

    def unpack(v):
        out, pos = [], 0
        for shp, sz in zip(shapes, sizes):
            out.append(v[pos:pos + sz].reshape(shp))
            pos += sz
        return out

    def objective(v):
        w1, b1, w2, b2 = unpack(v)
        h = _sigmoid(Xs @ w1 + b1)
        r = h @ w2 + b2 - Ys
        f = float(np.sum(wn[:, None] * r * r) + pen * (np.sum(w1 * w1) + np.sum(w2 * w2)))
        g_out = 2.0 * wn[:, None] * r
        g_w2 = h.T @ g_out + 2.0 * pen * w2
        g_b2 = g_out.sum(axis=0)
        g_h = (g_out @ w2.T) * h * (1.0 - h)
        g_w1 = Xs.T @ g_h + 2.0 * pen * w1
        g_b1 = g_h.sum(axis=0)
        return f, np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])

    v = np.concatenate([W1.ravel(), np.zeros(hidden), W2.ravel(), np.zeros(kout)])
    if optimizer == "lbfgs":
        res = minimize(objective, v, jac=True, method="L-BFGS-B",
                       options={"maxiter": epochs, "ftol": 1e-15, "gtol": 1e-10})
        v, loss, its = res.x, float(res.fun), int(res.nit)
    elif optimizer == "gd":
        loss = float("nan")
        for its in range(1, epochs + 1):
            loss, g = objective(v)
            if not np.isfinite(loss):
                break
            v = v - step * g
        loss = objective(v)[0]
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if not np.isfinite(loss) or not np.all(np.isfinite(v)):
        raise DivergenceError("network training diverged; try a smaller step")
    w1, b1, w2, b2 = unpack(v)
    return NonlinearFit(w1, b1, w2, b2, xm, xs, ym, ys, loss=loss, iterations=its)


def fit_nonlinear(p: PosteriorDraws, eta_obs=None, hidden: int = 5, epochs: int = 500,
                  step: float = 0.01, decay: float = 1e-4, seed: int = 0,
                  optimizer: str = "lbfgs") -> NonlinearFit:
    """Kernel-weighted network regression of theta on eta(z).

    ``eta_obs`` is unused by the fit itself; it is accepted for symmetry with
    :func:`fit_local_linear`.
    """
    if p.summaries is None:
        raise ValueError("posterior carries no simulated summaries")
    k_eta = p.summaries.shape[1]
    if p.size < 10 * k_eta:
        raise ValueError(f"need at least {10 * k_eta} accepted draws for the network fit")
    return train_network(p.summaries, p.draws, kernel_weights(p), hidden, epochs, step,
                         decay, seed, optimizer)


def adjust_nonlinear(p: PosteriorDraws, nfit: NonlinearFit, center) -> PosteriorDraws:
    shift = nfit.predict(np.asarray(center, dtype=float)) - nfit.predict(p.summaries)
    return p.with_draws(p.draws + shift, "NN")


# --- heteroskedasticity correction ---------------------------------------------

def fit_log_scale(p: PosteriorDraws, fit, **nn_config):
    """Second-stage regression of log squared residuals on the first-stage design.

    Returns a callable eta -> fitted conditional sd (one column per parameter).
    """
    resid = p.draws - fit.predict(p.summaries)
    target = np.log(resid ** 2 + LOG_FLOOR)
    if isinstance(fit, RegressionFit):
        X = np.column_stack([np.ones(p.size), p.summaries - fit.center])
        coef = solve_wls(X, target, fit.weights)
        lin = RegressionFit(coef[0], coef[1:].T, fit.weights, fit.center)
        return lambda eta: np.exp(0.5 * lin.predict(eta))
    net = train_network(p.summaries, target, kernel_weights(p), **nn_config)
    return lambda eta: np.exp(0.5 * net.predict(eta))


def hetero_correct(p: PosteriorDraws, fit, center, tag: str | None = None, scale=None,
                   **nn_config) -> PosteriorDraws:
    """m(center) + (theta_i - m(eta_i)) * s(center) / s(eta_i).

    ``p`` holds the unadjusted accepted draws, ``fit`` the first-stage regression.
    Pass ``center=eta_obs`` for the corrected Reg/NN adjustments and the RegN
    centering summary for RegNC. ``scale`` may supply a fitted sd function.
    """
    if tag is None:
        tag = "RegC" if isinstance(fit, RegressionFit) else "NNC"
    center = np.asarray(center, dtype=float)
    if scale is None:
        scale = fit_log_scale(p, fit, **nn_config)
    s_i = scale(p.summaries)
    s_c = scale(center)
    if np.any(~(s_i >= 1e-12)) or np.any(~(s_c >= 1e-12)):
        raise DegenerateScaleError("fitted residual scale collapsed below 1e-12")
    m_i = fit.predict(p.summaries)
    m_c = fit.predict(center)
    draws = m_c + (p.draws - m_i) * (s_c / s_i)
    return p.with_draws(draws, tag)


def write_adjusted_csv(path, p: PosteriorDraws) -> None:
    """Adjusted draws with their weights: ``idx,theta_adj_1..k,weight,method``."""
    idx = p.indices if p.indices is not None else np.arange(p.size)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["idx"] + [f"theta_adj_{j + 1}" for j in range(p.k_theta)] + ["weight", "method"])
        for i, row, w in zip(idx, p.draws, p.weights):
            wr.writerow([int(i)] + [f"{v:.17g}" for v in row] + [f"{w:.17g}", p.method])

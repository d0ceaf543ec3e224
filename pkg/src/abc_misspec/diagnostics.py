"""Misspecification detectors: acceptance curves and the AR-vs-Reg discrepancy."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .errors import DegenerateCurveError, EmptyPosteriorError
from .models import Scenario, simulate
from .parallel import pmap
from .pipeline import OBS, TABLE, analyze
from .posterior import PosteriorDraws
from .rng import RngStream, derive_seed
from .table import ReferenceTable, compute_distances, generate_table, quantile_tolerance


@dataclass
class AcceptCurve:
    eps: np.ndarray
    alpha_hat: np.ndarray
    alpha_ref: np.ndarray
    k_theta: int
    score: float

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["eps", "alpha_hat", "alpha_ref"])
            for row in zip(self.eps, self.alpha_hat, self.alpha_ref):
                wr.writerow([f"{v:.17g}" for v in row])


def accept_curve(d, J: int = 100, q_lo: float = 0.001, q_hi: float = 0.10, k_theta: int = 1,
                 grid: str = "even") -> AcceptCurve:
    """Empirical acceptance fraction over a tolerance grid, against a line in eps^k_theta.

    ``grid='even'`` spaces J tolerances evenly between the q_lo and q_hi distance
    quantiles; ``grid='quantile'`` uses the distance quantiles at J evenly spaced
    levels instead. The score is the mean absolute gap to the endpoint-anchored
    reference line, divided by q_hi.
    """
    if not 0.0 < q_lo < q_hi <= 1.0:
        raise ValueError("need 0 < q_lo < q_hi <= 1")
    if J < 2:
        raise ValueError("J must be >= 2")
    d = np.sort(np.asarray(d, dtype=float))
    e_lo = quantile_tolerance(d, q_lo).epsilon
    e_hi = quantile_tolerance(d, q_hi).epsilon
    if not e_hi > e_lo:
        raise DegenerateCurveError("distances are degenerate over the requested quantile range")
    if grid == "even":
        eps = np.linspace(e_lo, e_hi, J)
    elif grid == "quantile":
        eps = np.unique([quantile_tolerance(d, q).epsilon for q in np.linspace(q_lo, q_hi, J)])
        if eps.size < 2:
            raise DegenerateCurveError("quantile grid collapsed")
    else:
        raise ValueError(f"unknown grid {grid!r}")
    alpha = np.searchsorted(d, eps, side="right") / d.size
    ek = eps ** k_theta
    ref = alpha[0] + (alpha[-1] - alpha[0]) * (ek - ek[0]) / (ek[-1] - ek[0])
    score = float(np.mean(np.abs(alpha - ref)) / q_hi)
    return AcceptCurve(eps, alpha, ref, k_theta, score)


def accept_curve_benchmark(table: ReferenceTable, rows, J: int = 100, q_lo: float = 0.001,
                           q_hi: float = 0.10, k_theta: int = 1, grid: str = "even") -> list[AcceptCurve]:
    """Curves for table rows used as pseudo-observed data against the remaining rows."""
    curves = []
    for i in np.atleast_1d(rows):
        rest = table.drop([i])
        d = compute_distances(rest, table.etas[i])
        curves.append(accept_curve(d, J, q_lo, q_hi, k_theta, grid))
    return curves


# --- test functions h ---------------------------------------------------------------

def h_values(draws: np.ndarray, h="square-cube") -> np.ndarray:
    """Evaluate h on every draw; returns (M, dim h).

    ``h`` is 'identity', 'square-cube' or a list of integer powers applied to
    each parameter component.
    """
    x = np.atleast_2d(draws)
    if h == "identity":
        powers = [1]
    elif h == "square-cube":
        powers = [2, 3]
    elif isinstance(h, str):
        powers = [int(p) for p in h.split(",")]
    else:
        powers = [int(p) for p in h]
    return np.column_stack([x[:, j] ** p for j in range(x.shape[1]) for p in powers])


def h_label(h) -> str:
    return h if isinstance(h, str) else ",".join(str(int(p)) for p in h)


def reg_discrepancy_statistic(p_ar: PosteriorDraws, p_reg: PosteriorDraws, h="square-cube",
                              n: int = 100, weighted: bool | None = None) -> float:
    """sqrt(n) times the distance between the AR and Reg posterior means of h."""
    if p_ar.k_theta != p_reg.k_theta:
        raise ValueError("posteriors differ in dimension")
    wa = p_ar.summary_weights(weighted)
    wr = p_reg.summary_weights(weighted)
    ha = wa @ h_values(p_ar.draws, h) / wa.sum()
    hr = wr @ h_values(p_reg.draws, h) / wr.sum()
    return float(math.sqrt(n) * np.linalg.norm(ha - hr))


def order_statistic_quantile(x, level: float) -> float:
    """ceil(level * B)-th smallest value."""
    x = np.sort(np.asarray(x, dtype=float))
    k = max(1, math.ceil(round(level * x.size, 9)))
    return float(x[k - 1])


def detect(T: float, t_n: float) -> bool:
    """True (flagged) iff T exceeds the cutoff strictly."""
    if T < 0 or t_n < 0:
        raise ValueError("statistic and cutoff must be nonnegative")
    return T > t_n


@dataclass
class DiscrepancyReport:
    T: float
    t_n: float
    h: str
    B: int
    theta_cal: np.ndarray
    calibration: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def flagged(self) -> bool:
        return detect(self.T, self.t_n)

    @property
    def decision(self) -> str:
        return "flagged" if self.flagged else "clear"

    def write_csv(self, path: str | Path) -> None:
        th = np.atleast_1d(self.theta_cal)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["T", "t_n", "flagged", "h", "B"] + [f"theta_cal_{j + 1}" for j in range(th.size)])
            wr.writerow([f"{self.T:.17g}", f"{self.t_n:.17g}", int(self.flagged), self.h, self.B]
                        + [f"{v:.17g}" for v in th])


def discrepancy_replicate(scenario: Scenario, seed: int, theta=None, which: str = "assumed",
                          N: int = 25_000, q: float = 0.01, hs=("square-cube",),
                          weighted: bool | None = None) -> dict:
    """Simulate one observed dataset, run AR + Reg on a fresh table, return T for each h."""
    obs_rng = RngStream(derive_seed(seed, OBS))
    theta_obs = np.atleast_1d(scenario.theta0 if theta is None else theta).astype(float)
    y = simulate(scenario, theta_obs, which, obs_rng)
    eta = scenario.summarize(y)
    table = generate_table(scenario, N, derive_seed(seed, TABLE))
    res = analyze(scenario, table, eta, q, ("AR", "Reg"), seed)
    p_ar, p_reg = res.posteriors["AR"], res.posteriors["Reg"]
    return {h_label(h): reg_discrepancy_statistic(p_ar, p_reg, h, scenario.n, weighted) for h in hs}


def _cal_task(b, scenario, theta_cal, seed, N, q, hs, weighted):
    try:
        return discrepancy_replicate(scenario, derive_seed(seed, b), theta_cal, "assumed", N, q, hs, weighted)
    except EmptyPosteriorError as exc:
        raise EmptyPosteriorError(str(exc), replication=b) from exc


def calibration_sample(scenario: Scenario, theta_cal, B: int = 100, N: int = 25_000, q: float = 0.01,
                       hs=("square-cube",), seed: int = 0, threads: int = 1,
                       weighted: bool | None = None) -> dict[str, np.ndarray]:
    """Statistics {T_b} from B correctly specified datasets simulated at theta_cal."""
    if B < 2:
        raise ValueError("B must be >= 2")
    fn = partial(_cal_task, scenario=scenario, theta_cal=theta_cal, seed=seed, N=N, q=q, hs=hs,
                 weighted=weighted)
    rows = pmap(fn, range(B), threads)
    return {h_label(h): np.array([r[h_label(h)] for r in rows]) for h in hs}


def calibrate_cutoff(scenario: Scenario, theta_cal, B: int = 100, n: int | None = None,
                     N: int = 25_000, q: float = 0.01, h="square-cube", level: float = 0.95,
                     seed: int = 0, threads: int = 1) -> tuple[float, np.ndarray]:
    """Cutoff t_n as the ``level`` order-statistic quantile of the calibration sample."""
    if n is not None:
        scenario = scenario.replace(n=n)
    sample = calibration_sample(scenario, theta_cal, B, N, q, (h,), seed, threads)[h_label(h)]
    return order_statistic_quantile(sample, level), sample

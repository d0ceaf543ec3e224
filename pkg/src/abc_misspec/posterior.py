"""Summaries of (weighted, possibly adjusted) posterior draws."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateShapeError

log = logging.getLogger(__name__)

METHODS = ("AR", "Reg", "RegN", "NN", "RegC", "RegNC", "NNC")


@dataclass
class PosteriorDraws:
    """Accepted (or adjusted) parameter draws.

    ``weights`` are the Epanechnikov kernel weights attached at acceptance.
    Summaries of AR draws ignore them by default and every adjusted method uses
    them; ``weighted`` overrides that convention.
    """

    draws: np.ndarray
    weights: np.ndarray
    epsilon: float
    alpha_hat: float
    method: str = "AR"
    indices: np.ndarray | None = None
    summaries: np.ndarray | None = None
    distances: np.ndarray | None = None
    weighted: bool | None = None

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim == 1:
            self.draws = self.draws[:, None]
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.draws.shape[0] < 1:
            raise ValueError("posterior needs at least one draw")
        if self.weights.size != self.draws.shape[0]:
            raise ValueError("weights and draws differ in length")
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights < 0) or self.weights.sum() <= 0:
            raise ValueError("weights must be finite, nonnegative and not all zero")

    @property
    def size(self) -> int:
        return self.draws.shape[0]

    @property
    def k_theta(self) -> int:
        return self.draws.shape[1]

    def summary_weights(self, weighted: bool | None = None) -> np.ndarray:
        use = weighted if weighted is not None else self.weighted
        if use is None:
            use = self.method != "AR"
        return self.weights if use else np.ones_like(self.weights)

    def with_draws(self, draws: np.ndarray, method: str) -> "PosteriorDraws":
        return replace(self, draws=np.asarray(draws, dtype=float).reshape(self.draws.shape), method=method)


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    level: float
    kind: str = "equal-tailed"

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def _column(p: PosteriorDraws, component: int, weighted):
    if not 0 <= component < p.k_theta:
        raise IndexError(f"component {component} out of range for k_theta={p.k_theta}")
    return p.draws[:, component], p.summary_weights(weighted)


def posterior_moment(p: PosteriorDraws, component: int = 0, power: int = 1, weighted=None) -> float:
    x, w = _column(p, component, weighted)
    return float(np.sum(w * x ** power) / np.sum(w))


def posterior_mean(p: PosteriorDraws, weighted=None) -> np.ndarray:
    w = p.summary_weights(weighted)
    return (w @ p.draws) / w.sum()


def posterior_std(p: PosteriorDraws, component: int = 0, weighted=None) -> float:
    """Standard deviation of the weighted empirical measure (divide by the weight sum)."""
    x, w = _column(p, component, weighted)
    if x.size == 1:
        log.debug("single draw: posterior std is degenerate (0)")
        return 0.0
    m = np.sum(w * x) / np.sum(w)
    return float(np.sqrt(np.sum(w * (x - m) ** 2) / np.sum(w)))


def weighted_quantile(x, w, q):
    """Quantiles of a weighted sample by piecewise-linear interpolation.

    Sorted draws with positive weight sit at cumulative positions
    ``(C_k - C_1) / (C_M - C_1)``; with equal weights this is the usual
    ``1 + (M - 1) q`` order-statistic interpolation.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    keep = w > 0
    x, w = x[keep], w[keep]
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    if x.size == 1:
        return np.full(np.shape(q), x[0]) if np.ndim(q) else float(x[0])
    c = np.cumsum(w)
    pos = (c - c[0]) / (c[-1] - c[0])
    out = np.interp(q, pos, x)
    return float(out) if np.ndim(out) == 0 else out


def hpd_interval(x, w, level: float) -> tuple[float, float]:
    """Shortest window of sorted draws holding at least ``level`` of the weight; leftmost on ties."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order] / w.sum()
    c = np.concatenate([[0.0], np.cumsum(w)])
    target = level - 1e-12
    # for each left end i, smallest j with c[j + 1] - c[i] >= level
    j = np.searchsorted(c, c[:-1] + target, side="left") - 1
    ok = j < x.size
    i = np.nonzero(ok)[0]
    j = np.maximum(j[ok], i)
    lengths = x[j] - x[i]
    # windows equal up to rounding count as ties; take the leftmost
    tol = 1e-12 * max(1.0, float(np.max(np.abs(x))))
    best = int(np.flatnonzero(lengths <= lengths.min() + tol)[0])
    return float(x[i[best]]), float(x[j[best]])


def credible_interval(p: PosteriorDraws, component: int = 0, level: float = 0.95,
                      kind: str = "equal-tailed", weighted=None) -> IntervalEstimate:
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    x, w = _column(p, component, weighted)
    if kind == "equal-tailed":
        lo, hi = weighted_quantile(x, w, [(1 - level) / 2, 1 - (1 - level) / 2])
    elif kind == "hpd":
        lo, hi = hpd_interval(x, w, level)
    else:
        raise ValueError(f"unknown interval kind {kind!r}")
    return IntervalEstimate(float(lo), float(hi), level, kind)


def shape_stats(p: PosteriorDraws, component: int = 0, weighted=None) -> tuple[float, float]:
    """Weighted skewness and excess kurtosis (moment estimators)."""
    x, w = _column(p, component, weighted)
    if x.size < 4:
        raise ValueError("shape statistics need at least 4 draws")
    w = w / w.sum()
    m = np.sum(w * x)
    d = x - m
    v = np.sum(w * d * d)
    if v <= 1e-300 * max(1.0, m * m):
        raise DegenerateShapeError("zero variance: shape undefined")
    skew = np.sum(w * d ** 3) / v ** 1.5
    kurt = np.sum(w * d ** 4) / v ** 2 - 3.0
    return float(skew), float(kurt)


def coverage_tally(intervals, target: float) -> float:
    intervals = list(intervals)
    if not intervals:
        raise ValueError("no intervals")
    return sum(iv.contains(target) for iv in intervals) / len(intervals)


SUMMARY_HEADER = ["method", "param", "mean", "std", "q025", "q975", "hpd_lo", "hpd_hi",
                  "skew", "exkurt", "alpha_hat", "epsilon"]


def summary_rows(p: PosteriorDraws, param_names=None) -> list[dict]:
    names = param_names or [f"theta_{j + 1}" for j in range(p.k_theta)]
    rows = []
    for j, name in enumerate(names):
        x, w = _column(p, j, None)
        et = credible_interval(p, j, 0.95)
        hpd = credible_interval(p, j, 0.95, "hpd")
        try:
            sk, ku = shape_stats(p, j)
        except (ValueError, ArithmeticError):
            sk = ku = float("nan")
        rows.append({
            "method": p.method, "param": name,
            "mean": posterior_moment(p, j), "std": posterior_std(p, j),
            "q025": et.lower, "q975": et.upper, "hpd_lo": hpd.lower, "hpd_hi": hpd.upper,
            "skew": sk, "exkurt": ku, "alpha_hat": p.alpha_hat, "epsilon": p.epsilon,
        })
    return rows


def write_summary_csv(path: str | Path, posteriors, param_names=None) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, SUMMARY_HEADER)
        wr.writeheader()
        for p in posteriors:
            for row in summary_rows(p, param_names):
                wr.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})

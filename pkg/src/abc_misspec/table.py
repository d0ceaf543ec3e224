"""Reference table generation and quantile-thresholded accept/reject."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyPosteriorError, ShapeError
from .models import Scenario, table_rows
from .posterior import PosteriorDraws


@dataclass
class ReferenceTable:
    thetas: np.ndarray
    etas: np.ndarray
    scenario_id: str
    n: int
    seed: int

    @property
    def N(self) -> int:
        return self.thetas.shape[0]

    @property
    def k_theta(self) -> int:
        return self.thetas.shape[1]

    @property
    def k_eta(self) -> int:
        return self.etas.shape[1]

    def drop(self, rows) -> "ReferenceTable":
        keep = np.ones(self.N, dtype=bool)
        keep[np.asarray(rows, dtype=int)] = False
        return ReferenceTable(self.thetas[keep], self.etas[keep], self.scenario_id, self.n, self.seed)


@dataclass(frozen=True)
class Tolerance:
    epsilon: float
    level: float | None = None


def generate_table(scenario: Scenario, N: int, master_seed: int, threads: int = 1,
                   chunk: int = 2048) -> ReferenceTable:
    """N prior draws with their simulated summaries; row i uses stream id i."""
    if N < 1:
        raise ValueError("N must be >= 1")
    ids = np.arange(N, dtype=np.int64)
    if threads <= 1:
        th, et = table_rows(scenario, master_seed, ids, chunk)
    else:
        parts = [ids[lo:lo + chunk] for lo in range(0, N, chunk)]
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(lambda p: table_rows(scenario, master_seed, p, chunk), parts))
        th = np.concatenate([r[0] for r in res])
        et = np.concatenate([r[1] for r in res])
    return ReferenceTable(th, et, scenario.kind, scenario.n, int(master_seed))


def compute_distances(table: ReferenceTable, eta_obs) -> np.ndarray:
    """Euclidean distance of every simulated summary to the observed one."""
    eta_obs = np.asarray(eta_obs, dtype=float).ravel()
    if eta_obs.size != table.k_eta:
        raise ShapeError(f"observed summary has length {eta_obs.size}, table has {table.k_eta}")
    return np.sqrt(np.sum((table.etas - eta_obs) ** 2, axis=1))


def _order_count(q: float, N: int) -> int:
    return max(1, math.ceil(round(q * N, 9)))


def quantile_tolerance(d, q: float) -> Tolerance:
    """The ceil(qN)-th smallest distance."""
    d = np.asarray(d, dtype=float)
    if d.size == 0:
        raise ValueError("no distances")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    k = _order_count(q, d.size)
    return Tolerance(float(np.partition(d, k - 1)[k - 1]), q)


def accept(table: ReferenceTable, d, tol: Tolerance | float) -> PosteriorDraws:
    """Keep rows with d <= epsilon and attach weights 1 - (d / epsilon)^2."""
    d = np.asarray(d, dtype=float)
    eps = tol.epsilon if isinstance(tol, Tolerance) else float(tol)
    if d.size != table.N:
        raise ShapeError("distance vector and table differ in length")
    idx = np.nonzero(d <= eps)[0]
    if idx.size == 0:
        raise EmptyPosteriorError(f"no rows within epsilon={eps:g}; tolerance too small")
    dd = d[idx]
    if eps > 0:
        w = 1.0 - (dd / eps) ** 2
        if not np.any(w > 0):
            w = np.ones_like(dd)
    else:
        w = np.ones_like(dd)
    return PosteriorDraws(table.thetas[idx], w, eps, idx.size / table.N, "AR",
                          indices=idx, summaries=table.etas[idx], distances=dd)


def abc_reject(table: ReferenceTable, eta_obs, q: float) -> PosteriorDraws:
    d = compute_distances(table, eta_obs)
    return accept(table, d, quantile_tolerance(d, q))


def write_table_csv(path: str | Path, table: ReferenceTable, dist=None) -> None:
    head = ["idx"] + [f"theta_{j + 1}" for j in range(table.k_theta)] \
        + [f"eta_{j + 1}" for j in range(table.k_eta)]
    if dist is not None:
        head.append("dist")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(head)
        for i in range(table.N):
            vals = list(table.thetas[i]) + list(table.etas[i])
            if dist is not None:
                vals.append(dist[i])
            wr.writerow([i] + [f"{v:.17g}" for v in vals])


def read_table_csv(path: str | Path, scenario_id: str = "", n: int = 0, seed: int = 0):
    """Returns (table, dist or None)."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        head = next(rd)
        data = np.array([[float(v) for v in row] for row in rd])
    kt = sum(h.startswith("theta_") for h in head)
    ke = sum(h.startswith("eta_") for h in head)
    table = ReferenceTable(data[:, 1:1 + kt], data[:, 1 + kt:1 + kt + ke], scenario_id, n, seed)
    dist = data[:, head.index("dist")] if "dist" in head else None
    return table, dist

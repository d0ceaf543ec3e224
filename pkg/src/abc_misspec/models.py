"""Scenario registry: assumed models, true DGPs, summary maps and priors."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, DegenerateScenarioError, DomainError, InsufficientDataError
from .rng import RngStream, block_uniforms, blocks_for

KINDS = ("normal", "gk-mixture", "prop1")
OCTILE_LEVELS = np.arange(1, 8) / 8.0


@dataclass(frozen=True)
class Scenario:
    """One experimental setting.

    ``normal``: assumed N(theta, 1), true N(theta0, sigma2), mean/variance summaries,
    prior N(0, 25). ``gk-mixture``: assumed g-and-k, true two-component normal mixture
    (``s1sq``/``s2sq`` are variances), octile summaries, prior U[0, 10]^4. ``prop1``:
    synthetic summaries with binding map (theta, theta), observed limit (b0bar, -b0bar)
    and prior U[-b0bar, b0bar].
    """

    kind: str = "normal"
    n: int = 100
    theta0: float = 1.0
    sigma2: float = 1.0
    w: float = 0.9
    mu1: float = 1.0
    s1sq: float = 2.0
    mu2: float = 7.0
    s2sq: float = 2.0
    b0bar: float = 2.0
    prior_sd: float = 5.0
    prior_hi: float = 10.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.sigma2 <= 0 or self.s1sq <= 0 or self.s2sq <= 0:
            raise ConfigError("variances must be positive")
        if not 0.0 <= self.w <= 1.0:
            raise ConfigError("mixture weight must lie in [0, 1]")
        if self.kind == "gk-mixture" and self.n < 8:
            raise ConfigError("octile summaries need n >= 8")
        if self.kind == "prop1" and self.b0bar == 0:
            raise DegenerateScenarioError("b0bar must be nonzero")

    @property
    def k_theta(self) -> int:
        return 4 if self.kind == "gk-mixture" else 1

    @property
    def k_eta(self) -> int:
        return 7 if self.kind == "gk-mixture" else 2

    @property
    def summary_id(self) -> str:
        return {"normal": "mean-var", "gk-mixture": "octiles", "prop1": "direct"}[self.kind]

    @property
    def box(self) -> np.ndarray:
        """Parameter box (k_theta x 2); the normal prior is unbounded."""
        if self.kind == "gk-mixture":
            return np.array([[0.0, self.prior_hi]] * 4)
        if self.kind == "prop1":
            return np.array([[-abs(self.b0bar), abs(self.b0bar)]])
        return np.array([[-np.inf, np.inf]])

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def summarize(self, data: np.ndarray) -> np.ndarray:
        if self.kind == "normal":
            return summary_mean_var(data)
        if self.kind == "gk-mixture":
            return summary_octiles(data)
        return np.asarray(data, dtype=float)

    # uniforms consumed per draw, fixed so table rows can be generated in bulk
    def prior_uniforms(self) -> int:
        return 4 if self.kind == "gk-mixture" else 1

    def data_uniforms(self, which: str) -> int:
        if self.kind == "prop1":
            return 2
        if self.kind == "gk-mixture" and which == "true":
            return 2 * self.n
        return self.n


def to_dict(s: Scenario) -> dict:
    return dataclasses.asdict(s)


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario from a ``key = value`` text file (``#`` comments allowed).

    Keys are the :class:`Scenario` field names; unknown keys are rejected.
    """
    text = Path(path).read_text()
    return scenario_from_mapping(parse_kv(text))


def parse_kv(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[root]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return {k: _parse_value(v) for k, v in cp["root"].items()}


def _parse_value(v: str):
    v = v.strip()
    try:
        return json.loads(v)
    except json.JSONDecodeError:
        return v.strip("\"'")


def scenario_from_mapping(values: dict) -> Scenario:
    fields = {f.name: f.type for f in dataclasses.fields(Scenario)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    kw = {}
    for k, v in values.items():
        if k == "kind":
            kw[k] = str(v)
        elif k == "n":
            kw[k] = int(v)
        else:
            kw[k] = float(v)
    return Scenario(**kw)


def write_dataset_csv(path: str | Path, y) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["y"])
        for v in np.asarray(y, dtype=float).ravel():
            wr.writerow([repr(float(v))])


def read_dataset_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["y"]) for r in rows])


# --- g-and-k -----------------------------------------------------------------

def gk_from_normal(z, theta) -> np.ndarray:
    """g-and-k transform of standard-normal quantiles ``z``.

    ``theta`` is (a, b, g, k) or an array whose last axis holds them; broadcasts
    against ``z``. (1 - exp(-gz)) / (1 + exp(-gz)) is evaluated as tanh(gz / 2).
    """
    th = np.asarray(theta, dtype=float)
    a, b, g, k = (th[..., j] for j in range(4))
    if th.ndim > 1:
        a, b, g, k = (x[..., None] for x in (a, b, g, k))
    z = np.asarray(z, dtype=float)
    return a + b * (1.0 + 0.8 * np.tanh(0.5 * g * z)) * (1.0 + z * z) ** k * z


def gk_quantile(q, theta) -> np.ndarray | float:
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0.0)) or np.any(~(q < 1.0)):
        raise DomainError("g-and-k quantile level must lie strictly inside (0, 1)")
    if np.any(np.asarray(theta, dtype=float)[..., 1] < 0):
        raise DomainError("g-and-k scale b must be nonnegative")
    out = gk_from_normal(ndtri(q), theta)
    return float(out) if np.ndim(out) == 0 else out


# --- summaries ---------------------------------------------------------------

def summary_mean_var(data) -> np.ndarray:
    """Sample mean and unbiased (n - 1) variance along the last axis."""
    x = np.asarray(data, dtype=float)
    if x.shape[-1] < 2:
        raise InsufficientDataError("mean/variance summary needs at least 2 observations")
    m = x.mean(axis=-1)
    v = x.var(axis=-1, ddof=1)
    return np.stack([m, v], axis=-1)


def summary_octiles(data) -> np.ndarray:
    """Empirical octiles (levels 1/8..7/8), order-statistic position 1 + (n - 1)p."""
    x = np.asarray(data, dtype=float)
    if x.shape[-1] < 8:
        raise InsufficientDataError("octile summary needs at least 8 observations")
    q = np.quantile(x, OCTILE_LEVELS, axis=-1, method="linear")
    return np.moveaxis(q, 0, -1)


# --- priors and simulators (vectorized core) ----------------------------------

def prior_from_uniforms(scenario: Scenario, u: np.ndarray) -> np.ndarray:
    u = np.atleast_2d(u)
    if scenario.kind == "normal":
        return scenario.prior_sd * ndtri(u[:, :1])
    if scenario.kind == "gk-mixture":
        return scenario.prior_hi * u[:, :4]
    b = abs(scenario.b0bar)
    return -b + 2.0 * b * u[:, :1]


def prop1_scale(theta, b0bar: float) -> np.ndarray:
    """Gaussian-bump scale profile; equals 3 at b0bar / 2 and tends to 1 away from it."""
    if b0bar == 0:
        raise DegenerateScenarioError("b0bar must be nonzero")
    t = np.asarray(theta, dtype=float)
    return 1.0 + 2.0 * np.exp(-(((t - b0bar / 2.0) / (0.2 * b0bar)) ** 2))


def data_from_uniforms(scenario: Scenario, theta: np.ndarray, which: str, u: np.ndarray) -> np.ndarray:
    """Map per-row uniforms to simulated datasets (or, for prop1, summaries)."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    u = np.atleast_2d(u)
    n = scenario.n
    kind = scenario.kind
    if which not in ("assumed", "true"):
        raise ValueError(f"which must be 'assumed' or 'true', got {which!r}")
    if kind == "normal":
        sd = 1.0 if which == "assumed" else np.sqrt(scenario.sigma2)
        return theta[:, :1] + sd * ndtri(u[:, :n])
    if kind == "gk-mixture":
        if which == "assumed":
            return gk_from_normal(ndtri(u[:, :n]), theta)
        first = u[:, :n] < scenario.w
        z = ndtri(u[:, n:2 * n])
        return np.where(first,
                        scenario.mu1 + np.sqrt(scenario.s1sq) * z,
                        scenario.mu2 + np.sqrt(scenario.s2sq) * z)
    z = ndtri(u[:, :2])
    rn = np.sqrt(n)
    if which == "assumed":
        return theta[:, :1] + (prop1_scale(theta[:, :1], scenario.b0bar) / rn) * z
    return np.array([scenario.b0bar, -scenario.b0bar]) + z / rn


def prior_sample(scenario: Scenario, rng: RngStream) -> np.ndarray:
    return prior_from_uniforms(scenario, rng.uniform(scenario.prior_uniforms()))[0]


def simulate(scenario: Scenario, theta, which: str, rng: RngStream) -> np.ndarray:
    """One simulated dataset of length n (prop1: the 2-vector summary itself)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size != scenario.k_theta:
        raise ValueError(f"theta has length {theta.size}, scenario expects {scenario.k_theta}")
    if scenario.kind == "gk-mixture" and which == "assumed" and theta[1] < 0:
        raise DomainError("g-and-k scale b must be nonnegative")
    u = rng.uniform(scenario.data_uniforms(which))
    return data_from_uniforms(scenario, theta[None, :], which, u[None, :])[0]


def prop1_summary(theta: float, n: int, b0bar: float, rng: RngStream) -> np.ndarray:
    if b0bar == 0:
        raise DegenerateScenarioError("b0bar must be nonzero")
    if n < 1:
        raise ValueError("n must be >= 1")
    z = ndtri(rng.uniform(2))
    return np.array([theta, theta]) + prop1_scale(theta, b0bar) / np.sqrt(n) * z


def simulate_summaries(scenario: Scenario, thetas: np.ndarray, which: str, seed: int,
                       stream_ids, start: int = 0, chunk: int = 2048) -> np.ndarray:
    """Summaries of one dataset per stream; row r matches the single-stream path.

    ``thetas`` has one row per stream (or a single row broadcast to all streams).
    """
    stream_ids = np.atleast_1d(np.asarray(stream_ids))
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[0] == 1 and stream_ids.size > 1:
        thetas = np.broadcast_to(thetas, (stream_ids.size, thetas.shape[1]))
    m = scenario.data_uniforms(which)
    out = np.empty((stream_ids.size, scenario.k_eta))
    for lo in range(0, stream_ids.size, chunk):
        hi = min(lo + chunk, stream_ids.size)
        u = block_uniforms(seed, stream_ids[lo:hi], start, m)
        out[lo:hi] = scenario.summarize(data_from_uniforms(scenario, thetas[lo:hi], which, u))
    return out


def table_rows(scenario: Scenario, seed: int, stream_ids, chunk: int = 2048):
    """Prior draws and assumed-model summaries, stream id i for row i.

    Equivalent, row for row, to ``rng = RngStream(seed, i)``; ``theta =
    prior_sample(scenario, rng)``; ``eta = scenario.summarize(simulate(scenario,
    theta, 'assumed', rng))``.
    """
    stream_ids = np.atleast_1d(np.asarray(stream_ids))
    kp = scenario.prior_uniforms()
    m = scenario.data_uniforms("assumed")
    thetas = np.empty((stream_ids.size, scenario.k_theta))
    etas = np.empty((stream_ids.size, scenario.k_eta))
    for lo in range(0, stream_ids.size, chunk):
        hi = min(lo + chunk, stream_ids.size)
        ids = stream_ids[lo:hi]
        th = prior_from_uniforms(scenario, block_uniforms(seed, ids, 0, kp))
        u = block_uniforms(seed, ids, blocks_for(kp), m)
        thetas[lo:hi] = th
        etas[lo:hi] = scenario.summarize(data_from_uniforms(scenario, th, "assumed", u))
    return thetas, etas

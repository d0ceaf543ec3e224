"""One full analysis of an observed summary: accept/reject plus adjustments."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjust import (adjust_linear, adjust_nonlinear, adjust_regn, fit_local_linear,
                     fit_nonlinear, hetero_correct, regn_center)
from .models import Scenario
from .posterior import METHODS, PosteriorDraws, posterior_mean
from .rng import derive_seed
from .table import ReferenceTable, abc_reject

# labels mixed into a replication seed to get independent streams per purpose
OBS, TABLE, REGN, NN = 1, 2, 3, 4


@dataclass
class NNConfig:
    hidden: int = 5
    epochs: int = 500
    step: float = 0.01
    decay: float = 1e-4
    optimizer: str = "lbfgs"


@dataclass
class Analysis:
    posteriors: dict[str, PosteriorDraws]
    eta_obs: np.ndarray
    eta_hat: np.ndarray | None = None
    slopes: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def analyze(scenario: Scenario, table: ReferenceTable, eta_obs, q: float, methods=("AR", "Reg"),
            seed: int = 0, M_sim: int = 100, nn: NNConfig | None = None) -> Analysis:
    """Run accept/reject at quantile level q and every requested adjustment."""
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    nn = nn or NNConfig()
    eta_obs = np.asarray(eta_obs, dtype=float)
    ar = abc_reject(table, eta_obs, q)
    out = {"AR": ar}
    res = Analysis(out, eta_obs)
    need_lin = {"Reg", "RegN", "RegC", "RegNC"} & set(methods)
    need_n = {"RegN", "RegNC"} & set(methods)
    need_nn = {"NN", "NNC"} & set(methods)
    if need_lin:
        fit = fit_local_linear(ar, eta_obs)
        res.slopes = fit.slopes
        if "Reg" in methods:
            out["Reg"] = adjust_linear(ar, fit)
        if "RegC" in methods:
            out["RegC"] = hetero_correct(ar, fit, eta_obs, "RegC")
        if need_n:
            theta_hat = posterior_mean(ar)
            res.eta_hat = regn_center(scenario, theta_hat, M_sim, derive_seed(seed, REGN))
            if "RegN" in methods:
                out["RegN"] = adjust_regn(ar, fit, res.eta_hat)
            if "RegNC" in methods:
                out["RegNC"] = hetero_correct(ar, fit, res.eta_hat, "RegNC")
    if need_nn:
        cfg = dict(hidden=nn.hidden, epochs=nn.epochs, step=nn.step, decay=nn.decay,
                   optimizer=nn.optimizer, seed=derive_seed(seed, NN))
        nfit = fit_nonlinear(ar, eta_obs, **cfg)
        if "NN" in methods:
            out["NN"] = adjust_nonlinear(ar, nfit, eta_obs)
        if "NNC" in methods:
            out["NNC"] = hetero_correct(ar, nfit, eta_obs, "NNC", **cfg)
    res.posteriors = {m: out[m] for m in METHODS if m in out and (m in methods or m == "AR")}
    return res

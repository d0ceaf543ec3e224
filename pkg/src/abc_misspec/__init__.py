"""Approximate Bayesian computation under model misspecification.

Accept/reject ABC with quantile tolerances, regression adjustments (linear,
centred, neural network, heteroskedasticity-corrected), pseudo-true value
solvers and two misspecification diagnostics.
"""
from .diagnostics import (AcceptCurve, DiscrepancyReport, accept_curve, accept_curve_benchmark,
                          calibrate_cutoff, detect, reg_discrepancy_statistic)
from .models import Scenario, gk_quantile, load_scenario, prior_sample, simulate
from .posterior import (IntervalEstimate, PosteriorDraws, credible_interval, posterior_mean, posterior_std,
                        shape_stats)
from .pseudotrue import limit_maps, reg_pseudo_true, solve_pseudo_true
from .table import ReferenceTable, abc_reject, accept, compute_distances, generate_table, quantile_tolerance

__version__ = "0.1.0"

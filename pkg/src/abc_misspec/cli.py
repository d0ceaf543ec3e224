"""Command-line entry point ``abc-misspec``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .diagnostics import (DiscrepancyReport, accept_curve, accept_curve_benchmark, calibration_sample,
                          h_label, order_statistic_quantile,
                          reg_discrepancy_statistic)
from .errors import AbcError, ConfigError
from .experiments import EXPERIMENTS, load_config, run_experiment
from .models import KINDS, Scenario, parse_kv, read_dataset_csv
from .pipeline import analyze
from .posterior import posterior_mean
from .pseudotrue import estimate_beta0, limit_maps, reg_pseudo_true, solve_pseudo_true
from .rng import derive_seed
from .table import compute_distances, generate_table, read_table_csv

log = logging.getLogger("abc_misspec")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_FAILED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # usage problems are configuration errors; exit code 2 is reserved for partial failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="abc-misspec", description="ABC under model misspecification: experiments and diagnostics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in EXPERIMENTS:
        e = sub.add_parser(name, help=f"run the {name} experiment")
        e.add_argument("--config", help="key = value config file")
        e.add_argument("--seed", type=int)
        e.add_argument("--threads", type=int, default=1)
        e.add_argument("--out", default=f"out/{name}")
        e.add_argument("--set", type=_kv, action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    pt = sub.add_parser("pseudo-true", help="solve for the pseudo-true parameter")
    pt.add_argument("--scenario", choices=KINDS, default="gk-mixture")
    pt.add_argument("--config", help="scenario config file (overrides --scenario)")
    pt.add_argument("--restarts", type=int, default=20)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--beta0-N", type=int, default=0,
                    help="if > 0, estimate the regression slope limit on a table of this size "
                         "and report the regression-adjusted pseudo-true value")
    pt.add_argument("--out", help="directory for pseudo_true.csv")

    for name, helptext in (("diag-accept", "acceptance-curve diagnostic"),
                           ("diag-reg", "AR versus Reg discrepancy diagnostic")):
        d = sub.add_parser(name, help=helptext)
        d.add_argument("--config", help="scenario/analysis config file")
        d.add_argument("--data", required=True, help="observed dataset CSV with column y")
        d.add_argument("--N", type=int)
        d.add_argument("--seed", type=int, default=0)
        d.add_argument("--out", default=f"out/{name}")
        if name == "diag-accept":
            d.add_argument("--table", help="reference table CSV (generated if omitted)")
            d.add_argument("--q-lo", type=float)
            d.add_argument("--q-hi", type=float)
            d.add_argument("--J", type=int)
            d.add_argument("--grid", choices=("even", "quantile"))
            d.add_argument("--benchmark", type=int, default=0, help="number of table rows to benchmark")
        else:
            d.add_argument("--q", type=float)
            d.add_argument("--h", default="square-cube",
                           help="identity, square-cube or a comma-separated list of powers")
            d.add_argument("--B", type=int)
            d.add_argument("--level", type=float)
            d.add_argument("--theta-cal", type=float, help="default: AR posterior mean on the data")
            d.add_argument("--threads", type=int, default=1)
    return p


def _experiment(args) -> int:
    overrides = dict(args.set)
    cfg_values = parse_kv(Path(args.config).read_text()) if args.config else {}
    cfg_values.update(parse_kv("\n".join(f"{k} = {v}" for k, v in overrides.items())) if overrides else {})
    if args.seed is not None:
        cfg_values["seed"] = args.seed
    cfg_values["threads"] = args.threads
    cfg_values["out"] = args.out
    cfg = load_config(None, args.command, **cfg_values)
    res = run_experiment(cfg)
    print(f"{cfg.experiment}: wrote {cfg.out} in {res.runtime:.1f}s")
    for row in res.summary:
        print("  " + "  ".join(f"{k}={_short(v)}" for k, v in row.items()))
    if res.failed:
        print(f"{res.failure_fraction:.1%} of replications failed; see replications.csv", file=sys.stderr)
        return EXIT_FAILED
    if res.partial_failure:
        print(f"{len(res.failures)} replication(s) failed; see replications.csv", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else v


def _pseudo_true(args) -> int:
    if args.config:
        values = parse_kv(Path(args.config).read_text())
        scen = load_config(None, "table1", **values).scenario
    else:
        scen = Scenario(kind=args.scenario)
    maps = limit_maps(scen)
    res = solve_pseudo_true(maps, restarts=args.restarts, seed=args.seed)
    names = ["a", "b", "g", "k"] if scen.kind == "gk-mixture" else ["theta"]
    print("theta* = " + ", ".join(f"{n}={v:.6f}" for n, v in zip(names, res.theta)))
    print(f"eps* = {res.eps_star:.6g}")
    for t in res.trace:
        print(f"  restart {t['restart']:2d}: objective {t['objective']:.3e}, {t['iterations']} its, "
              f"converged={t['converged']}, inside={t['inside']}")
    rows = [{"param": n, "theta_star": v} for n, v in zip(names, res.theta)]
    if args.beta0_N > 0:
        beta0 = estimate_beta0(scen, args.beta0_N, seed=args.seed, maps=maps)
        tilde = reg_pseudo_true(res.theta, beta0, maps)
        print("regression-adjusted pseudo-true = " + ", ".join(f"{n}={v:.6f}" for n, v in zip(names, tilde)))
        for r, v in zip(rows, tilde):
            r["theta_tilde"] = v
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "pseudo_true.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, list(rows[0]), lineterminator="\n")
            wr.writeheader()
            for r in rows:
                wr.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
        with open(out / "eps_star.txt", "w") as fh:
            fh.write(f"{res.eps_star:.17g}\n")
        with open(out / "trace.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["restart", "objective", "iterations", "converged", "inside"]
                        + [f"theta_{j + 1}" for j in range(len(res.theta))])
            for t in res.trace:
                wr.writerow([t["restart"], f"{t['objective']:.17g}", t["iterations"], t["converged"], t["inside"]]
                            + [f"{v:.17g}" for v in t["theta"]])
    return EXIT_OK


def _diag_setup(args, experiment):
    values = parse_kv(Path(args.config).read_text()) if args.config else {}
    cfg = load_config(None, experiment, **values)
    scen = cfg.scenario
    y = read_dataset_csv(args.data)
    if scen.kind != "prop1" and y.size != scen.n:
        scen = scen.replace(n=int(y.size))
    return cfg, scen, y


def _diag_accept(args) -> int:
    cfg, scen, y = _diag_setup(args, "diag-accept-sweep")
    J = args.J or cfg.J
    q_lo = args.q_lo if args.q_lo is not None else cfg.q_lo
    q_hi = args.q_hi if args.q_hi is not None else cfg.q_hi
    grid = args.grid or cfg.curve_grid
    if args.table:
        table, _ = read_table_csv(args.table, scen.kind, scen.n, args.seed)
    else:
        table = generate_table(scen, args.N or cfg.N, args.seed)
    curve = accept_curve(compute_distances(table, scen.summarize(y)), J, q_lo, q_hi, scen.k_theta, grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curve.write_csv(out / "accept_curve.csv")
    print(f"nonlinearity score = {curve.score:.6g}")
    if args.benchmark > 0:
        rows = np.linspace(0, table.N - 1, args.benchmark).astype(int)
        bench = accept_curve_benchmark(table, rows, J, q_lo, q_hi, scen.k_theta, grid)
        scores = np.array([c.score for c in bench])
        with open(out / "benchmark_scores.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["row", "score"])
            for r, s in zip(rows, scores):
                wr.writerow([int(r), f"{s:.17g}"])
        q1, q3 = np.quantile(scores, [0.25, 0.75])
        print(f"benchmark scores: median {np.median(scores):.6g}, IQR [{q1:.6g}, {q3:.6g}]")
    return EXIT_OK


def _diag_reg(args) -> int:
    cfg, scen, y = _diag_setup(args, "diag-reg-rates")
    N = args.N or cfg.N
    q = args.q if args.q is not None else cfg.q
    B = args.B or cfg.B
    level = args.level if args.level is not None else cfg.cal_level
    h = args.h
    table = generate_table(scen, N, args.seed)
    res = analyze(scen, table, scen.summarize(y), q, ("AR", "Reg"), args.seed)
    T = reg_discrepancy_statistic(res.posteriors["AR"], res.posteriors["Reg"], h, scen.n)
    theta_cal = np.atleast_1d(args.theta_cal if args.theta_cal is not None
                              else posterior_mean(res.posteriors["AR"]))
    sample = calibration_sample(scen, theta_cal, B, N, q, (h,), derive_seed(args.seed, 1), args.threads)[h_label(h)]
    rep = DiscrepancyReport(T, order_statistic_quantile(sample, level), h_label(h), B, theta_cal, sample)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep.write_csv(out / "discrepancy_report.csv")
    print(f"T = {rep.T:.6g}, t_n = {rep.t_n:.6g}: {rep.decision}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, usage errors exit EXIT_CONFIG
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in EXPERIMENTS:
            return _experiment(args)
        if args.command == "pseudo-true":
            return _pseudo_true(args)
        if args.command == "diag-accept":
            return _diag_accept(args)
        return _diag_reg(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AbcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``mixsvm <command> --config FILE --out DIR [--set k=v ...]``.

Exit status is 0 when every run completed without invariant violations,
1 when violations were recorded (listed in ``violations.json``) and 2 on
configuration or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from types import SimpleNamespace

from . import harness, mixing, report
from .config import ConfigError, Resolved, lln_functions, parse_config
from .loss import Family, growth_constants
from .process import LlnRow, MarkovChainSpec, Regression, bayes_risk, lln_summary, sample_path
from .schedule import validate_classification, validate_regression
from .solver import train

log = logging.getLogger("mixsvm")

COMMANDS = ("simulate", "mixing", "train", "schedule", "sweep", "stability", "lln")


def _simulate(r: Resolved, out: Path, args):
    s = r.data["simulate"]
    T = sample_path(r.process, int(s["seed"]), int(s["n"]))
    d = T.xs.shape[1]
    cols = ["i"] + [f"x{j}" for j in range(d)] + ["y"] + (["state"] if T.states is not None else [])
    rows = []
    for i in range(T.n):
        row = {"i": i + 1, "y": float(T.ys[i])}
        for j in range(d):
            row[f"x{j}"] = float(T.xs[i, j])
        if T.states is not None:
            st = T.states[i]
            row["state"] = int(st) if isinstance(r.process, MarkovChainSpec) else float(st)
        rows.append(row)
    report.emit_csv(rows, out / "path.csv", cols)
    return []


MIXING_COLUMNS = ("lag", "alpha", "beta", "phi_row", "phi_col", "phi_sym", "r2", "rio_bound_p2")


def _mixing(r: Resolved, out: Path, args):
    if not isinstance(r.process, MarkovChainSpec):
        raise ConfigError("mixing tables need process.kind = 'markov'")
    m = r.data["mixing"]
    lags = [int(k) for k in m["lags"]]
    if not lags or min(lags) < 1:
        raise ConfigError("mixing.lags must be positive integers")
    rows, bad = [], []
    for rep in mixing.lag_table(r.process, lags, int(m["start"])):
        try:
            rb = mixing.rio_bound(rep, 2)
        except AssertionError as e:
            bad.append(f"lag {rep.lag}: {e}")
            rb = float("nan")
        row = {"lag": rep.lag, "alpha": rep.alpha, "beta": rep.beta, "phi_row": rep.phi_row, "phi_col": rep.phi_col,
               "phi_sym": rep.phi_sym, "r2": rep.r2, "rio_bound_p2": rb}
        tol = 1e-10
        if not 2 * rep.alpha <= rep.beta + tol:
            bad.append(f"lag {rep.lag}: 2 alpha > beta")
        if not rep.beta <= max(rep.phi_row, rep.phi_col) + tol:
            bad.append(f"lag {rep.lag}: beta > phi")
        if not 4 * rep.alpha <= rep.r2 + tol:
            bad.append(f"lag {rep.lag}: 4 alpha > r2")
        if not rep.r2 <= 2 * rep.phi_sym + tol:
            bad.append(f"lag {rep.lag}: r2 > 2 phi_sym")
        rows.append(row)
    report.emit_csv(rows, out / "mixing.csv", MIXING_COLUMNS)
    x = [row["lag"] for row in rows]
    report.emit_lines({c: (x, [row[c] for row in rows]) for c in ("alpha", "beta", "phi_sym", "r2")},
                      out / "mixing.svg", "lag", "coefficient")
    return bad


TRAIN_COLUMNS = ("n", "lambda", "seed", "objective", "opt_residual", "iterations", "norm", "norm_bound",
                 "train_risk", "risk_est", "risk_est_ci", "bayes_risk")


def _train(r: Resolved, out: Path, args):
    if r.loss is None:
        raise ConfigError("[loss] section is required for train")
    t = r.data["train"]
    n, seed = int(t["n"]), int(t["seed"])
    if t["lam"] is not None:
        lam = float(t["lam"])
    elif r.schedule is not None:
        lam = r.schedule(n)
    else:
        raise ConfigError("train needs train.lam or a [schedule]")
    harness.check_pairing(r.process, r.loss)
    tol = float(r.data.get("experiment", {}).get("tol", 1e-8))
    test_m = int(r.data.get("experiment", {}).get("test_m", 10_000))
    T = sample_path(r.process, seed, n)
    sol = train(T, r.loss, r.kernel, lam, tol=tol)
    risk, ci = harness.estimate_risk(sol.f, r.process, r.loss, test_m, harness.derive_seed(seed, n, 1))
    row = {"n": n, "lambda": lam, "seed": seed, "objective": sol.objective, "opt_residual": sol.opt_residual,
           "iterations": sol.iterations, "norm": sol.norm, "norm_bound": sol.norm_bound, "train_risk": sol.train_risk,
           "risk_est": risk, "risk_est_ci": ci, "bayes_risk": bayes_risk(r.process, r.loss)}
    report.emit_csv([row], out / "train.csv", TRAIN_COLUMNS)
    bad = []
    if sol.norm > sol.norm_bound:
        bad.append("norm bound violated")
    if sol.opt_residual > tol:
        bad.append(f"solver residual {sol.opt_residual:.3g} > tol")
    return bad


SCHEDULE_COLUMNS = ("setting", "loss", "c", "gamma", "alpha", "beta", "p", "valid", "limiting_exponent",
                    "limiting_exponent_float", "binding_condition")


def _schedule(r: Resolved, out: Path, args):
    if r.schedule is None or r.loss is None:
        raise ConfigError("schedule verdicts need [schedule] and [loss]")
    s = r.data["schedule"]
    regression = isinstance(r.process.label, Regression) or r.loss.family is Family.DISTANCE
    if regression:
        p = s["p"] if s["p"] is not None else growth_constants(r.loss)[0]
        v = validate_regression(r.schedule, p, s["alpha"], s["beta"])
    else:
        p = ""
        v = validate_classification(r.schedule, r.loss, r.kernel, s["alpha"])
    row = {"setting": "regression" if regression else "classification", "loss": r.loss.kind.value,
           "c": r.schedule.c, "gamma": str(r.schedule.gamma), "alpha": s["alpha"], "beta": s["beta"], "p": p}
    row.update(v.as_row())
    report.emit_csv([row], out / "schedule.csv", SCHEDULE_COLUMNS)
    print(f"valid={v.valid} exponent={v.limiting_exponent} ({v.binding_condition})")
    return []


def _sweep(r: Resolved, out: Path, args):
    cfg = r.experiment(**_jobs(args))
    res = harness.run_consistency(cfg)
    report.emit_csv(res, out / "sweep.csv")
    report.emit_plot(res, out / "sweep.svg", title=f"{r.loss.kind.value}, gamma={r.schedule.gamma}")
    for n, med in res.median_by_n().items():
        print(f"n={n:>7d}  median excess risk {med:.6g}")
    return res.violations, {"verdict": res.verdict.as_row() if res.verdict else None}


def _stability(r: Resolved, out: Path, args):
    cfg = r.experiment(**_jobs(args))
    res = harness.run_stability(cfg)
    report.emit_csv(res, out / "stability.csv")
    print(f"{len(res.rows)} checks, {len(res.violations)} violations")
    return res.violations


def _lln(r: Resolved, out: Path, args):
    grid = r.data["lln"]["n_grid"] or r.data.get("experiment", {}).get("n_grid")
    if not grid:
        raise ConfigError("lln needs lln.n_grid or experiment.n_grid")
    seeds = r.data.get("experiment", {}).get("seeds", [0])
    cfg = SimpleNamespace(process=r.process, n_grid=sorted(int(n) for n in grid), seeds=[int(s) for s in seeds])
    res = harness.run_lln(cfg, lln_functions(r))
    report.emit_csv(res, out / "lln.csv")
    series = {}
    for name in sorted({row["function"] for row in res.rows}):
        rows = [LlnRow(row["n"], row["seed"], row["deviation"]) for row in res.rows if row["function"] == name]
        summ = lln_summary(rows)
        ns = sorted(summ)
        series[name] = (ns, [summ[n]["q50"] for n in ns])
    report.emit_lines(series, out / "lln.svg", "n", "median deviation")
    return []


def _jobs(args):
    return {"jobs": args.jobs} if args.jobs is not None else {}


HANDLERS = {
    "simulate": _simulate,
    "mixing": _mixing,
    "train": _train,
    "schedule": _schedule,
    "sweep": _sweep,
    "stability": _stability,
    "lln": _lln,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixsvm", description="Kernel SVMs on dependent data: simulation and checks.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML experiment config")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config value (repeatable)")
    ap.add_argument("--jobs", type=int, default=None, help="parallel workers for sweeps")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return 2
    out = Path(args.out)
    try:
        resolved = parse_config(args.config, args.overrides)
        out.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[args.command](resolved, out, args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    violations, extra = (result if isinstance(result, tuple) else (result, {}))
    report.write_json(report.metadata(args.command, resolved.data, extra), out / f"{args.command}_meta.json")
    vpath = out / "violations.json"
    if violations:
        report.write_json(report.violations_doc(violations), vpath)
        for v in violations[:20]:
            print(f"violation: {v}", file=sys.stderr)
        return 1
    if vpath.exists():
        vpath.unlink()
    return 0


if __name__ == "__main__":
    sys.exit(main())

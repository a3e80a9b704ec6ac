"""End-to-end experiments: consistency sweeps, stability-bound checks and
law-of-large-numbers diagnostics."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import process as proc
from .kernel import KernelSpec, RkhsFunction
from .loss import Family, LossSpec, evaluate, growth_constants
from .process import Classification, MarkovChainSpec, ProcessSpec, Regression
from .schedule import ScheduleSpec, Verdict, regression_beta, validate_classification, validate_regression
from .solver import DEFAULT_TOL, reference_solution, stability_witness, train

log = logging.getLogger(__name__)

Z95 = 1.959963984540054


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    process: ProcessSpec
    loss: LossSpec
    kernel: KernelSpec
    schedule: ScheduleSpec
    n_grid: Sequence[int]
    seeds: Sequence[int]
    test_m: int = 10_000
    ref_m_factor: int = 20
    tol: float = DEFAULT_TOL
    # mixing exponents entering the schedule conditions
    alpha: float = 1.0
    beta: float = 1.0
    # witness selection for stability runs
    selection: str = "midpoint"
    # seed of the reference (stationary) sample in stability runs
    ref_seed: int = 0
    future_window: int = 1000
    jobs: int = 1

    def __post_init__(self):
        grid = [int(n) for n in self.n_grid]
        if not grid or any(n < 1 for n in grid):
            raise ConfigError("n_grid must be a nonempty list of positive sizes")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must be strictly ascending")
        if not list(self.seeds):
            raise ConfigError("seeds must be nonempty")
        if self.test_m < 1000:
            raise ConfigError("test_m must be at least 1000")
        if self.ref_m_factor < 1:
            raise ConfigError("ref_m_factor must be positive")
        if self.process.input_dim != self.kernel.input_dim:
            raise ConfigError(
                f"kernel input_dim {self.kernel.input_dim} does not match the process inputs ({self.process.input_dim})"
            )
        self.n_grid = grid
        self.seeds = [int(s) for s in self.seeds]
        check_pairing(self.process, self.loss)


def check_pairing(spec: ProcessSpec, loss: LossSpec) -> None:
    """Reject loss/label-model combinations the theory does not cover."""
    label = spec.label
    if isinstance(label, Regression):
        if loss.family is not Family.DISTANCE:
            raise ConfigError(f"{loss.kind.value} is margin-based but the labels are real-valued")
        p = growth_constants(loss)[0]
        if p > label.q:
            raise ConfigError(
                f"loss growth order p={p:g} exceeds the declared label moment q={label.q:g}"
            )
        if loss.y_range is not None:
            raise ConfigError("regression labels are unbounded; drop y_range from the loss")
    elif loss.family is Family.DISTANCE and loss.y_range is not None:
        lo, hi = loss.y_range
        if lo > -1 or hi < 1:
            raise ConfigError("classification labels {-1, 1} fall outside the loss's y_range")


def verdict(cfg: ExperimentConfig) -> Verdict:
    s = cfg.schedule
    if isinstance(cfg.process.label, Regression):
        p = growth_constants(cfg.loss)[0]
        return validate_regression(s, p, cfg.alpha, cfg.beta)
    return validate_classification(s, cfg.loss, cfg.kernel, cfg.alpha)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & (2**64 - 1) for p in parts]).generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------
# risk estimation


def exact_chain_risk(f: RkhsFunction, spec: MarkovChainSpec, loss: LossSpec) -> float:
    pi = proc.cesaro_limit(spec.trans, spec.init)
    fx = f(spec.feature_map)
    eta = spec.label.eta(np.arange(spec.m))
    pos = evaluate(loss, np.ones(spec.m), fx)
    neg = evaluate(loss, -np.ones(spec.m), fx)
    return float(pi @ (eta * pos + (1 - eta) * neg))


def estimate_risk(f: RkhsFunction, spec: ProcessSpec, loss: LossSpec, m: int, seed: int) -> Tuple[float, float]:
    """Risk of f under the stationary mean: (estimate, 95% half width).

    Finite-state chains with classification labels are integrated exactly
    (half width 0); everything else uses m i.i.d. stationary draws.
    """
    if m < 1000:
        raise ValueError("risk estimation needs m >= 1000")
    if isinstance(spec, MarkovChainSpec) and isinstance(spec.label, Classification):
        return exact_chain_risk(f, spec, loss), 0.0
    S = proc.sample_stationary(spec, seed, m)
    v = evaluate(loss, S.ys, f(S.xs))
    return float(v.mean()), float(Z95 * v.std(ddof=1) / math.sqrt(m))


# --------------------------------------------------------------------------
# consistency sweep

COLUMNS = (
    "n",
    "lambda",
    "seed",
    "empirical_risk_train",
    "risk_est",
    "risk_est_ci",
    "bayes_risk",
    "excess_risk",
    "future_risk",
    "objective",
    "norm",
    "norm_bound",
    "solver_residual",
    "iterations",
)


@dataclass
class ExperimentResult:
    columns: Tuple[str, ...]
    rows: List[dict]
    verdict: Optional[Verdict] = None
    violations: List[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def median_by_n(self, name: str = "excess_risk") -> Dict[int, float]:
        out = {}
        for n in sorted({int(r["n"]) for r in self.rows}):
            out[n] = float(np.median([r[name] for r in self.rows if int(r["n"]) == n]))
        return out


def _consistency_point(args):
    cfg, n, seed, bayes = args
    lam = cfg.schedule(n)
    T = proc.sample_path(cfg.process, derive_seed(seed, n), n)
    sol = train(T, cfg.loss, cfg.kernel, lam, tol=cfg.tol)
    risk, ci = estimate_risk(sol.f, cfg.process, cfg.loss, cfg.test_m, derive_seed(seed, n, 1))
    fut = math.nan
    if cfg.future_window:
        fut = proc.future_risk(cfg.process, sol.f, cfg.loss, derive_seed(seed, n), n, cfg.future_window)
    return {
        "n": n,
        "lambda": lam,
        "seed": seed,
        "empirical_risk_train": sol.train_risk,
        "risk_est": risk,
        "risk_est_ci": ci,
        "bayes_risk": bayes,
        "excess_risk": risk - bayes,
        "future_risk": fut,
        "objective": sol.objective,
        "norm": sol.norm,
        "norm_bound": sol.norm_bound,
        "solver_residual": sol.opt_residual,
        "iterations": sol.iterations,
    }


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def run_consistency(cfg: ExperimentConfig) -> ExperimentResult:
    """Train one fresh path per (n, seed) at lambda_n and record its
    stationary-mean risk against the Bayes risk."""
    v = verdict(cfg)
    if not v.valid:
        log.warning("schedule is invalid (%s, exponent %s); running as a negative control", v.binding_condition, v.limiting_exponent)
    bayes = proc.bayes_risk(cfg.process, cfg.loss)
    tasks = [(cfg, n, s, bayes) for n in cfg.n_grid for s in cfg.seeds]
    rows = _map(_consistency_point, tasks, cfg.jobs)
    rows.sort(key=lambda r: (r["n"], r["seed"]))
    res = ExperimentResult(COLUMNS, rows, v)
    for r in rows:
        if r["norm"] > r["norm_bound"]:
            res.violations.append(f"norm bound violated at n={r['n']} seed={r['seed']}")
        if r["solver_residual"] > cfg.tol:
            res.violations.append(f"solver residual {r['solver_residual']:.3g} > tol at n={r['n']} seed={r['seed']}")
        if r["excess_risk"] < -max(r["risk_est_ci"], 1e-9):
            res.violations.append(f"excess risk significantly negative at n={r['n']} seed={r['seed']}")
    return res


# --------------------------------------------------------------------------
# stability

STABILITY_COLUMNS = ("n", "lambda", "seed", "ref_m", "lhs", "rhs", "holds", "h_sup", "h_bound", "h_ok", "b_lambda")


def _stability_point(args):
    cfg, n, seed, ref, S = args
    lam = cfg.schedule(n)
    T = proc.sample_path(cfg.process, derive_seed(seed, n), n)
    w = stability_witness(ref, T, S, cfg.loss, cfg.kernel, lam, tol=cfg.tol, selection=cfg.selection)
    return {
        "n": n,
        "lambda": lam,
        "seed": seed,
        "ref_m": S.n,
        "lhs": w.lhs,
        "rhs": w.rhs,
        "holds": int(w.holds),
        "h_sup": w.h_sup,
        "h_bound": w.h_bound,
        "h_ok": int(w.h_sup <= w.h_bound + 1e-12),
        "b_lambda": w.b_lambda,
    }


def run_stability(cfg: ExperimentConfig) -> ExperimentResult:
    """Check ||f_ref - f_T|| <= (1/lambda) ||E_ref h Phi - E_T h Phi|| over the
    grid. The reference solution for each n is shared across seeds."""
    rows = []
    for n in cfg.n_grid:
        lam = cfg.schedule(n)
        m = max(1000, cfg.ref_m_factor * n)
        ref, S = reference_solution(cfg.process, cfg.loss, cfg.kernel, lam, m, derive_seed(cfg.ref_seed, n, 2), tol=cfg.tol)
        rows += _map(_stability_point, [(cfg, n, s, ref, S) for s in cfg.seeds], cfg.jobs)
    rows.sort(key=lambda r: (r["n"], r["seed"]))
    res = ExperimentResult(STABILITY_COLUMNS, rows)
    for r in rows:
        if not r["holds"]:
            res.violations.append(f"stability bound violated at n={r['n']} seed={r['seed']}: {r['lhs']:.6g} > {r['rhs']:.6g}")
        if not r["h_ok"]:
            res.violations.append(f"witness sup {r['h_sup']:.6g} exceeds |L|_(B,1)={r['h_bound']:.6g} at n={r['n']}")
    return res


# --------------------------------------------------------------------------
# laws of large numbers

LLN_COLUMNS = ("function", "n", "seed", "deviation")


def run_lln(cfg: ExperimentConfig, test_functions) -> ExperimentResult:
    rows = []
    for f in test_functions:
        name = getattr(f, "__name__", "f")
        for r in proc.lln_diagnostic(cfg.process, f, cfg.n_grid, cfg.seeds):
            rows.append({"function": name, "n": r.n, "seed": r.seed, "deviation": r.deviation})
    return ExperimentResult(LLN_COLUMNS, rows)

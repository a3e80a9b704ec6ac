"""Regularized kernel risk minimization without offset:

    f_{T,lam} = argmin_{f in H}  lam ||f||_H^2 + (1/n) sum_i L(y_i, f(x_i))

solved in representer form by dual coordinate ascent, with a duality-gap
certificate, plus the reference solution and stability witness used to
check the empirical-vs-population distance bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _dual
from .kernel import KernelSpec, RkhsFunction, combine, gram, rkhs_norm, sup_norm, unique_points
from .loss import LossKind, LossSpec, evaluate, local_lipschitz, subgradient_interval

_KIND_CODE = {
    LossKind.HINGE: _dual.HINGE,
    LossKind.SQUARED_HINGE: _dual.SQUARED_HINGE,
    LossKind.LOGISTIC: _dual.LOGISTIC,
    LossKind.LEAST_SQUARES: _dual.LEAST_SQUARES,
    LossKind.ABSOLUTE: _dual.ABSOLUTE,
    LossKind.EPS_INSENSITIVE: _dual.EPS_INSENSITIVE,
    LossKind.HUBER: _dual.HUBER,
}

DEFAULT_TOL = 1e-8


@dataclass
class TrainingSet:
    xs: np.ndarray
    ys: np.ndarray
    states: Optional[np.ndarray] = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs.reshape(-1, 1)
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        if len(xs) != len(ys):
            raise ValueError(f"{len(xs)} inputs but {len(ys)} labels")
        if len(ys) < 1:
            raise ValueError("a training set needs at least one observation")
        self.xs, self.ys = xs, ys

    @property
    def n(self) -> int:
        return len(self.ys)

    def prefix(self, n: int) -> "TrainingSet":
        st = None if self.states is None else self.states[:n]
        return TrainingSet(self.xs[:n], self.ys[:n], st)


@dataclass
class SvmSolution:
    f: RkhsFunction
    lam: float
    objective: float
    opt_residual: float
    iterations: int = 0
    gap: float = 0.0
    norm: float = 0.0
    risk_at_zero: float = 0.0
    train_risk: float = 0.0
    grad_residual: Optional[float] = None
    # per training point: dual variable (negated subgradient) from the solve
    dual: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def norm_bound(self) -> float:
        return math.sqrt(self.risk_at_zero / self.lam)


def objective(f: RkhsFunction, T: TrainingSet, loss: LossSpec, lam: float) -> float:
    """lam ||f||^2 + (1/n) sum L(y_i, f(x_i))."""
    return lam * rkhs_norm(f) ** 2 + float(np.mean(evaluate(loss, T.ys, f(T.xs))))


def risk_at_zero(T: TrainingSet, loss: LossSpec) -> float:
    return float(np.mean(evaluate(loss, T.ys, np.zeros(T.n))))


def _check_inputs(T: TrainingSet, loss: LossSpec, k: KernelSpec, lam: float):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if loss.kind not in _KIND_CODE:
        raise ValueError(f"unsupported (non-convex?) loss {loss.kind}")
    if T.xs.shape[1] != k.input_dim:
        raise ValueError(f"inputs have dimension {T.xs.shape[1]}, kernel expects {k.input_dim}")
    loss.check_labels(T.ys)


def train(
    T: TrainingSet,
    loss: LossSpec,
    k: KernelSpec,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_epochs: int = 100_000,
    init: Optional[np.ndarray] = None,
    seed: int = 0,
) -> SvmSolution:
    """Solve the regularized problem to relative duality gap ``tol``.

    Identical (x, y) pairs are merged into weighted dual variables; the
    problem as a function of f is unchanged. ``init`` optionally gives a
    starting dual vector over training points (it is averaged per merged
    pair and projected onto the feasible set by the first sweep).
    """
    _check_inputs(T, loss, k, lam)
    pairs = np.column_stack([T.xs, T.ys])
    upairs, inv = unique_points(pairs)
    w = np.bincount(inv, minlength=len(upairs)).astype(float)
    ux = np.ascontiguousarray(upairs[:, :-1])
    uy = np.ascontiguousarray(upairs[:, -1])
    K = np.ascontiguousarray(gram(k, ux))
    a = np.zeros(len(uy))
    if init is not None:
        init = np.asarray(init, dtype=float)
        np.add.at(a, inv, init)
        a /= w
        a = _project(loss, uy, a)
    code = _KIND_CODE[loss.kind]
    F, epochs, primal, dual, gap = _dual.solve(
        K, uy, w, float(lam), code, float(loss.epsilon), float(loss.delta), a, float(tol), int(max_epochs), int(seed)
    )
    n = float(T.n)
    f = _expansion(k, ux, w, a, lam, n)
    if loss.is_smooth:
        # the gap certifies the objective but saturates at roundoff long
        # before the gradient criterion does, so force further sweeps
        burst = 8
        for _ in range(12):
            if _grad_residual(f, lam, T, loss) <= tol or epochs >= max_epochs:
                break
            F, more, primal, dual, gap = _dual.solve(
                K, uy, w, float(lam), code, float(loss.epsilon), float(loss.delta), a, -1.0, burst, int(seed) + epochs
            )
            epochs += more
            burst *= 2
            f = _expansion(k, ux, w, a, lam, n)
    r0 = risk_at_zero(T, loss)
    nrm = rkhs_norm(f)
    if lam * nrm * nrm > r0 and nrm > 0:
        # a float-level overshoot of the a-priori bound; shrink onto it
        f = f.scaled(math.sqrt(r0 / lam) / nrm * (1.0 - 1e-15))
        nrm = rkhs_norm(f)
    fx = f(T.xs)
    train_risk = float(np.mean(evaluate(loss, T.ys, fx)))
    obj = lam * nrm * nrm + train_risk
    sol = SvmSolution(
        f=f,
        lam=float(lam),
        objective=obj,
        opt_residual=gap / max(1.0, abs(primal)),
        iterations=int(epochs),
        gap=float(gap),
        norm=nrm,
        risk_at_zero=r0,
        train_risk=train_risk,
        dual=a[inv].copy(),
    )
    if loss.is_smooth:
        sol.grad_residual = gradient_residual(sol, T, loss)
    return sol


def _expansion(k, ux, w, a, lam, n) -> RkhsFunction:
    """f = sum_u w_u a_u / (2 lam n) k(x_u, .), merged per unique input."""
    alpha_pair = w * a / (2.0 * lam * n)
    xpts, xinv = unique_points(ux)
    coeffs = np.zeros(len(xpts))
    np.add.at(coeffs, xinv, alpha_pair)
    return RkhsFunction(k, xpts, coeffs)


def _project(loss: LossSpec, y, a):
    k = loss.kind
    if k in (LossKind.HINGE, LossKind.LOGISTIC):
        return y * np.clip(a * y, 0.0, 1.0)
    if k is LossKind.SQUARED_HINGE:
        return y * np.maximum(a * y, 0.0)
    if k in (LossKind.ABSOLUTE, LossKind.EPS_INSENSITIVE):
        return np.clip(a, -1.0, 1.0)
    if k is LossKind.HUBER:
        return np.clip(a, -loss.delta, loss.delta)
    return a


def gradient_residual(sol: SvmSolution, T: TrainingSet, loss: LossSpec) -> float:
    """||2 lam K alpha + (1/n) K g||_2 / (1 + ||K alpha||_2) over the
    solution's expansion points, with g the loss derivative at f(x_i)."""
    return _grad_residual(sol.f, sol.lam, T, loss)


def _grad_residual(f: RkhsFunction, lam: float, T: TrainingSet, loss: LossSpec) -> float:
    K = f.gram()
    Ka = K @ f.coeffs
    g = subgradient_interval(loss, T.ys, f(T.xs))[0]
    _, inv = _match_points(f.points, T.xs)
    gsum = np.zeros(len(f.coeffs))
    np.add.at(gsum, inv, g)
    r = 2.0 * lam * Ka + K @ gsum / T.n
    return float(np.linalg.norm(r) / (1.0 + np.linalg.norm(Ka)))


def _match_points(points: np.ndarray, xs: np.ndarray):
    allp = np.vstack([points, xs])
    u, inv = unique_points(allp)
    # points are already unique, so their first occurrences come first
    return u, inv[len(points):]


def reference_solution(spec, loss: LossSpec, k: KernelSpec, lam: float, m: int, seed: int, tol: float = DEFAULT_TOL):
    """Approximate the population solution f_{P,lam} by an empirical solve on
    ``m`` i.i.d. draws from the process's stationary mean.

    Returns ``(solution, sample)``; the sample is needed by the witness.
    """
    from .process import sample_stationary

    if m < 1000:
        raise ValueError("reference solutions need m >= 1000 stationary draws")
    S = sample_stationary(spec, seed, m)
    return train(S, loss, k, lam, tol=tol), S


@dataclass
class WitnessReport:
    lhs: float
    rhs: float
    holds: bool
    h_sup: float
    h_bound: float
    b_lambda: float


def witness_values(f_ref: SvmSolution, S: TrainingSet, loss: LossSpec, selection: str = "midpoint"):
    """h(z) on the points of S: a subgradient of t -> L(y, t) at t = f_ref(x)."""
    fx = f_ref.f(S.xs)
    lo, hi = subgradient_interval(loss, S.ys, fx)
    h = 0.5 * (np.asarray(lo) + np.asarray(hi))
    if selection == "midpoint":
        return h
    if selection == "dual":
        if f_ref.dual is None or len(f_ref.dual) != S.n:
            raise ValueError("dual selection needs the reference training sample")
        return -f_ref.dual
    raise ValueError(f"unknown selection {selection!r}")


def stability_witness(
    f_ref: SvmSolution,
    T: TrainingSet,
    ref_sample: TrainingSet,
    loss: LossSpec,
    k: KernelSpec,
    lam: float,
    tol: float = DEFAULT_TOL,
    selection: str = "midpoint",
    slack: float = 1e-8,
    f_T: Optional[SvmSolution] = None,
) -> WitnessReport:
    """Compare ||f_ref - f_T||_H against (1/lam)||E_ref h Phi - E_T h Phi||_H.

    ``h`` is evaluated at the reference solution; on reference points the
    ``dual`` selection reuses the solver's multipliers, elsewhere (and for
    ``midpoint``) the midpoint of the subgradient interval is used.
    """
    if f_ref.f.kernel != k:
        raise ValueError("reference solution uses a different kernel")
    if f_T is None:
        f_T = train(T, loss, k, lam, tol=tol)
    lhs = math.sqrt(max(0.0, _diff_sq(f_ref.f, f_T.f)))
    h_ref = witness_values(f_ref, ref_sample, loss, selection)
    h_T = witness_values(f_ref, T, loss, "midpoint")
    if selection == "dual":
        # keep h a function of z: training points that coincide with a
        # reference point take the reference value
        h_T = _overlay(h_T, T, ref_sample, h_ref)
    g_ref = RkhsFunction(k, ref_sample.xs, h_ref / ref_sample.n)
    g_T = RkhsFunction(k, T.xs, h_T / T.n)
    d = combine(g_ref, g_T, 1.0, -1.0)
    rhs = rkhs_norm(d) / lam
    b = sup_norm(k) * math.sqrt(f_ref.risk_at_zero / lam)
    h_bound = local_lipschitz(loss, b) if b > 0 else 0.0
    h_sup = float(max(np.max(np.abs(h_ref)), np.max(np.abs(h_T))))
    return WitnessReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs + slack, h_sup=h_sup, h_bound=h_bound, b_lambda=b)


def _diff_sq(f: RkhsFunction, g: RkhsFunction) -> float:
    d = combine(f, g, 1.0, -1.0)
    return rkhs_norm(d) ** 2


def _overlay(h_T, T: TrainingSet, S: TrainingSet, h_S):
    key = {}
    for row, v in zip(map(tuple, np.column_stack([S.xs, S.ys])), h_S):
        key.setdefault(row, v)
    out = np.array(h_T, dtype=float)
    for i, row in enumerate(map(tuple, np.column_stack([T.xs, T.ys]))):
        if row in key:
            out[i] = key[row]
    return out

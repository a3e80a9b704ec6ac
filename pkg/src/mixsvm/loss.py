"""Convex supervised losses L(y, t) with the analytic constants used by the
consistency and stability conditions.

Margin-based losses evaluate as ``phi(y * t)`` with ``y in {-1, 1}``;
distance-based losses evaluate as ``psi(y - t)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

INF = math.inf


class LossKind(enum.Enum):
    HINGE = "hinge"
    SQUARED_HINGE = "squared_hinge"
    LOGISTIC = "logistic"
    LEAST_SQUARES = "least_squares"
    ABSOLUTE = "absolute"
    EPS_INSENSITIVE = "eps_insensitive"
    HUBER = "huber"


class Family(enum.Enum):
    MARGIN = "margin"
    DISTANCE = "distance"


MARGIN_KINDS = {LossKind.HINGE, LossKind.SQUARED_HINGE, LossKind.LOGISTIC}

# polynomial growth of |L|_{B,1} in B (hence in lambda^{-1/2})
LIP_GROWTH = {
    LossKind.HINGE: 0,
    LossKind.SQUARED_HINGE: 1,
    LossKind.LOGISTIC: 0,
    LossKind.LEAST_SQUARES: 1,
    LossKind.ABSOLUTE: 0,
    LossKind.EPS_INSENSITIVE: 0,
    LossKind.HUBER: 0,
}


class LossDomainError(ValueError):
    """Label outside the loss's declared set Y."""


class UnsupportedLossError(ValueError):
    pass


@dataclass(frozen=True)
class LossSpec:
    """A convex loss.

    ``y_range`` is the closed interval Y as ``(lo, hi)``; ``None`` means the
    whole real line. Margin losses always use Y = {-1, 1}.
    """

    kind: LossKind
    epsilon: float = 0.0
    delta: float = 1.0
    y_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", LossKind(self.kind))
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.kind in MARGIN_KINDS:
            if self.y_range not in (None, (-1.0, 1.0)):
                raise ValueError("margin-based losses have Y = {-1, 1}")
            object.__setattr__(self, "y_range", (-1.0, 1.0))
        elif self.y_range is not None:
            lo, hi = map(float, self.y_range)
            if lo > hi:
                raise ValueError(f"empty y_range {self.y_range}")
            object.__setattr__(self, "y_range", (lo, hi))

    @property
    def family(self) -> Family:
        return Family.MARGIN if self.kind in MARGIN_KINDS else Family.DISTANCE

    @property
    def is_smooth(self) -> bool:
        return self.kind in {
            LossKind.SQUARED_HINGE,
            LossKind.LOGISTIC,
            LossKind.LEAST_SQUARES,
            LossKind.HUBER,
        }

    @property
    def lip_growth(self) -> int:
        return LIP_GROWTH[self.kind]

    @property
    def y_sup(self) -> float:
        """sup |y| over Y."""
        if self.y_range is None:
            return INF
        return max(abs(self.y_range[0]), abs(self.y_range[1]))

    def check_labels(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if self.family is Family.MARGIN:
            if not np.all((y == 1.0) | (y == -1.0)):
                raise LossDomainError(f"{self.kind.value} requires labels in {{-1, 1}}")
        elif self.y_range is not None:
            lo, hi = self.y_range
            if np.any(y < lo) or np.any(y > hi):
                raise LossDomainError(f"label outside y_range {self.y_range}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.kind is LossKind.EPS_INSENSITIVE:
            d["epsilon"] = self.epsilon
        if self.kind is LossKind.HUBER:
            d["delta"] = self.delta
        if self.family is Family.DISTANCE and self.y_range is not None:
            d["y_range"] = list(self.y_range)
        return d


def hinge() -> LossSpec:
    return LossSpec(LossKind.HINGE)


def least_squares(y_range=None) -> LossSpec:
    return LossSpec(LossKind.LEAST_SQUARES, y_range=y_range)


def eps_insensitive(epsilon: float, y_range=None) -> LossSpec:
    return LossSpec(LossKind.EPS_INSENSITIVE, epsilon=epsilon, y_range=y_range)


def huber(delta: float, y_range=None) -> LossSpec:
    return LossSpec(LossKind.HUBER, delta=delta, y_range=y_range)


def _psi(loss: LossSpec, r):
    k = loss.kind
    if k is LossKind.LEAST_SQUARES:
        return r * r
    if k is LossKind.ABSOLUTE:
        return np.abs(r)
    if k is LossKind.EPS_INSENSITIVE:
        return np.maximum(0.0, np.abs(r) - loss.epsilon)
    if k is LossKind.HUBER:
        a = np.abs(r)
        d = loss.delta
        return np.where(a <= d, 0.5 * r * r, d * a - 0.5 * d * d)
    raise AssertionError(k)


def _phi(loss: LossSpec, u):
    k = loss.kind
    if k is LossKind.HINGE:
        return np.maximum(0.0, 1.0 - u)
    if k is LossKind.SQUARED_HINGE:
        return np.maximum(0.0, 1.0 - u) ** 2
    if k is LossKind.LOGISTIC:
        return np.logaddexp(0.0, -u)
    raise AssertionError(k)


def evaluate(loss: LossSpec, y, t, check: bool = True):
    """Vectorized L(y, t). Returns a float for scalar input."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if check:
        loss.check_labels(y)
    if loss.family is Family.MARGIN:
        out = _phi(loss, y * t)
    else:
        out = _psi(loss, y - t)
    return float(out) if np.ndim(out) == 0 else out


# name used by the public surface
eval_loss = evaluate


def subgradient_interval(loss: LossSpec, y, t):
    """Return ``(g_lo, g_hi)``, the subdifferential of ``t -> L(y, t)``.

    Vectorized; both ends coincide where the loss is differentiable.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    k = loss.kind
    if loss.family is Family.MARGIN:
        u = y * t
        if k is LossKind.HINGE:
            # d/du max(0, 1-u): -1 below 1, [-1, 0] at 1, 0 above
            lo_u = np.where(u <= 1.0, -1.0, 0.0)
            hi_u = np.where(u < 1.0, -1.0, 0.0)
        elif k is LossKind.SQUARED_HINGE:
            lo_u = hi_u = -2.0 * np.maximum(0.0, 1.0 - u)
        else:
            lo_u = hi_u = -1.0 / (1.0 + np.exp(u))
        # chain rule through u = y t; y = -1 swaps the ends
        g1, g2 = y * lo_u, y * hi_u
        lo, hi = np.minimum(g1, g2), np.maximum(g1, g2)
    else:
        r = y - t
        # d/dt psi(y - t) = -psi'(r)
        if k is LossKind.LEAST_SQUARES:
            lo = hi = 2.0 * (t - y)
        elif k is LossKind.ABSOLUTE:
            lo = np.where(r > 0, -1.0, np.where(r < 0, 1.0, -1.0))
            hi = np.where(r > 0, -1.0, 1.0)
        elif k is LossKind.EPS_INSENSITIVE:
            e = loss.epsilon
            lo = np.where(r > e, -1.0, np.where(r >= -e, np.where(r == e, -1.0, 0.0), 1.0))
            hi = np.where(r > e, -1.0, np.where(r >= -e, np.where(r == -e, 1.0, 0.0), 1.0))
        elif k is LossKind.HUBER:
            lo = hi = -np.clip(r, -loss.delta, loss.delta)
        else:
            raise AssertionError(k)
        lo = lo * np.ones_like(r)
        hi = hi * np.ones_like(r)
    if np.ndim(lo) == 0:
        return float(lo), float(hi)
    return lo, hi


def derivative(loss: LossSpec, y, t):
    """Derivative in t for smooth losses."""
    if not loss.is_smooth:
        raise UnsupportedLossError(f"{loss.kind.value} is not differentiable")
    return subgradient_interval(loss, y, t)[0]


def _max_residual(loss: LossSpec, a: float) -> float:
    """sup |y - t| over t in [-a, a], y in Y."""
    if loss.y_range is None:
        return INF
    lo, hi = loss.y_range
    return max(a - lo, hi + a)


def local_lipschitz(loss: LossSpec, a: float) -> float:
    """|L|_{a,1}: Lipschitz constant of L(y, .) on [-a, a], uniform in y."""
    if not a > 0:
        raise ValueError("a must be positive")
    k = loss.kind
    if k is LossKind.HINGE:
        return 1.0
    if k is LossKind.SQUARED_HINGE:
        return 2.0 * (1.0 + a)
    if k is LossKind.LOGISTIC:
        return 1.0 / (1.0 + math.exp(-a))
    d = _max_residual(loss, a)
    if k is LossKind.LEAST_SQUARES:
        return 2.0 * d
    if k is LossKind.ABSOLUTE:
        return 1.0
    if k is LossKind.EPS_INSENSITIVE:
        return 1.0 if d > loss.epsilon else 0.0
    if k is LossKind.HUBER:
        return min(loss.delta, d)
    raise AssertionError(k)


def growth_constants(loss: LossSpec) -> Tuple[float, float, float, float]:
    """(p_upper, c_upper, p_lower, c_lower) for a distance-based loss with
    ``c_lower * (|r|^p_lower - 1) <= psi(r) <= c_upper * (|r|^p_upper + 1)``.

    ``c_lower`` is 0 when no positive constant works (epsilon-insensitive
    with epsilon > 1 vanishes on a neighbourhood wider than [-1, 1]).
    """
    k = loss.kind
    if loss.family is not Family.DISTANCE:
        raise UnsupportedLossError(f"{k.value} is not distance-based")
    if k is LossKind.LEAST_SQUARES:
        return 2.0, 1.0, 2.0, 1.0
    if k is LossKind.ABSOLUTE:
        return 1.0, 1.0, 1.0, 1.0
    if k is LossKind.EPS_INSENSITIVE:
        return 1.0, 1.0, 1.0, (1.0 if loss.epsilon <= 1.0 else 0.0)
    if k is LossKind.HUBER:
        d = loss.delta
        return 1.0, d, 1.0, min(d / 2.0, 2.0)
    raise AssertionError(k)


def sup_at_zero(loss: LossSpec) -> float:
    """sup over y in Y of L(y, 0)."""
    k = loss.kind
    if k is LossKind.HINGE or k is LossKind.SQUARED_HINGE:
        return 1.0
    if k is LossKind.LOGISTIC:
        return math.log(2.0)
    ys = loss.y_sup
    if ys == INF:
        return INF
    return float(_psi(loss, np.float64(ys)))


def conjugate_value(loss: LossSpec, y, a):
    """``-L*(y, -a)``: the per-sample dual objective term.

    The dual variable ``a`` is feasible iff ``-a`` lies in the domain of the
    conjugate; infeasible entries return ``-inf``.
    """
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    k = loss.kind
    tiny = 1e-12
    if k is LossKind.HINGE:
        b = a * y
        ok = (b >= -tiny) & (b <= 1.0 + tiny)
        val = b
    elif k is LossKind.SQUARED_HINGE:
        b = a * y
        ok = b >= -tiny
        val = b - 0.25 * b * b
    elif k is LossKind.LOGISTIC:
        b = np.clip(a * y, 0.0, 1.0)
        ok = (a * y >= -tiny) & (a * y <= 1.0 + tiny)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -np.where(b > 0, b * np.log(b), 0.0) - np.where(b < 1, (1 - b) * np.log1p(-b), 0.0)
        val = ent
    elif k is LossKind.LEAST_SQUARES:
        ok = np.ones_like(a, dtype=bool)
        val = a * y - 0.25 * a * a
    elif k is LossKind.ABSOLUTE:
        ok = np.abs(a) <= 1.0 + tiny
        val = a * y
    elif k is LossKind.EPS_INSENSITIVE:
        ok = np.abs(a) <= 1.0 + tiny
        val = a * y - loss.epsilon * np.abs(a)
    elif k is LossKind.HUBER:
        ok = np.abs(a) <= loss.delta + tiny
        val = a * y - 0.5 * a * a
    else:
        raise AssertionError(k)
    return np.where(ok, val, -np.inf)


def inner_bayes_classification(loss: LossSpec, eta) -> np.ndarray:
    """min over t of eta L(1, t) + (1 - eta) L(-1, t), closed form.

    Distance losses without a closed form fall back to bounded scalar
    minimization over [-1, 1], which contains the minimizer for labels
    in {-1, 1}.
    """
    eta = np.clip(np.asarray(eta, dtype=float), 0.0, 1.0)
    k = loss.kind
    if k is LossKind.HINGE:
        return 2.0 * np.minimum(eta, 1.0 - eta)
    if k in (LossKind.SQUARED_HINGE, LossKind.LEAST_SQUARES):
        return 4.0 * eta * (1.0 - eta)
    if k is LossKind.LOGISTIC:
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.where(eta > 0, eta * np.log(eta), 0.0) - np.where(
                eta < 1, (1 - eta) * np.log1p(-eta), 0.0
            )
        return h
    if k is LossKind.ABSOLUTE:
        return 2.0 * np.minimum(eta, 1.0 - eta)
    from scipy.optimize import minimize_scalar

    def one(e):
        res = minimize_scalar(
            lambda t: e * evaluate(loss, 1.0, t, check=False)
            + (1 - e) * evaluate(loss, -1.0, t, check=False),
            bounds=(-1.0, 1.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        return min(res.fun, e * evaluate(loss, 1.0, 1.0, check=False) + (1 - e) * evaluate(loss, -1.0, 1.0, check=False),
                   e * evaluate(loss, 1.0, -1.0, check=False) + (1 - e) * evaluate(loss, -1.0, -1.0, check=False))

    return np.vectorize(one, otypes=[float])(eta)

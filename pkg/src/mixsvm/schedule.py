"""Power regularization schedules lambda_n = c n^(-gamma) and their validity
for the classification and regression consistency conditions.

Every condition on (lambda_n) is a statement that some power n^e tends to
infinity, so validity reduces to comparing exponents. Exponents are kept as
``Fraction`` so that boundary cases are decided exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .loss import LossSpec, sup_at_zero

Number = Union[int, float, str, Fraction]


def exact(x: Number) -> Fraction:
    """Exact rational value; floats map to their binary value, strings like
    "1/4" are parsed."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite exponent {x}")
        return Fraction(x)
    return Fraction(x)


@dataclass(frozen=True)
class ScheduleSpec:
    c: float
    gamma: Fraction

    def __init__(self, c: Number, gamma: Number):
        object.__setattr__(self, "c", float(exact(c)))
        object.__setattr__(self, "gamma", exact(gamma))
        if not self.c > 0:
            raise ValueError("schedule constant c must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    def __call__(self, n) -> float:
        return self.c * float(n) ** (-float(self.gamma))

    def lambdas(self, ns: Sequence[int]) -> np.ndarray:
        return np.array([self(n) for n in ns])

    @property
    def is_null_sequence(self) -> bool:
        return self.gamma > 0


@dataclass(frozen=True)
class Verdict:
    valid: bool
    limiting_exponent: Fraction
    binding_condition: str

    def as_row(self) -> dict:
        return {
            "valid": self.valid,
            "limiting_exponent": str(self.limiting_exponent),
            "limiting_exponent_float": float(self.limiting_exponent),
            "binding_condition": self.binding_condition,
        }


NULL_SEQUENCE = "lambda_n -> 0"


def b_lambda(k_sup: float, c_loss: float, lam: float) -> float:
    """Radius ||k||_inf sqrt(c / lambda) containing every solution's sup norm."""
    if k_sup < 0 or c_loss < 0 or not lam > 0:
        raise ValueError("b_lambda needs nonnegative k_sup, c and positive lambda")
    return k_sup * math.sqrt(c_loss / lam)


def validate_classification(s: ScheduleSpec, loss: LossSpec, k=None, alpha: Number = 1) -> Verdict:
    """Decide |L|_{B_n,1}^4 / (lambda_n^2 n^alpha) -> 0 for a power schedule.

    |L|_{B,1} grows like B^g with g = ``loss.lip_growth`` and B ~ lambda^{-1/2},
    so the ratio behaves like n^{2 gamma (1 + g) - alpha}. The kernel, if
    given, must be bounded (it only scales B).
    """
    if k is not None:
        from .kernel import sup_norm

        sup_norm(k)
    a = exact(alpha)
    if not 0 < a <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if math.isinf(sup_at_zero(loss)):
        raise ValueError(f"{loss.kind.value} has an unbounded L(., 0); the classification condition needs it finite")
    g = loss.lip_growth
    expo = a - 2 * s.gamma * (1 + g)
    if s.gamma <= 0:
        return Verdict(False, expo, NULL_SEQUENCE)
    return Verdict(expo > 0, expo, "|L|^4 / (lambda^2 n^alpha) -> 0")


def validate_regression(s: ScheduleSpec, p: Number, alpha: Number, beta: Number) -> Verdict:
    """Decide lambda_n^p n^(2 alpha) -> inf and lambda_n^(2p) n^beta -> inf."""
    p, a, b = exact(p), exact(alpha), exact(beta)
    if not 1 <= p <= 2:
        raise ValueError("growth order p must lie in [1, 2]")
    if not (0 < a <= 1 and 0 < b <= 1):
        raise ValueError("alpha and beta must lie in (0, 1]")
    m1 = 2 * a - p * s.gamma
    m2 = b - 2 * p * s.gamma
    expo, cond = (m1, "lambda^p n^(2 alpha) -> inf") if m1 <= m2 else (m2, "lambda^(2p) n^beta -> inf")
    if s.gamma <= 0:
        return Verdict(False, expo, NULL_SEQUENCE)
    return Verdict(m1 > 0 and m2 > 0, expo, cond)


def regression_beta(alpha: Number, p: Number, q: Number) -> Fraction:
    """Bi-mixing exponent implied by an alpha-mixing rate: averaging
    alpha^(1 - (2p-2)/q) phi_sym^((2p-2)/q) with phi_sym <= 1 and Jensen
    gives beta = alpha (1 - (2p - 2)/q). ``q`` may be ``math.inf``."""
    a, p = exact(alpha), exact(p)
    if isinstance(q, float) and math.isinf(q):
        return a
    q = exact(q)
    e = 1 - (2 * p - 2) / q
    if e <= 0:
        raise ValueError("q too small: the alpha part vanishes, only phi_sym-mixing rates apply")
    return a * e


# --------------------------------------------------------------------------
# exponent estimation for finite chains


@dataclass
class ExponentFit:
    alpha: float
    alpha_residual: float
    alpha_flag: str
    beta: float
    beta_residual: float
    beta_flag: str
    h1_values: np.ndarray
    bimix_values: np.ndarray


def _loglog_fit(ns, vals):
    ns = np.asarray(ns, dtype=float)
    vals = np.asarray(vals, dtype=float)
    keep = vals > 1e-300
    if keep.sum() < 2:
        return None, None
    x, y = np.log(ns[keep]), np.log(vals[keep])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return -coef[0], float(np.sqrt(np.mean(resid**2)))


def _h1_values(chain, n_grid):
    """max over events B of |P_n(B) - P(B)| = total variation distance
    between the Cesaro average of the marginals and the stationary mean."""
    from .process import cesaro_limit, cesaro_marginals

    pi = cesaro_limit(chain.trans, chain.init)
    marg = cesaro_marginals(chain, max(n_grid))
    return np.array([0.5 * np.abs(marg[n - 1] - pi).sum() for n in n_grid])


def mixing_exponent_from_chain(chain, n_grid: Sequence[int], coefficient: str = "alpha", tiny: float = 1e-14) -> ExponentFit:
    """Fit the decay exponents of the marginal-average deviation and of the
    bi-mixing average by log-log least squares; both are capped at 1."""
    from .mixing import bi_mixing_average

    grid = sorted(int(n) for n in n_grid)
    h1 = _h1_values(chain, grid)
    if np.all(h1 <= tiny):
        a, ares, aflag = 1.0, 0.0, "stationary"
    else:
        fit, ares = _loglog_fit(grid, np.where(h1 > tiny, h1, 0.0))
        if fit is None:
            a, ares, aflag = 1.0, 0.0, "degenerate"
        else:
            a, aflag = min(1.0, fit), ("capped" if fit > 1 else "fitted")
    method = "stationary" if chain.is_stationary else "direct"
    bm = np.array([bi_mixing_average(chain, n, coefficient, method=method) for n in grid])
    if np.all(bm <= tiny):
        b, bres, bflag = 1.0, 0.0, "independent"
    else:
        fit, bres = _loglog_fit(grid, bm)
        b, bflag = min(1.0, fit), ("capped" if fit > 1 else "fitted")
    return ExponentFit(a, ares, aflag, b, bres, bflag, h1, bm)

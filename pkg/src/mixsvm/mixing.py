"""Exact mixing coefficients of a pair of finite-valued random variables.

For finite alphabets the sigma-algebras generated by the two variables are
power sets, so every coefficient is a finite optimisation over the joint
probability table ``probs[i, j] = P(U = i, V = j)``:

* alpha:    sup_{A,B} |P(A x B) - P(A) P(B)|
* beta:     1/2 sum_ij |p_ij - r_i c_j|  (the finest partition is optimal)
* phi:      sup_{A,B} |P(A x B) - P(A) P(B)| / P(A)   (0/0 := 0)
* phi_sym:  sqrt(phi(U -> V) phi(V -> U))
* r2:       maximal correlation, the second singular value of
            p_ij / sqrt(r_i c_j)

For a fixed row event A the best column event B collects the positive (or
negative) entries of d_j = P(A, j) - P(A) c_j, and both choices give the
same value because sum_j d_j = 0. Hence sup_B |...| = 1/2 sum_j |d_j| and
only the 2^m row events need enumerating.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

ENUM_CAP = 16


class AlphabetTooLargeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteJoint:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("joint must be a 2-d table")
        if np.any(p < 0):
            raise ValueError("joint has negative entries")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"joint sums to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def row_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    @property
    def T(self) -> "FiniteJoint":
        return FiniteJoint(self.probs.T)

    @classmethod
    def product(cls, row, col) -> "FiniteJoint":
        return cls(np.outer(row, col))


@dataclass
class MixingReport:
    alpha: float
    beta: float
    phi_row: float
    phi_col: float
    phi_sym: float
    r2: float
    lag: Optional[int] = None

    def as_dict(self) -> dict:
        return asdict(self)


def _subset_masks(m: int) -> np.ndarray:
    """(2^m, m) 0/1 matrix of all subsets."""
    if m > ENUM_CAP:
        raise AlphabetTooLargeError(f"alphabet of size {m} exceeds the enumeration cap {ENUM_CAP}")
    codes = np.arange(1 << m, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(float)


def _row_event_deviation(p: np.ndarray):
    """For every row event A: (P(A), 1/2 sum_j |P(A, j) - P(A) c_j|)."""
    S = _subset_masks(p.shape[0])
    col = p.sum(axis=0)
    pa = S @ p.sum(axis=1)
    d = S @ p - pa[:, None] * col[None, :]
    return pa, 0.5 * np.abs(d).sum(axis=1)


def alpha(j: FiniteJoint) -> float:
    p = j.probs
    # enumerate over the smaller side; alpha is symmetric
    if p.shape[0] > p.shape[1]:
        p = p.T
    _, dev = _row_event_deviation(p)
    return float(dev.max())


def beta(j: FiniteJoint) -> float:
    p = j.probs
    return float(0.5 * np.abs(p - np.outer(p.sum(axis=1), p.sum(axis=0))).sum())


def phi(j: FiniteJoint, direction: str = "row") -> float:
    """phi(sigma(U), sigma(V)) for ``direction="row"`` (conditioning on row
    events), phi(sigma(V), sigma(U)) for ``"col"``."""
    p = j.probs if direction == "row" else j.probs.T
    if direction not in ("row", "col"):
        raise ValueError(f"direction must be 'row' or 'col', got {direction!r}")
    pa, dev = _row_event_deviation(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pa > 0, dev / pa, 0.0)
    return float(ratio.max())


def phi_sym(j: FiniteJoint) -> float:
    return math.sqrt(phi(j, "row") * phi(j, "col"))


def r2(j: FiniteJoint) -> float:
    """Maximal correlation sup corr(f(U), g(V))."""
    p = j.probs
    r, c = p.sum(axis=1), p.sum(axis=0)
    keep_r, keep_c = r > 0, c > 0
    p, r, c = p[np.ix_(keep_r, keep_c)], r[keep_r], c[keep_c]
    if min(p.shape) < 2:
        return 0.0
    sr, sc = np.sqrt(r), np.sqrt(c)
    Q = p / np.outer(sr, sc)
    # remove the leading singular pair (sqrt r, sqrt c) with value 1
    Q = Q - np.outer(sr, sc)
    s = np.linalg.svd(Q, compute_uv=False)
    return float(min(1.0, s[0]))


def report(j: FiniteJoint, lag: Optional[int] = None) -> MixingReport:
    pr, pc = phi(j, "row"), phi(j, "col")
    return MixingReport(alpha(j), beta(j), pr, pc, math.sqrt(pr * pc), r2(j), lag)


def rio_bound(rep: MixingReport, p: float) -> float:
    """2 pi alpha^(1 - 2/p) phi_sym^(2/p), an upper bound on the L_p maximal
    correlation R_p. Not capped: R_p <= 1 holds separately."""
    if p < 2:
        raise ValueError("the bound needs p >= 2")
    val = 2.0 * math.pi * rep.alpha ** (1.0 - 2.0 / p) * rep.phi_sym ** (2.0 / p)
    if p == 2 and rep.r2 > val + 1e-10:
        raise AssertionError(f"r2={rep.r2} exceeds its bound {val}")
    return val


# --------------------------------------------------------------------------
# Markov chains


def matrix_power(P: np.ndarray, k: int) -> np.ndarray:
    """P^k by repeated squaring, renormalising rows only if they drift."""
    P = np.asarray(P, dtype=float)
    out = np.eye(P.shape[0])
    base = P.copy()
    while k:
        if k & 1:
            out = out @ base
        k >>= 1
        if k:
            base = base @ base
    drift = np.max(np.abs(out.sum(axis=1) - 1.0))
    if drift > 1e-12:
        log.info("renormalising matrix power rows (drift %.3g)", drift)
        out = out / out.sum(axis=1, keepdims=True)
    return out


def markov_lag_joint(chain, i: int, j: int) -> FiniteJoint:
    """Joint law of (Z_min(i,j), Z_max(i,j)), indices starting at 1."""
    if i == j:
        raise ValueError("lag 0 is excluded: i and j must differ")
    if min(i, j) < 1:
        raise ValueError("time indices start at 1")
    a, b = min(i, j), max(i, j)
    marg = chain.init @ matrix_power(chain.trans, a - 1)
    return _joint(marg, matrix_power(chain.trans, b - a))


def _joint(marg, cond) -> FiniteJoint:
    p = marg[:, None] * cond
    s = p.sum()
    if abs(s - 1.0) > 1e-12:
        log.info("renormalising lag joint (mass %.17g)", s)
        p = p / s
    return FiniteJoint(p)


def stationary_lag_joint(trans, pi, lag: int) -> FiniteJoint:
    if lag < 1:
        raise ValueError("lag must be positive")
    return _joint(np.asarray(pi, dtype=float), matrix_power(trans, lag))


def lag_table(chain, lags: Sequence[int], start: int = 1):
    """MixingReport for (Z_start, Z_{start + lag}) over the given lags."""
    return [_with_lag(report(markov_lag_joint(chain, start, start + k)), k) for k in lags]


def _with_lag(rep: MixingReport, lag: int) -> MixingReport:
    rep.lag = lag
    return rep


COEFFICIENTS = ("alpha", "beta", "phi_row", "phi_col", "phi_sym", "r2")


def _coef(j: FiniteJoint, name: str) -> float:
    if name == "alpha":
        return alpha(j)
    if name == "beta":
        return beta(j)
    if name == "phi_row":
        return phi(j, "row")
    if name == "phi_col":
        return phi(j, "col")
    if name == "phi_sym":
        return phi_sym(j)
    if name == "r2":
        return r2(j)
    raise ValueError(f"unknown coefficient {name!r}")


def _batch_alpha(p: np.ndarray) -> np.ndarray:
    """alpha for a stack of joints of shape (N, m, m')."""
    S = _subset_masks(p.shape[1])
    rows = p.sum(axis=2)
    cols = p.sum(axis=1)
    pa = rows @ S.T  # (N, 2^m)
    d = np.einsum("sm,nmk->nsk", S, p) - pa[:, :, None] * cols[:, None, :]
    return 0.5 * np.abs(d).sum(axis=2).max(axis=1)


def bi_mixing_average(chain, n: int, coefficient: str = "alpha", method: str = "direct") -> float:
    """(1/n^2) sum_{i=1}^n sum_{j<i} xi(Z_i, Z_j).

    ``method="direct"`` builds the exact joint of every pair (valid for any
    initial law); ``"stationary"`` uses that for a stationary chain the pair
    coefficient depends only on the lag k = i - j, which occurs n - k times.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return 0.0
    if method == "stationary":
        if not chain.is_stationary:
            raise ValueError("the lag shortcut needs a stationary chain")
        total = 0.0
        for k in range(1, n):
            total += (n - k) * _coef(stationary_lag_joint(chain.trans, chain.init, k), coefficient)
        return total / n**2
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    P = chain.trans
    m = P.shape[0]
    # marginals law(Z_j) and k-step kernels, j, k < n
    margs = np.empty((n, m))
    margs[0] = chain.init
    for t in range(1, n):
        margs[t] = margs[t - 1] @ P
    powers = np.empty((n, m, m))
    powers[0] = np.eye(m)
    for k in range(1, n):
        powers[k] = powers[k - 1] @ P
    total = 0.0
    for k in range(1, n):
        # all pairs with lag k: j = 1..n-k
        p = margs[: n - k, :, None] * powers[k][None, :, :]
        p = p / p.sum(axis=(1, 2), keepdims=True)
        if coefficient == "alpha":
            vals = _batch_alpha(p)
        else:
            vals = np.array([_coef(FiniteJoint(q), coefficient) for q in p])
        total += float(vals.sum())
    return total / n**2


# --------------------------------------------------------------------------
# empirical


def empirical_joint(path, lag: int, cap: int = ENUM_CAP) -> FiniteJoint:
    path = np.asarray(path)
    if lag < 1:
        raise ValueError("lag must be positive")
    if len(path) < lag + 2:
        raise ValueError(f"path of length {len(path)} too short for lag {lag}")
    symbols, codes = np.unique(path, return_inverse=True)
    if len(symbols) > cap:
        raise AlphabetTooLargeError(f"{len(symbols)} observed symbols exceed the cap {cap}")
    m = len(symbols)
    counts = np.zeros((m, m))
    np.add.at(counts, (codes[:-lag], codes[lag:]), 1.0)
    return FiniteJoint(counts / counts.sum())


def empirical_alpha(path, lag: int, cap: int = ENUM_CAP) -> float:
    return alpha(empirical_joint(path, lag, cap))


def alpha_hill_climb(j: FiniteJoint, restarts: int = 20, seed: int = 0) -> float:
    """Randomised local search over event pairs (single-element flips);
    a lower bound on alpha used to cross-check the enumeration."""
    rng = np.random.default_rng(seed)
    p = j.probs
    r, c = p.sum(axis=1), p.sum(axis=0)
    m, k = p.shape

    def val(A, B):
        return abs(A @ p @ B - (A @ r) * (c @ B))

    best = 0.0
    for _ in range(restarts):
        A = rng.integers(0, 2, m).astype(float)
        B = rng.integers(0, 2, k).astype(float)
        cur = val(A, B)
        improved = True
        while improved:
            improved = False
            for vec, size in ((A, m), (B, k)):
                for i in range(size):
                    vec[i] = 1 - vec[i]
                    v = val(A, B)
                    if v > cur + 1e-15:
                        cur, improved = v, True
                    else:
                        vec[i] = 1 - vec[i]
        best = max(best, cur)
    return float(best)

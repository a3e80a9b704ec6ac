"""Dependent data-generating processes with analytic stationary means.

Four variants are supported: i.i.d. draws, finite-state Markov chains with
a feature map, a Gaussian AR(1) input process, and a noisy observation of
the doubling map z -> 2z mod 1. Labels are drawn from a label model applied
to the process's *label input*: the state index for chains, x for i.i.d.
and AR(1), and the hidden state z for the doubling map.

Every path is a deterministic function of ``(seed, n)`` and satisfies the
prefix property: ``sample_path(s, seed, n)`` is the first ``n`` rows of
``sample_path(s, seed, n + 1)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numba
import numpy as np
from scipy import integrate, special, stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .loss import Family, LossSpec, UnsupportedLossError, evaluate, inner_bayes_classification
from .solver import TrainingSet

log = logging.getLogger(__name__)

MAX_STATES = 20

# RNG stream ids
_DYNAMICS, _NOISE, _LABELS, _INIT = 0, 1, 2, 3
_STATIONARY = 16


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), stream])))


class ProcessConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# label models


@dataclass(frozen=True)
class EtaModel:
    """P(y = 1 | u).

    kinds: ``table`` (values indexed by chain state), ``constant``,
    ``logistic`` (1 / (1 + exp(-(w.u + b)))), ``threshold`` (``high`` where
    u[0] > t else ``low``).
    """

    kind: str
    values: Tuple[float, ...] = ()
    weight: Tuple[float, ...] = (1.0,)
    bias: float = 0.0
    threshold: float = 0.0
    low: float = 0.0
    high: float = 1.0
    value: float = 0.5

    def __post_init__(self):
        if self.kind not in ("table", "constant", "logistic", "threshold"):
            raise ProcessConfigError(f"unknown eta kind {self.kind!r}")
        probs = list(self.values) if self.kind == "table" else []
        probs += [self.value] if self.kind == "constant" else []
        probs += [self.low, self.high] if self.kind == "threshold" else []
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ProcessConfigError("eta values must lie in [0, 1]")

    def __call__(self, u) -> np.ndarray:
        if self.kind == "table":
            return np.asarray(self.values, dtype=float)[np.asarray(u, dtype=int)]
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        if self.kind == "constant":
            return np.full(len(u), self.value)
        if self.kind == "logistic":
            return special.expit(u @ np.asarray(self.weight, dtype=float) + self.bias)
        return np.where(u[:, 0] > self.threshold, self.high, self.low)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"


@dataclass(frozen=True)
class MeanModel:
    """E[y | u] for regression: ``table``, ``constant``, ``linear``,
    ``sine`` (amplitude * sin(frequency * u[0])) or ``kernel``
    (sum_j coeffs[j] exp(-sigma^2 |u - centers[j]|^2))."""

    kind: str
    values: Tuple[float, ...] = ()
    value: float = 0.0
    weight: Tuple[float, ...] = (1.0,)
    bias: float = 0.0
    amplitude: float = 1.0
    frequency: float = 1.0
    centers: Tuple[Tuple[float, ...], ...] = ()
    coeffs: Tuple[float, ...] = ()
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("table", "constant", "linear", "sine", "kernel"):
            raise ProcessConfigError(f"unknown mean kind {self.kind!r}")
        if self.kind == "kernel" and len(self.centers) != len(self.coeffs):
            raise ProcessConfigError("kernel mean needs one coefficient per center")

    def __call__(self, u) -> np.ndarray:
        if self.kind == "table":
            return np.asarray(self.values, dtype=float)[np.asarray(u, dtype=int)]
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        if self.kind == "constant":
            return np.full(len(u), self.value)
        if self.kind == "linear":
            return u @ np.asarray(self.weight, dtype=float) + self.bias
        if self.kind == "sine":
            return self.amplitude * np.sin(self.frequency * u[:, 0])
        c = np.asarray(self.centers, dtype=float).reshape(len(self.coeffs), -1)
        d2 = ((u[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-(self.sigma**2) * d2) @ np.asarray(self.coeffs, dtype=float)


@dataclass(frozen=True)
class Noise:
    """Symmetric additive label noise: gaussian(scale = sd), laplace(scale),
    student_t(df, scale), uniform(scale = half width)."""

    kind: str = "gaussian"
    scale: float = 1.0
    df: float = 5.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace", "student_t", "uniform"):
            raise ProcessConfigError(f"unknown noise kind {self.kind!r}")
        if not self.scale > 0:
            raise ProcessConfigError("noise scale must be positive")

    @property
    def dist(self):
        if self.kind == "gaussian":
            return stats.norm(scale=self.scale)
        if self.kind == "laplace":
            return stats.laplace(scale=self.scale)
        if self.kind == "student_t":
            return stats.t(self.df, scale=self.scale)
        return stats.uniform(loc=-self.scale, scale=2 * self.scale)

    @property
    def moment_order(self) -> float:
        """Supremum of finite absolute moment orders (exclusive for t)."""
        return self.df if self.kind == "student_t" else math.inf

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian":
            return self.scale * rng.standard_normal(n)
        if self.kind == "laplace":
            return rng.laplace(0.0, self.scale, n)
        if self.kind == "student_t":
            return self.scale * rng.standard_t(self.df, n)
        return rng.uniform(-self.scale, self.scale, n)

    def expect(self, g: Callable[[float], float]) -> float:
        """E g(noise) by adaptive quadrature."""
        d = self.dist
        if self.kind == "uniform":
            v, _ = integrate.quad(lambda e: g(e) * d.pdf(e), -self.scale, self.scale, epsabs=1e-13, epsrel=1e-10, limit=200)
            return v
        v1, _ = integrate.quad(lambda e: g(e) * d.pdf(e), -np.inf, 0.0, epsabs=1e-13, epsrel=1e-10, limit=200)
        v2, _ = integrate.quad(lambda e: g(e) * d.pdf(e), 0.0, np.inf, epsabs=1e-13, epsrel=1e-10, limit=200)
        return v1 + v2

    @property
    def variance(self) -> float:
        return float(self.dist.var())


@dataclass(frozen=True)
class Classification:
    eta: EtaModel


@dataclass(frozen=True)
class Regression:
    mean: MeanModel
    noise: Noise = field(default_factory=Noise)
    # declared finite moment order of |y|
    q: float = 2.0

    def __post_init__(self):
        if not self.q >= 1:
            raise ProcessConfigError("moment order q must be >= 1")
        if self.noise.kind == "student_t" and not self.q < self.noise.df:
            raise ProcessConfigError(
                f"declared moment q={self.q} is infinite for student_t noise with df={self.noise.df}"
            )


LabelModel = Union[Classification, Regression]


def _draw_labels(label: LabelModel, u, rng: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(label, Classification):
        coin = rng.random(n)
        return np.where(coin < label.eta(u), 1.0, -1.0)
    return label.mean(u) + label.noise.sample(rng, n)


# --------------------------------------------------------------------------
# input distributions for the i.i.d. variant


@dataclass(frozen=True)
class GaussianMixture:
    weights: Tuple[float, ...]
    means: Tuple[Tuple[float, ...], ...]
    sds: Tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.means[0])

    def sample(self, rng_c, rng_x, n):
        w = np.asarray(self.weights, dtype=float)
        comp = np.searchsorted(np.cumsum(w / w.sum()), rng_c.random(n), side="right")
        comp = np.minimum(comp, len(w) - 1)
        z = rng_x.standard_normal((n, self.dim))
        return np.asarray(self.means, dtype=float)[comp] + np.asarray(self.sds, dtype=float)[comp, None] * z

    def pdf_1d(self, x):
        w = np.asarray(self.weights, dtype=float)
        w = w / w.sum()
        return sum(wi * stats.norm.pdf(x, m[0], s) for wi, m, s in zip(w, self.means, self.sds))

    def support_1d(self):
        return -np.inf, np.inf


@dataclass(frozen=True)
class UniformBox:
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lo)

    def sample(self, rng_c, rng_x, n):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return lo + (hi - lo) * rng_x.random((n, self.dim))

    def pdf_1d(self, x):
        return np.where((x >= self.lo[0]) & (x <= self.hi[0]), 1.0 / (self.hi[0] - self.lo[0]), 0.0)

    def support_1d(self):
        return self.lo[0], self.hi[0]


# --------------------------------------------------------------------------
# process variants


@dataclass(frozen=True)
class IidSpec:
    x_dist: Union[GaussianMixture, UniformBox]
    label: LabelModel

    @property
    def input_dim(self) -> int:
        return self.x_dist.dim


@dataclass(frozen=True, eq=False)
class MarkovChainSpec:
    trans: np.ndarray
    init: np.ndarray
    feature_map: np.ndarray
    label: LabelModel

    def __post_init__(self):
        P = np.asarray(self.trans, dtype=float)
        nu = np.asarray(self.init, dtype=float)
        feat = np.asarray(self.feature_map, dtype=float)
        m = P.shape[0] if P.ndim == 2 else 0
        if P.ndim != 2 or P.shape != (m, m) or m < 1:
            raise ProcessConfigError("trans must be a square matrix")
        if m > MAX_STATES:
            raise ProcessConfigError(f"at most {MAX_STATES} states are supported, got {m}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            bad = int(np.argmax(np.abs(P.sum(axis=1) - 1.0)))
            raise ProcessConfigError(f"trans is not row-stochastic (row {bad} sums to {P[bad].sum()!r})")
        if nu.shape != (m,) or np.any(nu < 0) or abs(nu.sum() - 1.0) > 1e-12:
            raise ProcessConfigError("init must be a probability vector over the states")
        if feat.ndim == 1:
            feat = feat.reshape(-1, 1)
        if feat.shape[0] != m:
            raise ProcessConfigError("feature_map needs one input vector per state")
        if isinstance(self.label, Classification) and self.label.eta.kind == "table" and len(self.label.eta.values) != m:
            raise ProcessConfigError("eta table needs one value per state")
        if isinstance(self.label, Regression) and self.label.mean.kind == "table" and len(self.label.mean.values) != m:
            raise ProcessConfigError("mean table needs one value per state")
        for name, v in (("trans", P), ("init", nu), ("feature_map", feat)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def m(self) -> int:
        return self.trans.shape[0]

    @property
    def input_dim(self) -> int:
        return self.feature_map.shape[1]

    @property
    def is_stationary(self) -> bool:
        return bool(np.max(np.abs(self.init @ self.trans - self.init)) <= 1e-12)


@dataclass(frozen=True)
class Ar1Spec:
    rho: float
    noise_sd: float
    label: LabelModel
    # starting value; None draws x_1 from the stationary marginal
    x0: Optional[float] = 0.0

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ProcessConfigError("AR(1) needs |rho| < 1")
        if not self.noise_sd > 0:
            raise ProcessConfigError("noise_sd must be positive")

    input_dim = 1

    @property
    def marginal_sd(self) -> float:
        return self.noise_sd / math.sqrt(1.0 - self.rho**2)


@dataclass(frozen=True)
class NoisyDoublingSpec:
    noise_sd: float
    label: LabelModel

    def __post_init__(self):
        if not self.noise_sd > 0:
            raise ProcessConfigError("noise_sd must be positive")

    input_dim = 1


ProcessSpec = Union[IidSpec, MarkovChainSpec, Ar1Spec, NoisyDoublingSpec]


def chain(trans, init=None, feature_map=None, eta=None, label=None) -> MarkovChainSpec:
    """Convenience constructor: classification chain with per-state eta."""
    P = np.asarray(trans, dtype=float)
    m = P.shape[0]
    if init is None:
        init = stationary_distribution(P)
    if feature_map is None:
        feature_map = np.arange(m, dtype=float).reshape(-1, 1)
    if label is None:
        label = Classification(EtaModel("table", values=tuple(eta if eta is not None else [0.5] * m)))
    return MarkovChainSpec(P, np.asarray(init, dtype=float), np.asarray(feature_map, dtype=float), label)


# --------------------------------------------------------------------------
# finite-chain analytics


def _closed_classes(P: np.ndarray):
    m = P.shape[0]
    ncomp, lab = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        idx = np.flatnonzero(lab == c)
        out = np.setdiff1d(np.arange(m), idx)
        if out.size == 0 or not np.any(P[np.ix_(idx, out)] > 0):
            closed.append(idx)
    return closed


def _class_stationary(Pc: np.ndarray) -> np.ndarray:
    k = Pc.shape[0]
    A = np.vstack([(Pc.T - np.eye(k)), np.ones((1, k))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def cesaro_limit(P, nu) -> np.ndarray:
    """lim_n (1/n) sum_{i<n} nu P^i.

    Each closed communicating class contributes its unique stationary law,
    weighted by the probability of being absorbed into it. This is the
    Cesaro limit also for periodic classes, where nu P^i itself oscillates.
    """
    P = np.asarray(P, dtype=float)
    nu = np.asarray(nu, dtype=float)
    m = P.shape[0]
    closed = _closed_classes(P)
    rec = np.concatenate(closed)
    trans_idx = np.setdiff1d(np.arange(m), rec)
    pi = np.zeros(m)
    if trans_idx.size:
        Q = P[np.ix_(trans_idx, trans_idx)]
        N = np.linalg.inv(np.eye(len(trans_idx)) - Q)
    for idx in closed:
        mass = nu[idx].sum()
        if trans_idx.size:
            absorb = N @ P[np.ix_(trans_idx, idx)].sum(axis=1)
            mass += nu[trans_idx] @ absorb
        pi[idx] += mass * _class_stationary(P[np.ix_(idx, idx)])
    return pi


def stationary_distribution(P) -> np.ndarray:
    """Stationary law reached from the uniform start (unique if irreducible)."""
    P = np.asarray(P, dtype=float)
    return cesaro_limit(P, np.full(P.shape[0], 1.0 / P.shape[0]))


def cesaro_marginals(spec: MarkovChainSpec, n_max: int) -> np.ndarray:
    """Rows n = 1..n_max of P_n = (1/n) sum_{i=1}^n law(Z_i), exactly."""
    m = spec.m
    out = np.empty((n_max, m))
    cur = spec.init.copy()
    acc = np.zeros(m)
    for i in range(n_max):
        acc += cur
        out[i] = acc / (i + 1)
        cur = cur @ spec.trans
    return out


def doeblin_power(P, k_max: Optional[int] = None) -> Optional[int]:
    """Smallest k such that P^k has a strictly positive column (a uniform
    minorization of the k-step kernel), or None if none exists up to
    ``k_max`` (default m^2, enough for any finite chain)."""
    P = np.asarray(P, dtype=float)
    m = P.shape[0]
    k_max = k_max or m * m
    B = (P > 0).astype(np.int64)
    cur = B.copy()
    for k in range(1, k_max + 1):
        if np.any(np.all(cur > 0, axis=0)):
            return k
        cur = ((cur @ B) > 0).astype(np.int64)
    return None


# --------------------------------------------------------------------------
# sampling


@numba.njit(cache=True)
def _walk(cum, s0, u):
    n = len(u) + 1
    out = np.empty(n, dtype=np.int64)
    out[0] = s0
    m = cum.shape[1]
    for i in range(1, n):
        row = cum[out[i - 1]]
        v = u[i - 1]
        j = 0
        while j < m - 1 and v >= row[j]:
            j += 1
        out[i] = j
    return out


def _categorical(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(p)
    return np.minimum(np.searchsorted(cum, u, side="right"), len(p) - 1)


def chain_states(spec: MarkovChainSpec, seed: int, n: int) -> np.ndarray:
    s0 = int(_categorical(spec.init, _rng(seed, _INIT).random(1))[0])
    u = _rng(seed, _DYNAMICS).random(n - 1)
    return _walk(np.cumsum(spec.trans, axis=1), s0, u)


def _doubling_hidden(seed: int, n: int) -> np.ndarray:
    # z_i is a 64-bit window of an i.i.d. fair bit stream; z_{i+1} = 2 z_i mod 1
    # shifts the window by one bit, so no precision is lost along the orbit
    bits = (_rng(seed, _DYNAMICS).random(n + 63) < 0.5).astype(np.uint64)
    z = np.zeros(n, dtype=np.uint64)
    for k in range(64):
        z |= bits[k : k + n] << np.uint64(63 - k)
    return z.astype(np.float64) * 2.0**-64


def _require_n(n: int):
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")


def sample_path(spec: ProcessSpec, seed: int, n: int) -> TrainingSet:
    """One dependent path (X_1, Y_1), ..., (X_n, Y_n)."""
    _require_n(n)
    lab_rng = _rng(seed, _LABELS)
    if isinstance(spec, MarkovChainSpec):
        s = chain_states(spec, seed, n)
        return TrainingSet(spec.feature_map[s], _draw_labels(spec.label, s, lab_rng, n), s)
    if isinstance(spec, IidSpec):
        x = spec.x_dist.sample(_rng(seed, _INIT), _rng(seed, _DYNAMICS), n)
        return TrainingSet(x, _draw_labels(spec.label, x, lab_rng, n))
    if isinstance(spec, Ar1Spec):
        x1 = spec.x0 if spec.x0 is not None else spec.marginal_sd * _rng(seed, _INIT).standard_normal()
        e = np.empty(n)
        e[0] = x1
        e[1:] = spec.noise_sd * _rng(seed, _DYNAMICS).standard_normal(n - 1)
        x = np.empty(n)
        acc = 0.0
        for i in range(n):
            acc = spec.rho * acc + e[i] if i else e[0]
            x[i] = acc
        return TrainingSet(x.reshape(-1, 1), _draw_labels(spec.label, x, lab_rng, n))
    if isinstance(spec, NoisyDoublingSpec):
        z = _doubling_hidden(seed, n)
        x = z + spec.noise_sd * _rng(seed, _NOISE).standard_normal(n)
        return TrainingSet(x.reshape(-1, 1), _draw_labels(spec.label, z, lab_rng, n), z)
    raise TypeError(f"unknown process {type(spec).__name__}")


@dataclass(frozen=True)
class StationaryMean:
    """The stationary mean P on X x Y, described by its input law and the
    label model."""

    variant: str
    label: LabelModel
    state_probs: Optional[np.ndarray] = None
    x_sd: Optional[float] = None
    noise_sd: Optional[float] = None
    x_dist: Optional[object] = None


def stationary_mean(spec: ProcessSpec) -> StationaryMean:
    if isinstance(spec, MarkovChainSpec):
        return StationaryMean("markov", spec.label, state_probs=cesaro_limit(spec.trans, spec.init))
    if isinstance(spec, IidSpec):
        return StationaryMean("iid", spec.label, x_dist=spec.x_dist)
    if isinstance(spec, Ar1Spec):
        return StationaryMean("ar1", spec.label, x_sd=spec.marginal_sd)
    if isinstance(spec, NoisyDoublingSpec):
        return StationaryMean("noisy_doubling", spec.label, noise_sd=spec.noise_sd)
    raise TypeError(f"unknown process {type(spec).__name__}")


def sample_stationary(spec: ProcessSpec, seed: int, m: int) -> TrainingSet:
    """m i.i.d. draws from the stationary mean P."""
    _require_n(m)
    P = stationary_mean(spec)
    lab_rng = _rng(seed, _STATIONARY + _LABELS)
    if isinstance(spec, MarkovChainSpec):
        s = _categorical(P.state_probs, _rng(seed, _STATIONARY + _DYNAMICS).random(m))
        return TrainingSet(spec.feature_map[s], _draw_labels(spec.label, s, lab_rng, m), s)
    if isinstance(spec, IidSpec):
        x = spec.x_dist.sample(_rng(seed, _STATIONARY + _INIT), _rng(seed, _STATIONARY + _DYNAMICS), m)
        return TrainingSet(x, _draw_labels(spec.label, x, lab_rng, m))
    if isinstance(spec, Ar1Spec):
        x = P.x_sd * _rng(seed, _STATIONARY + _DYNAMICS).standard_normal(m)
        return TrainingSet(x.reshape(-1, 1), _draw_labels(spec.label, x, lab_rng, m))
    z = _rng(seed, _STATIONARY + _DYNAMICS).random(m)
    x = z + spec.noise_sd * _rng(seed, _STATIONARY + _NOISE).standard_normal(m)
    return TrainingSet(x.reshape(-1, 1), _draw_labels(spec.label, z, lab_rng, m), z)


# --------------------------------------------------------------------------
# Bayes risk


def _feature_groups(spec: MarkovChainSpec):
    _, inv = np.unique(spec.feature_map, axis=0, return_inverse=True)
    return inv.reshape(-1)


def _x_pdf_1d(spec: ProcessSpec):
    if isinstance(spec, Ar1Spec):
        sd = spec.marginal_sd
        return (lambda x: stats.norm.pdf(x, 0.0, sd)), (-np.inf, np.inf)
    if isinstance(spec, IidSpec):
        if spec.input_dim != 1:
            raise UnsupportedLossError("numeric Bayes risk with x-dependent labels needs 1-d inputs")
        return spec.x_dist.pdf_1d, spec.x_dist.support_1d()
    raise TypeError(type(spec).__name__)


def _integrate_x(g, pdf, support) -> float:
    lo, hi = support
    if np.isinf(lo):
        parts = [(-np.inf, 0.0), (0.0, np.inf)]
    else:
        parts = [(lo, hi)]
    total = 0.0
    for a, b in parts:
        v, _ = integrate.quad(lambda x: g(x) * pdf(x), a, b, epsabs=1e-12, epsrel=1e-9, limit=400)
        total += v
    return total


def _doubling_eta_obs(spec: NoisyDoublingSpec, x: float) -> float:
    s = spec.noise_sd
    eta = spec.label.eta
    num, _ = integrate.quad(lambda z: float(eta(np.array([z]))[0]) * stats.norm.pdf(x - z, 0, s), 0.0, 1.0, epsabs=1e-13, epsrel=1e-10)
    den = stats.norm.cdf(x / s) - stats.norm.cdf((x - 1.0) / s)
    return num / den if den > 0 else 0.5


def bayes_risk(spec: ProcessSpec, loss: LossSpec) -> float:
    """Bayes risk R*_{L,P} under the stationary mean.

    Regression labels have symmetric noise, so for the (even, convex)
    distance losses the conditional minimizer is the conditional mean and
    the Bayes risk is E psi(noise), integrated by quadrature.
    """
    label = spec.label
    if isinstance(label, Classification):
        inner = lambda eta: inner_bayes_classification(loss, eta)  # noqa: E731
        if isinstance(spec, MarkovChainSpec):
            pi = cesaro_limit(spec.trans, spec.init)
            grp = _feature_groups(spec)
            etas = label.eta(np.arange(spec.m))
            total = 0.0
            for g in np.unique(grp):
                idx = grp == g
                mass = pi[idx].sum()
                if mass > 0:
                    total += mass * float(inner(np.dot(pi[idx], etas[idx]) / mass))
            return total
        if label.eta.is_constant:
            return float(inner(label.eta.value))
        if isinstance(spec, NoisyDoublingSpec):
            s = spec.noise_sd
            pdf = lambda x: stats.norm.cdf(x / s) - stats.norm.cdf((x - 1.0) / s)  # noqa: E731
            g = lambda x: float(inner(_doubling_eta_obs(spec, x)))  # noqa: E731
            lo, hi = -12 * s, 1 + 12 * s
            v, _ = integrate.quad(lambda x: g(x) * pdf(x), lo, hi, epsabs=1e-10, epsrel=1e-7, limit=400)
            return v
        pdf, support = _x_pdf_1d(spec)
        return _integrate_x(lambda x: float(inner(label.eta(np.array([[x]]))[0])), pdf, support)

    if loss.family is not Family.DISTANCE:
        raise UnsupportedLossError(f"{loss.kind.value} cannot be paired with real-valued labels")
    if isinstance(spec, MarkovChainSpec) and len(np.unique(_feature_groups(spec))) < spec.m and label.mean.kind == "table":
        means = label.mean(np.arange(spec.m))
        grp = _feature_groups(spec)
        if any(np.ptp(means[grp == g]) > 0 for g in np.unique(grp)):
            raise UnsupportedLossError("states sharing a feature vector have different regression means")
    if isinstance(spec, NoisyDoublingSpec) and label.mean.kind != "constant":
        raise UnsupportedLossError("regression on the hidden doubling state has no closed-form conditional law")
    return label.noise.expect(lambda e: float(evaluate(loss, e, 0.0, check=False)))


# --------------------------------------------------------------------------
# law-of-large-numbers diagnostics

TestFunction = Callable[[np.ndarray, np.ndarray, Optional[np.ndarray]], np.ndarray]


def state_indicator(state: int) -> TestFunction:
    def f(xs, ys, states):
        return (np.asarray(states) == state).astype(float)

    f.__name__ = f"state_{state}"
    return f


def constant_function(c: float) -> TestFunction:
    def f(xs, ys, states):
        return np.full(len(ys), float(c))

    f.__name__ = f"const_{c:g}"
    return f


def x_threshold(t: float) -> TestFunction:
    def f(xs, ys, states):
        return (np.asarray(xs)[:, 0] <= t).astype(float)

    f.__name__ = f"x_le_{t:g}"
    return f


def label_indicator() -> TestFunction:
    def f(xs, ys, states):
        return (np.asarray(ys) > 0).astype(float)

    f.__name__ = "y_pos"
    return f


def stationary_expectation(spec: ProcessSpec, f: TestFunction, m: int = 1_000_000, seed: int = 0) -> float:
    """E_P f: exact for chains with classification labels, Monte Carlo otherwise."""
    if isinstance(spec, MarkovChainSpec) and isinstance(spec.label, Classification):
        pi = cesaro_limit(spec.trans, spec.init)
        s = np.arange(spec.m)
        xs = spec.feature_map
        eta = spec.label.eta(s)
        return float(pi @ (eta * f(xs, np.ones(spec.m), s) + (1 - eta) * f(xs, -np.ones(spec.m), s)))
    S = sample_stationary(spec, seed, m)
    return float(np.mean(f(S.xs, S.ys, S.states)))


@dataclass
class LlnRow:
    n: int
    seed: int
    deviation: float


def lln_diagnostic(spec: ProcessSpec, f: TestFunction, n_grid: Sequence[int], seeds: Sequence[int], expected: Optional[float] = None):
    """|(1/n) sum_{i<=n} f(Z_i) - E_P f| for each n in the grid and seed.

    One path per seed of length max(n_grid); the prefix property makes
    every grid point an honest path of that length.
    """
    if expected is None:
        expected = stationary_expectation(spec, f)
    grid = sorted(int(n) for n in n_grid)
    rows = []
    for seed in seeds:
        T = sample_path(spec, seed, grid[-1])
        v = np.asarray(f(T.xs, T.ys, T.states), dtype=float)
        if np.any(~np.isfinite(v)):
            raise ValueError("test function must be bounded")
        csum = np.cumsum(v)
        for n in grid:
            rows.append(LlnRow(n, int(seed), abs(csum[n - 1] / n - expected)))
    return rows


def lln_summary(rows, quantiles=(0.5, 0.9)):
    """{n: {"median": ..., "q90": ..., "max": ...}}."""
    out = {}
    for n in sorted({r.n for r in rows}):
        d = np.array([r.deviation for r in rows if r.n == n])
        entry = {f"q{int(round(q * 100))}": float(np.quantile(d, q)) for q in quantiles}
        entry["max"] = float(d.max())
        out[n] = entry
    return out


def future_risk(spec: ProcessSpec, f, loss: LossSpec, seed: int, n0: int, window: int) -> float:
    """Average loss of ``f`` over Z_{n0+1}, ..., Z_{n0+window} of the path
    with the given seed (the path whose first n0 points are the training
    data)."""
    T = sample_path(spec, seed, n0 + window)
    xs, ys = T.xs[n0:], T.ys[n0:]
    return float(np.mean(evaluate(loss, ys, f(xs))))

"""Kernels, Gram matrices and finite kernel expansions f = sum_i c_i k(x_i, .)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class KernelKind(enum.Enum):
    GAUSSIAN = "gaussian"
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"


class KernelMismatchError(ValueError):
    pass


class UnboundedKernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Kernel on R^input_dim.

    The Gaussian kernel uses the inverse-width convention
    ``k(x, x') = exp(-sigma^2 |x - x'|^2)``.
    """

    kind: KernelKind
    input_dim: int = 1
    sigma: float = 1.0
    degree: int = 2
    offset: float = 0.0

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.kind is KernelKind.GAUSSIAN and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind is KernelKind.POLYNOMIAL:
            if self.degree < 1 or int(self.degree) != self.degree:
                raise ValueError("degree must be a positive integer")
            if self.offset < 0:
                raise ValueError("offset must be nonnegative")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "input_dim": self.input_dim}
        if self.kind is KernelKind.GAUSSIAN:
            d["sigma"] = self.sigma
        elif self.kind is KernelKind.POLYNOMIAL:
            d.update(degree=self.degree, offset=self.offset)
        return d


def gaussian(sigma: float = 1.0, input_dim: int = 1) -> KernelSpec:
    return KernelSpec(KernelKind.GAUSSIAN, input_dim=input_dim, sigma=sigma)


def as_points(x, dim: int) -> np.ndarray:
    """Coerce to an (n, dim) float array."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if dim == 1 else a.reshape(1, -1)
    if a.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {a.shape[1]}")
    return a


def cross_gram(k: KernelSpec, a, b) -> np.ndarray:
    a = as_points(a, k.input_dim)
    b = as_points(b, k.input_dim)
    if k.kind is KernelKind.GAUSSIAN:
        if k.input_dim == 1:
            d2 = (a[:, 0][:, None] - b[:, 0][None, :]) ** 2
        else:
            d2 = (
                np.sum(a * a, axis=1)[:, None]
                + np.sum(b * b, axis=1)[None, :]
                - 2.0 * a @ b.T
            )
            np.maximum(d2, 0.0, out=d2)
        return np.exp(-(k.sigma**2) * d2)
    ip = a @ b.T
    if k.kind is KernelKind.LINEAR:
        return ip
    return (ip + k.offset) ** k.degree


def gram(k: KernelSpec, pts) -> np.ndarray:
    g = cross_gram(k, pts, pts)
    # exact symmetry regardless of the floating evaluation order
    return 0.5 * (g + g.T)


def k_eval(k: KernelSpec, x, xp) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != (k.input_dim,) or xp.shape != (k.input_dim,):
        raise ValueError(
            f"dimension mismatch: kernel expects {k.input_dim}, got {x.shape} and {xp.shape}"
        )
    return float(cross_gram(k, x[None, :], xp[None, :])[0, 0])


def sup_norm(k: KernelSpec, domain_bound: Optional[float] = None) -> float:
    """sup_x sqrt(k(x, x)) over the ball of radius ``domain_bound``."""
    if k.kind is KernelKind.GAUSSIAN:
        return 1.0
    if domain_bound is None:
        raise UnboundedKernelError(f"{k.kind.value} kernel needs a domain bound")
    r = float(domain_bound)
    if k.kind is KernelKind.LINEAR:
        return r
    return (r * r + k.offset) ** (k.degree / 2.0)


@dataclass(frozen=True, eq=False)
class RkhsFunction:
    """f = sum_i coeffs[i] * k(points[i], .)."""

    kernel: KernelSpec
    points: np.ndarray
    coeffs: np.ndarray
    _gram: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pts = as_points(self.points, self.kernel.input_dim) if np.size(self.points) else np.zeros((0, self.kernel.input_dim))
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if len(c) != len(pts):
            raise ValueError("points and coeffs differ in length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x) -> np.ndarray:
        x = as_points(x, self.kernel.input_dim)
        if len(self.coeffs) == 0:
            return np.zeros(len(x))
        out = np.empty(len(x))
        # chunked to bound memory for large evaluation sets
        step = max(1, 4_000_000 // max(1, len(self.coeffs)))
        for s in range(0, len(x), step):
            out[s : s + step] = cross_gram(self.kernel, x[s : s + step], self.points) @ self.coeffs
        return out

    def gram(self) -> np.ndarray:
        if self._gram is None:
            object.__setattr__(self, "_gram", gram(self.kernel, self.points))
        return self._gram

    def __add__(self, other: "RkhsFunction") -> "RkhsFunction":
        return combine(self, other, 1.0, 1.0)

    def __sub__(self, other: "RkhsFunction") -> "RkhsFunction":
        return combine(self, other, 1.0, -1.0)

    def scaled(self, s: float) -> "RkhsFunction":
        return RkhsFunction(self.kernel, self.points, s * self.coeffs, self._gram)


def zero_function(k: KernelSpec) -> RkhsFunction:
    return RkhsFunction(k, np.zeros((0, k.input_dim)), np.zeros(0))


def section(k: KernelSpec, x) -> RkhsFunction:
    """The kernel section k(x, .)."""
    return RkhsFunction(k, as_points(x, k.input_dim)[:1], np.ones(1))


def unique_points(pts: np.ndarray):
    """Deduplicate rows by exact coordinate equality.

    Returns ``(unique, inverse)`` with ``pts == unique[inverse]``; unique
    rows keep first-occurrence order.
    """
    if len(pts) == 0:
        return pts, np.zeros(0, dtype=int)
    _, first, inv = np.unique(pts, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return pts[np.sort(first)], rank[inv]


def combine(f: RkhsFunction, g: RkhsFunction, a: float, b: float) -> RkhsFunction:
    """a*f + b*g as a single expansion over the merged point set."""
    if f.kernel != g.kernel:
        raise KernelMismatchError(f"{f.kernel} vs {g.kernel}")
    pts = np.vstack([f.points, g.points])
    c = np.concatenate([a * f.coeffs, b * g.coeffs])
    u, inv = unique_points(pts)
    merged = np.zeros(len(u))
    np.add.at(merged, inv, c)
    return RkhsFunction(f.kernel, u, merged)


def _quad_norm(K: np.ndarray, c: np.ndarray) -> float:
    return math.sqrt(max(0.0, float(c @ K @ c)))


def rkhs_norm(f: RkhsFunction) -> float:
    if len(f.coeffs) == 0:
        return 0.0
    return _quad_norm(f.gram(), f.coeffs)


def rkhs_diff_norm(f: RkhsFunction, g: RkhsFunction) -> float:
    """||f - g||_H computed on the union expansion."""
    return rkhs_norm(combine(f, g, 1.0, -1.0))


def rkhs_inner(f: RkhsFunction, g: RkhsFunction) -> float:
    if f.kernel != g.kernel:
        raise KernelMismatchError(f"{f.kernel} vs {g.kernel}")
    if len(f.coeffs) == 0 or len(g.coeffs) == 0:
        return 0.0
    return float(f.coeffs @ cross_gram(f.kernel, f.points, g.points) @ g.coeffs)

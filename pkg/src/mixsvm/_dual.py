"""Dual coordinate ascent for  min_f  lam ||f||_H^2 + (1/n) sum_u w_u L(y_u, f(x_u)).

With f = sum_u s_u a_u k(x_u, .), s_u = w_u / (2 lam n), each dual variable
``a_u`` is a (negated) subgradient of the loss at the optimum. The duality
gap  (1/n) sum_u w_u [L(y_u, F_u) - g(a_u) + a_u F_u]  with
g(a) = -L*(y, -a) certifies suboptimality of the primal iterate.
"""

import math

import numba
import numpy as np

HINGE = 0
SQUARED_HINGE = 1
LOGISTIC = 2
LEAST_SQUARES = 3
ABSOLUTE = 4
EPS_INSENSITIVE = 5
HUBER = 6


@numba.njit(cache=True)
def _loss(kind, y, t, eps, delta):
    if kind == HINGE:
        return max(0.0, 1.0 - y * t)
    if kind == SQUARED_HINGE:
        v = max(0.0, 1.0 - y * t)
        return v * v
    if kind == LOGISTIC:
        u = y * t
        if u > 0:
            return math.log1p(math.exp(-u))
        return -u + math.log1p(math.exp(u))
    r = y - t
    if kind == LEAST_SQUARES:
        return r * r
    if kind == ABSOLUTE:
        return abs(r)
    if kind == EPS_INSENSITIVE:
        return max(0.0, abs(r) - eps)
    a = abs(r)
    if a <= delta:
        return 0.5 * r * r
    return delta * a - 0.5 * delta * delta


@numba.njit(cache=True)
def _dual_term(kind, y, a, eps, delta):
    if kind == HINGE:
        return a * y
    if kind == SQUARED_HINGE:
        b = a * y
        return b - 0.25 * b * b
    if kind == LOGISTIC:
        b = a * y
        v = 0.0
        if b > 0.0:
            v -= b * math.log(b)
        if b < 1.0:
            v -= (1.0 - b) * math.log1p(-b)
        return v
    if kind == LEAST_SQUARES:
        return a * y - 0.25 * a * a
    if kind == ABSOLUTE:
        return a * y
    if kind == EPS_INSENSITIVE:
        return a * y - eps * abs(a)
    return a * y - 0.5 * a * a


@numba.njit(cache=True)
def _update(kind, y, a0, F, q, eps, delta):
    """Exact maximizer over a of g(a) - (a - a0) F - q (a - a0)^2 / 2."""
    if kind == HINGE:
        b0 = a0 * y
        b = min(1.0, max(0.0, b0 + (1.0 - y * F) / q))
        return b * y
    if kind == SQUARED_HINGE:
        b0 = a0 * y
        b = max(0.0, (1.0 - y * F + q * b0) / (q + 0.5))
        return b * y
    if kind == LOGISTIC:
        # root of log((1-b)/b) - yF - q (b - b0) on (0, 1); decreasing in b
        b0 = a0 * y
        lo = 0.0
        hi = 1.0
        b = min(max(b0, 1e-12), 1.0 - 1e-12)
        for _ in range(100):
            val = math.log((1.0 - b) / b) - y * F - q * (b - b0)
            if val > 0:
                lo = b
            else:
                hi = b
            der = -1.0 / (b * (1.0 - b)) - q
            nb = b - val / der
            if not (lo < nb < hi):
                nb = 0.5 * (lo + hi)
            if abs(nb - b) <= 1e-16 + 1e-15 * b:
                b = nb
                break
            b = nb
        return b * y
    if kind == LEAST_SQUARES:
        return (y - F + q * a0) / (q + 0.5)
    if kind == ABSOLUTE:
        return min(1.0, max(-1.0, a0 + (y - F) / q))
    if kind == EPS_INSENSITIVE:
        z = a0 + (y - F) / q
        th = eps / q
        if z > th:
            a = z - th
        elif z < -th:
            a = z + th
        else:
            a = 0.0
        return min(1.0, max(-1.0, a))
    a = (y - F + q * a0) / (1.0 + q)
    return min(delta, max(-delta, a))


@numba.njit(cache=True)
def _gap(kind, y, w, a, F, n_total, eps, delta):
    p = 0.0
    d = 0.0
    g = 0.0
    for u in range(len(y)):
        lv = _loss(kind, y[u], F[u], eps, delta)
        dv = _dual_term(kind, y[u], a[u], eps, delta)
        p += w[u] * lv
        d += w[u] * dv
        g += w[u] * (lv - dv + a[u] * F[u])
    return p / n_total, d / n_total, g / n_total


@numba.njit(cache=True)
def _refresh(K, s, a, F):
    N = len(a)
    for i in range(N):
        acc = 0.0
        for j in range(N):
            acc += K[i, j] * (s[j] * a[j])
        F[i] = acc


@numba.njit(cache=True)
def solve(K, y, w, lam, kind, eps, delta, a, tol, max_epochs, seed):
    """Run coordinate ascent in place on ``a``.

    Returns (F, epochs, primal, dual, gap). ``F`` holds f(x_u).
    """
    N = len(y)
    n_total = 0.0
    for u in range(N):
        n_total += w[u]
    s = np.empty(N)
    for u in range(N):
        s[u] = w[u] / (2.0 * lam * n_total)
    F = np.empty(N)
    _refresh(K, s, a, F)
    np.random.seed(seed)
    order = np.arange(N)
    primal, dual, gap = _gap(kind, y, w, a, F, n_total, eps, delta)
    reg = 0.0
    for u in range(N):
        reg += s[u] * a[u] * F[u]
    primal += lam * reg
    dual -= lam * reg
    epochs = 0
    check = 1
    while epochs < max_epochs:
        if gap <= tol * max(1.0, abs(primal)):
            break
        np.random.shuffle(order)
        for idx in range(N):
            u = order[idx]
            q = max(s[u] * K[u, u], 1e-300)
            a_new = _update(kind, y[u], a[u], F[u], q, eps, delta)
            da = a_new - a[u]
            if da != 0.0:
                a[u] = a_new
                c = da * s[u]
                for i in range(N):
                    F[i] += c * K[i, u]
        epochs += 1
        if epochs % check == 0 or epochs >= max_epochs:
            _refresh(K, s, a, F)
            primal, dual, gap = _gap(kind, y, w, a, F, n_total, eps, delta)
            reg = 0.0
            for u in range(N):
                reg += s[u] * a[u] * F[u]
            primal += lam * reg
            dual -= lam * reg
            if check < 16:
                check *= 2
    return F, epochs, primal, dual, gap

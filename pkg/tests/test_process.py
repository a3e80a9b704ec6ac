import math

import numpy as np
import pytest
from scipy import stats

from mixsvm import loss as L
from mixsvm import process as P

STICKY = [[0.9, 0.1], [0.1, 0.9]]
FLIP = [[0.0, 1.0], [1.0, 0.0]]


def cls(eta):
    return P.Classification(P.EtaModel("table", values=tuple(eta)))


def brute_cesaro(trans, init, n=20000):
    trans, mu = np.asarray(trans, float), np.asarray(init, float)
    acc = np.zeros_like(mu)
    for _ in range(n):
        acc += mu
        mu = mu @ trans
    return acc / n


def test_identity_chain_is_constant():
    spec = P.chain(np.eye(3), init=[0, 1, 0])
    T = P.sample_path(spec, 5, 200)
    assert np.all(T.states == 1)


def test_prefix_property_all_variants():
    specs = [
        P.chain(STICKY, eta=[0.8, 0.2]),
        P.IidSpec(P.GaussianMixture((0.3, 0.7), ((-1.0,), (2.0,)), (0.5, 1.0)), P.Classification(P.EtaModel("logistic"))),
        P.Ar1Spec(0.7, 1.0, P.Regression(P.MeanModel("sine"), P.Noise("laplace", 0.3))),
        P.NoisyDoublingSpec(0.05, P.Classification(P.EtaModel("threshold", threshold=0.5, low=0.1, high=0.9))),
    ]
    for spec in specs:
        long = P.sample_path(spec, 11, 300)
        for n in (1, 2, 57, 299):
            short = P.sample_path(spec, 11, n)
            assert np.array_equal(short.xs, long.xs[:n])
            assert np.array_equal(short.ys, long.ys[:n])
        again = P.sample_path(spec, 11, 300)
        assert np.array_equal(again.xs, long.xs) and np.array_equal(again.ys, long.ys)


def test_iid_lag_one_correlation_vanishes():
    spec = P.IidSpec(P.UniformBox((0.0,), (1.0,)), P.Classification(P.EtaModel("constant", value=0.5)))
    n, ok = 10_000, 0
    for seed in range(100):
        x = P.sample_path(spec, seed, n).xs[:, 0]
        ok += abs(np.corrcoef(x[:-1], x[1:])[0, 1]) <= 3 / math.sqrt(n)
    assert ok >= 95


def test_sticky_chain_state_frequency():
    spec = P.chain(STICKY, init=[0.5, 0.5])
    T = P.sample_path(spec, 0, 10_000)
    assert abs(np.mean(T.states == 0) - 0.5) <= 0.05


def test_chain_transition_counts_match():
    trans = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]])
    T = P.sample_path(P.chain(trans), 1, 200_000)
    s = T.states
    counts = np.zeros((3, 3))
    np.add.at(counts, (s[:-1], s[1:]), 1)
    emp = counts / counts.sum(1, keepdims=True)
    assert np.allclose(emp, trans, atol=0.01)


def test_cesaro_limit_examples():
    assert np.allclose(P.cesaro_limit(STICKY, [1, 0]), [0.5, 0.5])
    assert np.allclose(P.cesaro_limit(FLIP, [1, 0]), [0.5, 0.5])
    pi = P.stationary_distribution(STICKY)
    assert np.allclose(P.stationary_mean(P.chain(STICKY, init=pi)).state_probs, pi)


@pytest.mark.parametrize("seed", range(6))
def test_cesaro_limit_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 6))
    trans = rng.random((m, m)) * (rng.random((m, m)) < 0.5)
    # make some classes transient / absorbing / periodic
    trans[np.arange(m), rng.integers(0, m, m)] += 0.5
    if seed % 3 == 0:
        trans[0] = 0
        trans[0, 0] = 1
    trans /= trans.sum(1, keepdims=True)
    init = rng.dirichlet(np.ones(m))
    assert np.allclose(P.cesaro_limit(trans, init), brute_cesaro(trans, init, 40_000), atol=2e-4)


def test_period_two_exact_cesaro_rate():
    marg = P.cesaro_marginals(P.chain(FLIP, init=[1, 0]), 10_000)
    n = np.arange(1, 10_001)
    assert np.all(np.abs(marg[:, 0] - 0.5) <= 1 / (2 * n) + 1e-15)


def test_validation_errors():
    with pytest.raises(P.ProcessConfigError, match="row-stochastic"):
        P.MarkovChainSpec(np.array([[0.5, 0.4], [0.5, 0.5]]), np.array([0.5, 0.5]), np.zeros((2, 1)), cls([0.5, 0.5]))
    with pytest.raises(P.ProcessConfigError):
        P.Ar1Spec(1.0, 1.0, cls([]))
    with pytest.raises(P.ProcessConfigError):
        P.NoisyDoublingSpec(0.0, cls([]))
    with pytest.raises(P.ProcessConfigError):
        P.Regression(P.MeanModel("constant"), P.Noise("student_t", 1.0, df=3.0), q=4.0)
    with pytest.raises(ValueError):
        P.sample_path(P.chain(STICKY), 0, 0)
    with pytest.raises(ValueError):
        P.sample_stationary(P.chain(STICKY), 0, 0)


def test_stationary_sampling():
    spec = P.chain([[0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [0.1, 0.1, 0.8]], init=[1, 0, 0])
    pi = P.cesaro_limit(spec.trans, spec.init)
    m = 50_000
    S = P.sample_stationary(spec, 4, m)
    for s in range(3):
        assert abs(np.mean(S.states == s) - pi[s]) <= 3 * math.sqrt(pi[s] * (1 - pi[s]) / m)
    S2 = P.sample_stationary(spec, 4, m)
    assert np.array_equal(S.xs, S2.xs) and np.array_equal(S.ys, S2.ys)


def test_ar1_marginals():
    spec = P.Ar1Spec(0.8, 0.6, P.Classification(P.EtaModel("constant", value=0.5)), x0=None)
    x = np.concatenate([P.sample_path(spec, s, 2000).xs[:, 0] for s in range(20)])
    assert np.std(x) == pytest.approx(spec.marginal_sd, rel=0.05)
    S = P.sample_stationary(spec, 1, 100_000)
    assert stats.kstest(S.xs[:, 0], "norm", args=(0, spec.marginal_sd)).pvalue > 1e-3


def test_doubling_dynamics_exact():
    z = P._doubling_hidden(3, 500)
    assert np.all((z >= 0) & (z < 1))
    # z_{i+1} = 2 z_i mod 1; the window is exact, the float64 view rounds at 2^-53
    assert np.all(np.abs((2 * z[:-1]) % 1 - z[1:]) <= 2.0**-52)
    # no collapse to zero along long orbits
    assert np.mean(P._doubling_hidden(4, 5000)[-1000:]) == pytest.approx(0.5, abs=0.05)
    spec = P.NoisyDoublingSpec(0.1, P.Classification(P.EtaModel("constant", value=0.5)))
    x = P.sample_path(spec, 0, 200_000).xs[:, 0]
    # uniform[0,1) convolved with N(0, 0.01): mean 0.5, var 1/12 + 0.01
    assert np.mean(x) == pytest.approx(0.5, abs=0.01)
    assert np.var(x) == pytest.approx(1 / 12 + 0.01, abs=0.003)


def test_regression_moments_finite():
    spec = P.Ar1Spec(0.5, 1.0, P.Regression(P.MeanModel("linear", weight=(1.0,)), P.Noise("student_t", 1.0, df=6.0), q=4.0))
    y = P.sample_path(spec, 0, 200_000).ys
    m4 = np.mean(np.abs(y) ** 4)
    assert np.isfinite(m4)
    # halves of the path agree on the q-th moment (no heavy-tail blow-up)
    a, b = np.mean(np.abs(y[:100_000]) ** 4), np.mean(np.abs(y[100_000:]) ** 4)
    assert abs(a - b) / m4 < 0.5


# -- Bayes risk ---------------------------------------------------------------


def test_bayes_risk_examples():
    const = lambda v: P.IidSpec(P.UniformBox((0.0,), (1.0,)), P.Classification(P.EtaModel("constant", value=v)))  # noqa: E731
    assert P.bayes_risk(const(0.8), L.hinge()) == pytest.approx(0.4, abs=1e-15)
    assert P.bayes_risk(const(1.0), L.hinge()) == 0
    reg = P.Ar1Spec(0.5, 1.0, P.Regression(P.MeanModel("sine"), P.Noise("gaussian", 0.7)))
    assert P.bayes_risk(reg, L.least_squares()) == pytest.approx(0.49, rel=1e-8)
    assert P.bayes_risk(P.chain(STICKY, eta=[0.8, 0.2]), L.hinge()) == pytest.approx(0.4, abs=1e-15)


@pytest.mark.parametrize("s,eps", [(0.5, 0.1), (1.0, 0.5), (0.3, 1.0)])
def test_eps_bayes_risk_closed_form(s, eps):
    # E max(0, |e| - eps) for e ~ N(0, s^2)
    oracle = 2 * (s * stats.norm.pdf(eps / s) - eps * stats.norm.sf(eps / s))
    spec = P.Ar1Spec(0.5, 1.0, P.Regression(P.MeanModel("sine"), P.Noise("gaussian", s), q=4.0))
    assert P.bayes_risk(spec, L.eps_insensitive(eps)) == pytest.approx(oracle, rel=1e-8)


def test_chain_bayes_risk_merges_shared_features():
    # both states map to the same input: the predictor sees the mixture eta
    spec = P.chain(STICKY, feature_map=[[0.0], [0.0]], eta=[0.8, 0.2])
    assert P.bayes_risk(spec, L.hinge()) == pytest.approx(1.0)


def test_bayes_risk_x_dependent_eta_quadrature():
    spec = P.IidSpec(P.UniformBox((0.0,), (1.0,)), P.Classification(P.EtaModel("threshold", threshold=0.3, low=0.1, high=0.7)))
    assert P.bayes_risk(spec, L.hinge()) == pytest.approx(0.3 * 0.2 + 0.7 * 0.6, abs=1e-7)


def test_bayes_risk_rejects_mismatch():
    spec = P.Ar1Spec(0.5, 1.0, P.Regression(P.MeanModel("sine")))
    with pytest.raises(L.UnsupportedLossError):
        P.bayes_risk(spec, L.hinge())


def test_doubling_bayes_risk_is_a_risk():
    spec = P.NoisyDoublingSpec(0.05, P.Classification(P.EtaModel("threshold", threshold=0.5, low=0.1, high=0.9)))
    b = P.bayes_risk(spec, L.hinge())
    # observation noise can only hurt: between the noiseless 0.2 and chance 1.0
    assert 0.2 < b < 0.35


# -- LLN diagnostics -----------------------------------------------------------


def test_lln_constant_is_exact():
    rows = P.lln_diagnostic(P.chain(STICKY, eta=[0.8, 0.2]), P.constant_function(0.3), [10, 100], [0, 1])
    assert all(r.deviation == pytest.approx(0, abs=1e-15) for r in rows)


def test_lln_state_indicator_on_mixing_chain():
    spec = P.chain(STICKY, eta=[0.8, 0.2])
    rows = P.lln_diagnostic(spec, P.state_indicator(0), [100, 1000, 10_000], range(100))
    summ = P.lln_summary(rows)
    assert summ[10_000]["q50"] <= 0.02
    assert summ[100]["q50"] > summ[1000]["q50"] > summ[10_000]["q50"]


def test_lln_period_two_decays():
    spec = P.chain(FLIP, init=[1, 0])
    rows = P.lln_diagnostic(spec, P.state_indicator(0), [11, 101, 1001], [0])
    assert [round(r.deviation * r.n * 2) for r in rows] == [1, 1, 1]


def test_future_risk_approaches_population_risk():
    from mixsvm.kernel import gaussian
    from mixsvm.solver import train

    spec = P.chain(STICKY, feature_map=[[0.0], [3.0]], eta=[0.8, 0.2])
    T = P.sample_path(spec, 2, 400)
    sol = train(T, L.hinge(), gaussian(1.0), 0.1)
    pi = P.cesaro_limit(spec.trans, spec.init)
    fx = sol.f(spec.feature_map)
    eta = np.array([0.8, 0.2])
    exact = float(pi @ (eta * L.evaluate(L.hinge(), 1.0, fx) + (1 - eta) * L.evaluate(L.hinge(), -1.0, fx)))
    fut = P.future_risk(spec, sol.f, L.hinge(), 2, 400, 200_000)
    assert fut == pytest.approx(exact, abs=0.02)

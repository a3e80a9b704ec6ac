from fractions import Fraction as F

import pytest

from mixsvm import loss as L
from mixsvm import kernel as K
from mixsvm import process as P
from mixsvm.loss import LossKind, LossSpec
from mixsvm.schedule import (
    ScheduleSpec,
    b_lambda,
    mixing_exponent_from_chain,
    regression_beta,
    validate_classification,
    validate_regression,
)


def test_b_lambda_examples():
    assert b_lambda(1, 1, 1) == 1
    assert b_lambda(1, 1, 0.01) == pytest.approx(10)
    assert b_lambda(1, 4, 1) == 2
    with pytest.raises(ValueError):
        b_lambda(1, 1, 0)


def test_schedule_values():
    s = ScheduleSpec(2, "1/2")
    assert s(4) == 1.0
    assert s.gamma == F(1, 2)
    assert list(s.lambdas([1, 16])) == [2.0, 0.5]
    assert not ScheduleSpec(0.3, 0).is_null_sequence
    with pytest.raises(ValueError):
        ScheduleSpec(0, "1/4")
    with pytest.raises(ValueError):
        ScheduleSpec(1, -1)


def test_classification_examples():
    v = validate_classification(ScheduleSpec(1, "1/4"), L.hinge(), K.gaussian(1.0))
    assert v.valid and v.limiting_exponent == F(1, 2)
    v = validate_classification(ScheduleSpec(1, "1/2"), L.hinge())
    assert not v.valid and v.limiting_exponent == 0
    v = validate_classification(ScheduleSpec(1, 0), L.hinge())
    assert not v.valid and "0" in v.binding_condition
    with pytest.raises(ValueError):
        validate_classification(ScheduleSpec(1, "1/4"), LossSpec(LossKind.ABSOLUTE))


def test_classification_growing_lipschitz():
    # least squares on a bounded label range: |L|_{B,1} grows like B
    ls = L.least_squares((-1, 1))
    assert validate_classification(ScheduleSpec(1, "1/4"), ls).limiting_exponent == 0
    assert validate_classification(ScheduleSpec(1, "1/5"), ls).valid


def test_hinge_accept_region_exact():
    for num in range(0, 41):
        g = F(num, 40)
        v = validate_classification(ScheduleSpec(1, g), L.hinge(), alpha=1)
        assert v.valid == (0 < g < F(1, 2)), g
    assert not validate_classification(ScheduleSpec(1, F(1, 2)), L.hinge()).valid
    assert validate_classification(ScheduleSpec(1, F(1, 2) - F(1, 10**9)), L.hinge()).valid


def test_regression_examples():
    v = validate_regression(ScheduleSpec(1, "1/4"), 1, 1, 1)
    assert v.valid and v.limiting_exponent == F(1, 2)
    v = validate_regression(ScheduleSpec(1, "1/4"), 2, 1, 1)
    assert not v.valid and v.limiting_exponent == 0
    v = validate_regression(ScheduleSpec(1, "1/8"), 2, 1, 1)
    assert v.valid and v.limiting_exponent == F(1, 2)
    with pytest.raises(ValueError):
        validate_regression(ScheduleSpec(1, "1/4"), 3, 1, 1)
    with pytest.raises(ValueError):
        validate_regression(ScheduleSpec(1, "1/4"), 1, 0, 1)


REGRESSION_CASES = [
    # (gamma, p, alpha, beta, margin1 = 2a - p g, margin2 = b - 2 p g)
    ("1/4", 1, 1, 1, F(7, 4), F(1, 2)),
    ("1/8", 2, 1, 1, F(7, 4), F(1, 2)),
    ("1/4", 2, 1, 1, F(3, 2), F(0)),
    ("1/3", "3/2", 1, 1, F(3, 2), F(0)),
    ("1/5", "3/2", "1/2", 1, F(7, 10), F(2, 5)),
    ("1/10", 1, "1/4", "1/2", F(2, 5), F(3, 10)),
    ("1/2", 1, 1, 1, F(3, 2), F(0)),
    ("3/4", 1, "1/4", 1, F(-1, 4), F(-1, 2)),
    ("1/6", 2, "1/6", 1, F(0), F(1, 3)),
    ("1/7", 2, "1/2", "3/4", F(5, 7), F(5, 28)),
    ("1/12", "5/4", "1/3", "1/3", F(9, 16), F(1, 8)),
    ("2/9", 1, 1, "1/3", F(16, 9), F(-1, 9)),
    ("1/20", 2, "1/10", "1/5", F(1, 10), F(0)),
    ("1/100", "3/2", 1, 1, F(397, 200), F(97, 100)),
    ("1/3", 1, "1/6", 1, F(0), F(1, 3)),
    ("1/9", "7/4", "1/2", "1/2", F(29, 36), F(1, 9)),
    ("1/16", 2, "1/8", 1, F(1, 8), F(3, 4)),
    ("0", 1, 1, 1, F(2), F(1)),
    ("2/5", 1, 1, 1, F(8, 5), F(1, 5)),
    ("1/5", 2, "1/5", "4/5", F(0), F(0)),
]


@pytest.mark.parametrize("gamma,p,a,b,m1,m2", REGRESSION_CASES)
def test_regression_margins_exact(gamma, p, a, b, m1, m2):
    v = validate_regression(ScheduleSpec(1, gamma), p, a, b)
    assert v.limiting_exponent == min(m1, m2)
    assert v.valid == (F(gamma) > 0 and m1 > 0 and m2 > 0)
    assert isinstance(v.limiting_exponent, F)


def test_monotone_in_gamma():
    gammas = [F(k, 30) for k in range(1, 30)]
    for p, a, b in [(1, 1, 1), (2, F(1, 2), 1), (F(3, 2), 1, F(1, 2))]:
        flags = [validate_regression(ScheduleSpec(1, g), p, a, b).valid for g in gammas]
        # once invalid, larger gamma stays invalid
        assert flags == sorted(flags, reverse=True)
    flags = [validate_classification(ScheduleSpec(1, g), L.hinge()).valid for g in gammas]
    assert flags == sorted(flags, reverse=True)


def test_regression_beta():
    assert regression_beta(1, 1, 4) == 1
    assert regression_beta(1, 2, 4) == F(1, 2)
    assert regression_beta(1, 2, float("inf")) == 1
    with pytest.raises(ValueError):
        regression_beta(1, 2, 2)


def test_exponent_stationary_flag():
    fit = mixing_exponent_from_chain(P.chain([[0.9, 0.1], [0.1, 0.9]]), [10, 20, 40])
    assert fit.alpha == 1 and fit.alpha_flag == "stationary"


def test_exponent_geometric_bimix():
    fit = mixing_exponent_from_chain(P.chain([[0.9, 0.1], [0.1, 0.9]]), [1000, 2000, 4000, 8000])
    assert fit.beta == pytest.approx(1, abs=0.05)


def test_exponent_iid_chain():
    fit = mixing_exponent_from_chain(P.chain([[0.3, 0.7], [0.3, 0.7]]), [10, 100])
    assert fit.beta == 1 and fit.beta_flag == "independent"


def test_exponent_period_two_h1():
    ch = P.chain([[0, 1], [1, 0]], init=[1, 0])
    fit = mixing_exponent_from_chain(ch, [11, 51, 201, 1001])
    assert fit.alpha == pytest.approx(1, abs=0.01)
    for n, v in zip([11, 51, 201, 1001], fit.h1_values):
        assert v == pytest.approx(1 / (2 * n), abs=1e-12)

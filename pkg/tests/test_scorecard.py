import math

import numpy as np
import pytest

from popstab import scorecard as S
from popstab.scorecard import GroupedCounts, IvBand, ScorecardError, ScorecardModel, WoeTable


def _counts(pairs, total_n, total_d):
    """Pad the given (n_j, d_j) levels with one remainder level."""
    n = [p[0] for p in pairs]
    d = [p[1] for p in pairs]
    n.append(total_n - sum(n))
    d.append(total_d - sum(d))
    return GroupedCounts(tuple(f"L{j}" for j in range(len(n))), tuple(n), tuple(d))


def test_woe_formula_examples():
    table = S.woe(_counts([(100, 5), (100, 20)], 1000, 100))
    assert table.woe[0] == pytest.approx(0.74721, abs=1e-5)
    assert table.woe[1] == pytest.approx(-0.81093, abs=1e-5)
    assert table.woe[0] == pytest.approx(math.log(100 * 95 / (5 * 900)), rel=1e-14)


def test_woe_zero_at_overall_rate():
    table = S.woe(GroupedCounts(("a", "b"), (100, 300), (10, 30)))
    assert table.woe == pytest.approx((0.0, 0.0), abs=1e-15)


def test_iv_example():
    value, band = S.iv(GroupedCounts(("a", "b"), (100, 100), (5, 15)))
    assert value == pytest.approx(0.33607, abs=1e-5)
    assert band is IvBand.STRONG


def test_iv_equals_weighted_woe_sum():
    counts = GroupedCounts(("a", "b", "c"), (120, 300, 80), (9, 40, 21))
    table = S.woe(counts)
    n, d = np.array(counts.n), np.array(counts.d)
    goods = (n - d) / (n - d).sum()
    bads = d / d.sum()
    assert S.iv(counts)[0] == pytest.approx(float(np.sum((goods - bads) * table.woe)), abs=1e-12)


@pytest.mark.parametrize("v,band", [(0.0, IvBand.UNPREDICTIVE), (0.02, IvBand.WEAK), (0.1, IvBand.MEDIUM), (0.3, IvBand.STRONG)])
def test_iv_bands(v, band):
    assert S.iv_band(v) is band


@pytest.mark.parametrize("d", [(0, 10), (50, 10)])
def test_degenerate_level(d):
    counts = GroupedCounts(("a", "b"), (50, 50), d)
    with pytest.raises(ScorecardError) as err:
        S.woe(counts)
    assert err.value.code == "DegenerateLevel"
    assert "a" in str(err.value)


def test_smoothing_makes_degenerate_level_finite():
    table = S.woe(GroupedCounts(("a", "b"), (50, 50), (0, 10)), smoothing=0.5)
    assert all(math.isfinite(w) for w in table.woe)


def test_encode_unknown_level():
    with pytest.raises(ScorecardError) as err:
        WoeTable(("a", "b"), (0.1, -0.1)).encode(["a", "z"])
    assert err.value.code == "UnknownLevel"


# -- logistic fitting


def test_intercept_only_fit():
    y = np.array([1] * 30 + [0] * 70, dtype=float)
    fit = S.fit_logistic_raw(np.ones((100, 1)), y)
    # gradient max-norm below 1e-6 bounds the error by tol / (n p (1 - p))
    assert fit.intercept == pytest.approx(math.log(0.3 / 0.7), abs=1e-6)
    assert fit.coefficients == (0.0,)
    assert fit.dropped == (0,)


def test_recovers_generating_coefficients():
    rng = np.random.default_rng(20240601)
    n = 50_000
    X = rng.normal(size=(n, 2))
    eta = -1.0 + 1.5 * X[:, 0] - 0.75 * X[:, 1]
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    fit = S.fit_logistic_raw(X, y)
    assert fit.coefficients[0] == pytest.approx(1.5, abs=0.05)
    assert fit.coefficients[1] == pytest.approx(-0.75, abs=0.05)
    assert fit.gradient_norm < S.GRADIENT_TOL
    assert all(b >= a for a, b in zip(fit.loglik_history, fit.loglik_history[1:]))


def test_fit_is_deterministic():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(500, 3))
    y = (rng.random(500) < 0.3).astype(float)
    assert S.fit_logistic_raw(X, y) == S.fit_logistic_raw(X, y)


def test_fitted_mean_equals_default_rate():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(2000, 2))
    y = (rng.random(2000) < 1 / (1 + np.exp(-(X[:, 0] - 2)))).astype(float)
    fit = S.fit_logistic_raw(X, y)
    p = S.sigmoid(fit.intercept + X @ np.array(fit.coefficients))
    assert p.mean() == pytest.approx(y.mean(), abs=1e-9)


def test_rank_deficient():
    x = np.arange(100, dtype=float)
    X = np.column_stack([x, 2 * x])
    y = (x > 50).astype(float)
    y[::7] = 1 - y[::7]
    with pytest.raises(ScorecardError) as err:
        S.fit_logistic_raw(X, y)
    assert err.value.code == "RankDeficient"


def test_separation_flagged():
    x = np.linspace(-1, 1, 200)
    y = (x > 0).astype(float)
    assert S.fit_logistic_raw(x, y).separated


def test_iteration_cap_raises():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 2))
    y = (rng.random(300) < 0.4).astype(float)
    with pytest.raises(S.ConvergenceError):
        S.fit_logistic_raw(X, y, max_iter=1, tol=1e-300)


# -- scorecard model and PD groups


def test_predict_pd_intercept_only():
    model = ScorecardModel((), (), -2.1972)
    assert S.predict_pd(model, {"x": ["a"]})[0] == pytest.approx(0.1, abs=1e-4)
    assert S.predict_pd(ScorecardModel((), (), 0.0), {"x": ["a"]})[0] == 0.5


def test_build_scorecard_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    n = 4000
    a = rng.choice(["x", "y", "z"], size=n, p=[0.5, 0.3, 0.2])
    b = rng.choice(["u", "v"], size=n)
    pd = np.where(a == "x", 0.05, np.where(a == "y", 0.12, 0.25)) * np.where(b == "u", 1.0, 1.6)
    y = (rng.random(n) < pd).astype(float)
    model = S.build_scorecard({"A": a, "B": b}, y)
    assert model.attribute_names == ["A", "B"]
    # WOE is ln(goods/bads), so independent attributes get coefficients near -1
    assert all(-1.4 < c < -0.6 for c in model.coefficients)
    path = tmp_path / "model.json"
    model.save(path)
    loaded = ScorecardModel.load(path)
    np.testing.assert_allclose(S.predict_pd(loaded, {"A": a, "B": b}), S.predict_pd(model, {"A": a, "B": b}))
    assert S.predict_pd(model, {"A": a, "B": b}).mean() == pytest.approx(y.mean(), abs=1e-9)


def test_pd_groups_equal_frequency():
    rng = np.random.default_rng(0)
    dev = rng.random(10_000)
    g = S.pd_groups(dev, dev, 10)
    assert g.group_proportions_dev.props == (0.1,) * 10
    assert g.group_proportions_review.props == g.group_proportions_dev.props
    assert all(b > a for a, b in zip(g.cut_points, g.cut_points[1:]))


def test_pd_groups_review_shift():
    dev = np.linspace(0.01, 0.99, 1000)
    g = S.pd_groups(dev, dev[dev > 0.5], 4)
    assert g.group_proportions_review.props[0] == 0.0


def test_pd_groups_too_few_distinct():
    with pytest.raises(ScorecardError) as err:
        S.pd_groups([0.1, 0.2, 0.3] * 10, [0.1], 5)
    assert "3" in str(err.value)
    with pytest.raises(ValueError):
        S.pd_groups([0.1, 0.2], [0.1], 1)

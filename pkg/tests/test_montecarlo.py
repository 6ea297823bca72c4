import numpy as np
import pytest

from popstab import montecarlo as mc
from popstab.metrics import ProportionVector, SnapshotPair, StabilityError
from popstab.montecarlo import McConfig, MetricSelector

Q3 = ProportionVector(("a", "b", "c"), (0.5, 0.3, 0.2))


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(m=100, b=99)
    with pytest.raises(ValueError):
        McConfig(m=100, alpha=1.0)
    with pytest.raises(ValueError):
        McConfig(m=100, seed=-1)
    with pytest.raises(ValueError):
        McConfig(m=100, seed=2**64)


@pytest.mark.parametrize("b,alpha,beta", [(1000, 0.05, 950), (100, 0.05, 95), (10000, 0.01, 9900), (1000, 0.1, 900), (100, 0.34, 66)])
def test_beta_index(b, alpha, beta):
    assert McConfig(m=10, b=b, alpha=alpha).beta == beta


def test_critical_value_is_order_statistic():
    cfg = McConfig(m=500, b=1000, alpha=0.05, seed=11)
    res = mc.critical_value(MetricSelector.PSI, Q3, cfg)
    draws = np.sort(mc.null_draws(MetricSelector.PSI, Q3, cfg))
    assert res.critical_value == draws[949]
    np.testing.assert_array_equal(res.null_draws_sorted, draws)


def test_determinism_and_worker_independence():
    a = mc.critical_value(MetricSelector.KS, Q3, McConfig(m=300, b=9000, seed=5))
    b = mc.critical_value(MetricSelector.KS, Q3, McConfig(m=300, b=9000, seed=5))
    c = mc.critical_value(MetricSelector.KS, Q3, McConfig(m=300, b=9000, seed=5, workers=3))
    assert a.null_draws_sorted.tobytes() == b.null_draws_sorted.tobytes() == c.null_draws_sorted.tobytes()
    d = mc.critical_value(MetricSelector.KS, Q3, McConfig(m=300, b=9000, seed=6))
    assert d.null_draws_sorted.tobytes() != a.null_draws_sorted.tobytes()


def test_prefix_stability_across_b():
    # replication i uses the same stream whatever b is
    small = mc.null_draws(MetricSelector.PSI, Q3, McConfig(m=200, b=5000, seed=2))
    large = mc.null_draws(MetricSelector.PSI, Q3, McConfig(m=200, b=9000, seed=2))
    np.testing.assert_array_equal(small, large[:5000])


def test_multinomial_counts_sum_and_mean():
    rng = mc.block_generator(0, 0)
    q = np.array([0.1, 0.2, 0.3, 0.4])
    counts = mc.multinomial_counts(rng, 50, q, 20000)
    assert counts.shape == (20000, 4)
    assert np.all(counts.sum(axis=1) == 50)
    assert np.all(counts >= 0)
    np.testing.assert_allclose(counts.mean(axis=0) / 50, q, atol=0.005)
    # binomial marginal variance m q (1-q)
    np.testing.assert_allclose(counts.var(axis=0), 50 * q * (1 - q), rtol=0.05)


def test_multinomial_zero_level_never_drawn():
    counts = mc.multinomial_counts(mc.block_generator(1, 0), 30, np.array([0.5, 0.0, 0.5]), 1000)
    assert np.all(counts[:, 1] == 0)


def test_sample_null_proportions():
    p = mc.sample_null_proportions(Q3, 1000, mc.block_generator(3, 0))
    assert p.levels == Q3.levels
    assert abs(sum(p.props) - 1) < 1e-12


def test_p_value_in_unit_interval_and_identity_is_one():
    pair = SnapshotPair(Q3, Q3, review_count=400)
    res = mc.p_value(MetricSelector.PSI, pair, McConfig(m=400, b=1000, seed=1))
    assert res.observed == 0.0
    assert res.p_value == 1.0


def test_p_value_small_for_large_shift():
    pair = SnapshotPair.from_props([0.5, 0.3, 0.2], [0.3, 0.5, 0.2])
    res = mc.p_value(MetricSelector.OVERLAPPING_COMPLEMENT, pair, McConfig(m=1000, b=1000, seed=1))
    assert res.observed == pytest.approx(0.2)
    assert res.p_value == 0.0


def test_selector_parse():
    assert MetricSelector.parse("gamma") is MetricSelector.EFFECT_SIZE_GAMMA
    assert MetricSelector.parse("Overlapping") is MetricSelector.OVERLAPPING_COMPLEMENT
    with pytest.raises(ValueError):
        MetricSelector.parse("chi2")


def test_ks_nominal_rejected():
    q = ProportionVector(("a", "b"), (0.5, 0.5), ordinal=False)
    with pytest.raises(StabilityError):
        mc.critical_value(MetricSelector.KS, q, McConfig(m=10, b=100))


def test_dpv_zero_baseline_rejected():
    q = ProportionVector(("a", "b", "c"), (0.5, 0.5, 0.0))
    with pytest.raises(StabilityError):
        mc.critical_value(MetricSelector.DPV, q, McConfig(m=10, b=100))


def test_result_to_dict_records_generator():
    res = mc.critical_value(MetricSelector.PSI, Q3, McConfig(m=50, b=100, seed=0))
    d = res.to_dict()
    assert d["generator"] == mc.GENERATOR_NAME
    assert d["critical_value"] == res.critical_value

import filecmp
import itertools

import numpy as np
import pytest

from popstab import simulation as sim
from popstab.simulation import AttributeConfig, ScenarioConfig, Which


def test_builtin_scenarios():
    names = [s.name for s in sim.builtin_scenarios()]
    assert names == ["stable", "stable-outcome", "unstable"]
    assert sim.get_scenario("Stable_Outcome").name == "stable-outcome"
    with pytest.raises(KeyError):
        sim.get_scenario("volatile")


def test_attribute_tables_are_distributions():
    for attr in sim.BASE_ATTRIBUTES:
        assert abs(sum(attr.props) - 1) < 1e-9
        assert len(attr.bad_ratios) == len(attr.levels)
    for overrides in (sim.STABLE_OUTCOME_OVERRIDES, sim.UNSTABLE_OVERRIDES):
        for props in overrides.values():
            assert abs(sum(props) - 1) < 1e-9


def test_mean_pd_matches_brute_force_on_small_model():
    attrs = (
        AttributeConfig("A", ("a0", "a1"), (0.7, 0.3), (1.0, 4.0)),
        AttributeConfig("B", ("b0", "b1", "b2"), (0.5, 0.3, 0.2), (1.0, 2.0, 30.0)),
    )
    config = ScenarioConfig("small", attrs, {"A": (0.5, 0.5)}, target_bad_rate=0.2)
    c = sim.calibration_constant(config)
    for which in Which:
        use = config.attributes_for(which)
        brute = 0.0
        for cells in itertools.product(*(range(len(a.levels)) for a in use)):
            w = np.prod([a.props[j] for a, j in zip(use, cells)])
            r = np.prod([a.bad_ratios[j] for a, j in zip(use, cells)])
            brute += w * min(max(c * r, sim.EPS), 1 - sim.EPS)
        assert sim.analytic_mean_pd(config, which) == pytest.approx(brute, abs=1e-12)
    assert sim.analytic_mean_pd(config, Which.DEVELOPMENT) == pytest.approx(0.2, abs=1e-9)


def test_unreachable_target():
    attrs = (AttributeConfig("A", ("a", "b"), (0.5, 0.5), (1.0, 2.0)),)
    with pytest.raises(sim.CalibrationError):
        sim.calibration_constant(ScenarioConfig("x", attrs, target_bad_rate=0.99999))


def test_review_overrides_validated():
    with pytest.raises(ValueError):
        ScenarioConfig("x", sim.BASE_ATTRIBUTES, {"Nope": (0.5, 0.5)})
    with pytest.raises(ValueError):
        ScenarioConfig("x", sim.BASE_ATTRIBUTES, {"Gender": (0.5, 0.4, 0.1)})


def test_simulate_is_deterministic_and_shares_development():
    stable = sim.get_scenario("stable")
    unstable = sim.get_scenario("unstable")
    a = sim.simulate(stable, Which.DEVELOPMENT, 3, 2000)
    b = sim.simulate(unstable, Which.DEVELOPMENT, 3, 2000)
    np.testing.assert_array_equal(a.true_pd, b.true_pd)
    np.testing.assert_array_equal(a.defaulted, b.defaulted)
    r1 = sim.simulate(stable, Which.REVIEW, 3, 2000)
    assert not np.array_equal(r1.codes["Gender"], a.codes["Gender"])
    c = sim.simulate(stable, Which.DEVELOPMENT, 4, 2000)
    assert not np.array_equal(c.defaulted, a.defaulted)


def test_pd_composition_and_clipping():
    config = sim.get_scenario("unstable")
    pop = sim.simulate(config, Which.REVIEW, 0, 3000)
    c = sim.calibration_constant(config)
    product = np.ones(pop.size)
    for attr in pop.attributes:
        product *= np.asarray(attr.bad_ratios)[pop.codes[attr.name]]
    np.testing.assert_allclose(pop.true_pd, np.clip(c * product, 1e-4, 1 - 1e-4))
    assert pop.true_pd.min() >= 1e-4 and pop.true_pd.max() <= 1 - 1e-4


def test_counts_and_snapshot():
    config = sim.get_scenario("stable")
    dev = sim.simulate(config, Which.DEVELOPMENT, 1, 500)
    rev = sim.simulate(config, Which.REVIEW, 1, 700)
    pair = sim.snapshot(dev, rev, "Age")
    assert dev.counts("Age").sum() == 500
    assert pair.dev_count == 500 and pair.review_count == 700
    assert pair.levels == config.attribute("Age").levels
    assert not sim.snapshot(dev, rev, "Prov").ordinal


def test_population_csv_is_byte_identical(tmp_path):
    config = sim.get_scenario("stable-outcome")
    for run in ("a", "b"):
        pop = sim.simulate(config, Which.REVIEW, 42, 300)
        sim.write_population_csv(pop, tmp_path / f"{run}.csv")
    assert filecmp.cmp(tmp_path / "a.csv", tmp_path / "b.csv", shallow=False)
    columns, outcomes = sim.read_population_csv(tmp_path / "a.csv")
    assert list(columns) == config.attribute_names
    np.testing.assert_array_equal(outcomes, pop.defaulted.astype(float))
    assert columns["Gender"] == list(pop.labels("Gender"))


def test_scenario_json_roundtrip(tmp_path):
    config = sim.get_scenario("unstable")
    path = tmp_path / "scenario.json"
    config.save(path)
    loaded = ScenarioConfig.load(path)
    assert loaded.to_dict() == config.to_dict()
    assert sim.calibration_constant(loaded) == sim.calibration_constant(config)


def test_snapshot_of_population_with_itself():
    pop = sim.simulate(sim.get_scenario("stable"), Which.DEVELOPMENT, 8, 1000)
    pair = sim.snapshot(pop, pop, "Income")
    assert pair.development == pair.review


def test_sampled_proportions_within_three_sigma():
    config = sim.get_scenario("stable-outcome")
    pop = sim.simulate(config, Which.REVIEW, 11, 10_000)
    for attr in pop.attributes:
        observed = pop.counts(attr.name) / pop.size
        np.testing.assert_array_less(np.abs(observed - np.asarray(attr.props)), 0.015)
    numenq = pop.counts("NumEnq") / pop.size
    np.testing.assert_allclose(numenq, (0.40, 0.25, 0.10, 0.15, 0.05, 0.05), atol=0.015)


def test_marginal_error_shrinks_with_size():
    config = sim.get_scenario("stable")
    errors = []
    for size in (1_000, 10_000, 100_000):
        pop = sim.simulate(config, Which.DEVELOPMENT, 21, size)
        worst = 0.0
        for attr in pop.attributes:
            p = np.asarray(attr.props)
            z = np.abs(pop.counts(attr.name) / size - p)
            worst = max(worst, float(np.max(z)))
            # every level inside its own 4-sigma binomial envelope
            assert np.all(z <= 4 * np.sqrt(p * (1 - p) / size) + 1e-12)
        errors.append(worst)
    assert errors[2] < errors[0]


def test_attributes_drawn_independently():
    pop = sim.simulate(sim.get_scenario("stable"), Which.DEVELOPMENT, 5, 100_000)
    names = pop.attribute_names
    # indicator of each attribute's modal level; correlation of independent indicators ~ N(0, 1/n)
    ind = {n: (pop.codes[n] == np.argmax(pop.attribute(n).props)).astype(float) for n in names}
    bound = 3 / np.sqrt(pop.size)
    for a, b in itertools.combinations(names, 2):
        r = np.corrcoef(ind[a], ind[b])[0, 1]
        # 45 pairs; 3 sigma per pair plus a Bonferroni-style margin
        assert abs(r) < 1.5 * bound, (a, b, r)


def test_zero_proportion_level_never_drawn():
    config = sim.get_scenario("stable")
    assert config.attribute("RecDef").props[-1] == 0.0
    for which in Which:
        pop = sim.simulate(config, which, 2, 20_000)
        assert pop.counts("RecDef")[-1] == 0

"""Synthetic development/review credit populations.

Each customer's attribute levels are drawn independently from the
configured proportions. The true PD multiplies the bad ratios of the
customer's levels and scales the product by a constant ``c``:

    true_pd = clip(c * prod_a ratio(a, level_a), EPS, 1 - EPS)

``c`` is found by bisection so that the exact expected PD of the
development population equals the target bad rate. The expectation is taken
over the full product distribution of attribute levels, so calibration does
not depend on any sample. The review population reuses the development
``c``; shifting its proportions therefore moves its mean PD.
"""

from __future__ import annotations

import csv
import enum
import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from popstab.metrics import SUM_TOL, ProportionVector, SnapshotPair

EPS = 1e-4
# product-distribution grid larger than this is refused by the calibrator
MAX_SUPPORT = 50_000_000


class Which(str, enum.Enum):
    DEVELOPMENT = "development"
    REVIEW = "review"


@dataclass(frozen=True)
class AttributeConfig:
    name: str
    levels: tuple[str, ...]
    props: tuple[float, ...]
    bad_ratios: tuple[float, ...]
    ordinal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        object.__setattr__(self, "props", tuple(float(v) for v in self.props))
        object.__setattr__(self, "bad_ratios", tuple(float(v) for v in self.bad_ratios))
        k = len(self.levels)
        if k < 2 or len(self.props) != k or len(self.bad_ratios) != k:
            raise ValueError(f"{self.name}: levels, props and bad_ratios must have equal length >= 2")
        if len(set(self.levels)) != k:
            raise ValueError(f"{self.name}: duplicate level labels")
        if any(p < 0 for p in self.props) or abs(math.fsum(self.props) - 1.0) > SUM_TOL:
            raise ValueError(f"{self.name}: proportions must be non-negative and sum to 1")
        if any(r <= 0 for r in self.bad_ratios):
            raise ValueError(f"{self.name}: bad ratios must be positive")

    def with_props(self, props: Sequence[float]) -> "AttributeConfig":
        if len(props) != len(self.levels):
            raise ValueError(
                f"{self.name}: override has {len(props)} proportions for {len(self.levels)} levels"
            )
        return AttributeConfig(self.name, self.levels, tuple(props), self.bad_ratios, self.ordinal)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "levels": list(self.levels),
            "props": list(self.props),
            "bad_ratios": list(self.bad_ratios),
            "ordinal": self.ordinal,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AttributeConfig":
        return cls(
            data["name"],
            tuple(data["levels"]),
            tuple(data["props"]),
            tuple(data["bad_ratios"]),
            bool(data.get("ordinal", True)),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    base: tuple[AttributeConfig, ...]
    review_overrides: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    target_bad_rate: float = 0.10
    population_size: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(self.base))
        names = [a.name for a in self.base]
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        overrides = {}
        for name, props in dict(self.review_overrides).items():
            if name not in names:
                raise ValueError(f"override for unknown attribute {name!r}")
            # validates level count and sum
            self.attribute(name).with_props(props)
            overrides[name] = tuple(float(p) for p in props)
        object.__setattr__(self, "review_overrides", overrides)
        if not (0.0 < self.target_bad_rate < 1.0):
            raise ValueError("target_bad_rate must lie in (0, 1)")
        if self.population_size < 1:
            raise ValueError("population_size must be positive")

    @property
    def attribute_names(self) -> list[str]:
        return [a.name for a in self.base]

    def attribute(self, name: str) -> AttributeConfig:
        for attr in self.base:
            if attr.name == name:
                return attr
        raise KeyError(f"unknown attribute {name!r}")

    def attributes_for(self, which: Which) -> tuple[AttributeConfig, ...]:
        if Which(which) is Which.DEVELOPMENT:
            return self.base
        return tuple(
            a.with_props(self.review_overrides[a.name]) if a.name in self.review_overrides else a
            for a in self.base
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target_bad_rate": self.target_bad_rate,
            "population_size": self.population_size,
            "attributes": [a.to_dict() for a in self.base],
            "review_overrides": {k: list(v) for k, v in self.review_overrides.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioConfig":
        return cls(
            name=data["name"],
            base=tuple(AttributeConfig.from_dict(a) for a in data["attributes"]),
            review_overrides={k: tuple(v) for k, v in data.get("review_overrides", {}).items()},
            target_bad_rate=float(data.get("target_bad_rate", 0.10)),
            population_size=int(data.get("population_size", 10_000)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# Built-in attribute configurations and the three monitoring scenarios

STABLE = "stable"
STABLE_OUTCOME = "stable-outcome"
UNSTABLE = "unstable"


def _recent_defaults_props() -> tuple[float, ...]:
    # the published column sums to 100.1%; renormalise rather than pick a level to trim
    raw = (0.600, 0.011, 0.021, 0.189, 0.180, 0.000)
    total = math.fsum(raw)
    return tuple(p / total for p in raw)


BASE_ATTRIBUTES: tuple[AttributeConfig, ...] = (
    AttributeConfig("Gender", ("Female", "Male"), (0.60, 0.40), (1.0, 3.0)),
    AttributeConfig(
        "Age",
        ("18-21", "22-25", "26-30", "31-45", "46-57", "58-63", "64-75"),
        (0.05, 0.07, 0.09, 0.26, 0.21, 0.11, 0.21),
        (1.00, 0.85, 0.78, 0.66, 0.50, 0.43, 0.31),
    ),
    AttributeConfig(
        "NumEnq",
        ("0", "1", "2", "3", "4", "5+"),
        (0.30, 0.25, 0.20, 0.15, 0.05, 0.05),
        (1.0, 1.3, 1.8, 1.9, 2.1, 2.7),
    ),
    AttributeConfig("ExistCust", ("Existing", "New"), (0.80, 0.20), (1.0, 2.7)),
    AttributeConfig(
        "CCother", ("0", "1", "2", "3+"), (0.50, 0.30, 0.15, 0.05), (1.0, 1.2, 1.7, 2.5)
    ),
    AttributeConfig(
        "OutBal",
        ("0-5000", "5000-10000", "10000-25000", "25000-100000", ">100000"),
        (0.244, 0.256, 0.320, 0.169, 0.011),
        (1.0, 1.2, 2.0, 2.1, 0.8),
    ),
    AttributeConfig(
        "Prov",
        (
            "Gauteng",
            "Western Cape",
            "KwaZulu Natal",
            "Mpumalanga",
            "North West",
            "Limpopo",
            "Eastern Cape",
            "Northern Cape",
            "Free State",
        ),
        (0.40, 0.30, 0.07, 0.05, 0.05, 0.04, 0.04, 0.03, 0.02),
        (1.0, 0.7, 1.8, 1.5, 3.0, 2.5, 2.0, 4.0, 1.2),
        ordinal=False,
    ),
    AttributeConfig(
        "AppMethod",
        ("Branch", "Online", "Phone", "Marketing Call"),
        (0.30, 0.40, 0.15, 0.15),
        (1.0, 0.5, 1.5, 0.4),
        ordinal=False,
    ),
    AttributeConfig(
        "Income",
        ("0-5000", "5000-11000", "11000-20000", "20000-30000", "30000-70000", ">70000"),
        (0.032, 0.156, 0.204, 0.218, 0.240, 0.150),
        (3.0, 2.5, 2.0, 1.4, 1.2, 1.0),
    ),
    AttributeConfig(
        "RecDef",
        ("0-1000", "1000-3000", "3000-5000", "5000-30000", "30000-1000000", ">1000000"),
        _recent_defaults_props(),
        (1.0, 1.1, 2.0, 2.5, 3.0, 3.3),
    ),
)

STABLE_OUTCOME_OVERRIDES = {
    "NumEnq": (0.40, 0.25, 0.10, 0.15, 0.05, 0.05),
    "CCother": (0.30, 0.50, 0.15, 0.05),
}

UNSTABLE_OVERRIDES = {
    # printed as 55% female / 35% male; 45% keeps the five-point shift and sums to one
    "Gender": (0.55, 0.45),
    "NumEnq": (0.25, 0.30, 0.20, 0.15, 0.05, 0.05),
    "ExistCust": (0.75, 0.25),
    "CCother": (0.45, 0.35, 0.15, 0.05),
    "Prov": (0.35, 0.35, 0.07, 0.05, 0.05, 0.04, 0.04, 0.03, 0.02),
    "AppMethod": (0.25, 0.45, 0.15, 0.15),
}


def builtin_scenarios() -> list[ScenarioConfig]:
    return [
        ScenarioConfig(STABLE, BASE_ATTRIBUTES),
        ScenarioConfig(STABLE_OUTCOME, BASE_ATTRIBUTES, STABLE_OUTCOME_OVERRIDES),
        ScenarioConfig(UNSTABLE, BASE_ATTRIBUTES, UNSTABLE_OVERRIDES),
    ]


def get_scenario(name: str) -> ScenarioConfig:
    key = name.lower().replace("_", "-")
    for scenario in builtin_scenarios():
        if scenario.name == key:
            return scenario
    raise KeyError(f"unknown scenario {name!r}; choose from {[s.name for s in builtin_scenarios()]}")


# --------------------------------------------------------------------------
# Calibration over the exact product distribution


class CalibrationError(RuntimeError):
    pass


class _PdSupport:
    """Every combination of levels with its bad-ratio product, sorted by product."""

    def __init__(self, attributes: Sequence[AttributeConfig]):
        size = math.prod(len(a.levels) for a in attributes)
        if size > MAX_SUPPORT:
            raise CalibrationError(f"product distribution has {size} cells; limit is {MAX_SUPPORT}")
        ratios = np.ones(1)
        for attr in attributes:
            ratios = np.multiply.outer(ratios, np.asarray(attr.bad_ratios)).ravel()
        self.order = np.argsort(ratios, kind="stable")
        self.ratios = ratios[self.order]
        self.shape = tuple(len(a.levels) for a in attributes)

    def weights(self, attributes: Sequence[AttributeConfig]) -> np.ndarray:
        w = np.ones(1)
        for attr in attributes:
            w = np.multiply.outer(w, np.asarray(attr.props)).ravel()
        return w[self.order]

    def mean_pd_fn(self, weights: np.ndarray):
        """Exact E[clip(c * ratio)] as a function of c, O(log N) per call."""
        x = self.ratios
        cw = np.concatenate([[0.0], np.cumsum(weights)])
        cwx = np.concatenate([[0.0], np.cumsum(weights * x)])
        total_w = cw[-1]

        def mean(c: float) -> float:
            if c <= 0:
                return EPS * total_w
            lo = int(np.searchsorted(x, EPS / c, side="left"))
            hi = int(np.searchsorted(x, (1.0 - EPS) / c, side="right"))
            low_part = EPS * cw[lo]
            mid_part = c * (cwx[hi] - cwx[lo])
            high_part = (1.0 - EPS) * (total_w - cw[hi])
            return float(low_part + mid_part + high_part)

        return mean


@functools.lru_cache(maxsize=8)
def _support(attributes: tuple[AttributeConfig, ...]) -> _PdSupport:
    return _PdSupport(attributes)


@functools.lru_cache(maxsize=32)
def _calibrate(attributes: tuple[AttributeConfig, ...], target: float) -> float:
    support = _support(attributes)
    mean = support.mean_pd_fn(support.weights(attributes))
    lo, hi = 0.0, (1.0 - EPS) / support.ratios[0]
    if not (mean(lo) < target < mean(hi)):
        raise CalibrationError(
            f"target bad rate {target} unreachable within clip bounds [{EPS}, {1 - EPS}]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    c = 0.5 * (lo + hi)
    if abs(mean(c) - target) > 1e-9:
        raise CalibrationError(f"bisection stalled at mean PD {mean(c)} for target {target}")
    return c


def calibration_constant(config: ScenarioConfig) -> float:
    return _calibrate(config.base, config.target_bad_rate)


def analytic_mean_pd(config: ScenarioConfig, which: Which) -> float:
    attributes = config.attributes_for(which)
    support = _support(config.base)
    mean = support.mean_pd_fn(support.weights(attributes))
    return mean(calibration_constant(config))


def mean_pd_shift(config: ScenarioConfig) -> tuple[float, float]:
    """Exact development and review mean PDs (no sampling)."""
    return (
        analytic_mean_pd(config, Which.DEVELOPMENT),
        analytic_mean_pd(config, Which.REVIEW),
    )


# --------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True)
class SimulatedPopulation:
    """Customers of one simulated population, stored column-wise.

    ``codes[name][i]`` is the level index of customer ``i`` for attribute
    ``name``; ``true_pd`` and ``defaulted`` are per-customer arrays.
    """

    scenario: str
    which: Which
    attributes: tuple[AttributeConfig, ...]
    codes: Mapping[str, np.ndarray]
    true_pd: np.ndarray
    defaulted: np.ndarray
    seed: int

    @property
    def size(self) -> int:
        return int(self.true_pd.size)

    @property
    def attribute_names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def attribute(self, name: str) -> AttributeConfig:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        raise KeyError(f"unknown attribute {name!r}")

    def counts(self, name: str) -> np.ndarray:
        return np.bincount(self.codes[name], minlength=len(self.attribute(name).levels))

    def labels(self, name: str) -> np.ndarray:
        return np.asarray(self.attribute(name).levels, dtype=object)[self.codes[name]]

    def default_rate(self) -> float:
        return float(self.defaulted.mean())


def _stream(seed: int, which: Which) -> np.random.Generator:
    key = 0 if which is Which.DEVELOPMENT else 1
    return np.random.Generator(np.random.PCG64DXSM(np.random.SeedSequence(seed, spawn_key=(key,))))


def simulate(
    config: ScenarioConfig, which: Which, seed: int, size: Optional[int] = None
) -> SimulatedPopulation:
    """Draw one population.

    The development draw depends only on the base attributes and the seed, so
    every scenario built on the same base shares its development population.
    """
    which = Which(which)
    size = config.population_size if size is None else int(size)
    if size < 1:
        raise ValueError("population size must be positive")
    rng = _stream(seed, which)
    attributes = config.attributes_for(which)
    c = calibration_constant(config)
    codes = {}
    product = np.ones(size)
    for attr in attributes:
        drawn = rng.choice(len(attr.levels), size=size, p=np.asarray(attr.props))
        codes[attr.name] = drawn
        product *= np.asarray(attr.bad_ratios)[drawn]
    true_pd = np.clip(c * product, EPS, 1.0 - EPS)
    defaulted = rng.random(size) < true_pd
    return SimulatedPopulation(config.name, which, attributes, codes, true_pd, defaulted, seed)


def snapshot(dev: SimulatedPopulation, review: SimulatedPopulation, name: str) -> SnapshotPair:
    """Observed level proportions of one attribute in both populations."""
    attr = dev.attribute(name)
    if review.attribute(name).levels != attr.levels:
        raise ValueError(f"{name}: development and review level lists differ")
    return SnapshotPair(
        ProportionVector.from_counts(attr.levels, dev.counts(name), attr.ordinal),
        ProportionVector.from_counts(attr.levels, review.counts(name), attr.ordinal),
        dev_count=dev.size,
        review_count=review.size,
    )


def write_population_csv(population: SimulatedPopulation, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(
            f"# scenario={population.scenario} population={population.which.value} "
            f"seed={population.seed} size={population.size}\n"
        )
        writer = csv.writer(fh, lineterminator="\n")
        names = population.attribute_names
        writer.writerow(["customer", *names, "true_pd", "defaulted"])
        columns = [population.labels(name) for name in names]
        for i in range(population.size):
            writer.writerow(
                [i, *(col[i] for col in columns), repr(float(population.true_pd[i])),
                 int(population.defaulted[i])]
            )


def read_population_csv(path) -> tuple[dict[str, list[str]], np.ndarray]:
    """Attribute label columns and default indicators from a population CSV."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows)
        if "defaulted" not in header:
            raise ValueError(f"{path}: population file needs a 'defaulted' column")
        skip = {"customer", "true_pd", "defaulted"}
        names = [h for h in header if h not in skip]
        columns: dict[str, list[str]] = {name: [] for name in names}
        outcomes = []
        for row in rows:
            record = dict(zip(header, row))
            for name in names:
                columns[name].append(record[name])
            outcomes.append(int(record["defaulted"]))
    return columns, np.asarray(outcomes, dtype=float)

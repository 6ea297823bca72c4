"""End-to-end reproduction of the three monitoring scenarios.

For each built-in scenario a development and a review population are
simulated, every attribute is compared with PSI, DPV, Gamma and the
overlapping statistic, and a scorecard fitted on the development data
supplies a tenth row for its equal-frequency PD groups. The results are set
against reference tables of sampled values; a cell passes when it lies
within :data:`TOLERANCE` of its reference, or, for a reference marked
infinite, when our PSI is flagged infinite too.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from popstab import scorecard, simulation
from popstab.metrics import Metric, SnapshotPair
from popstab.report import (
    StabilityReport,
    Thresholds,
    attach_monte_carlo,
    build_metadata,
    compute_report,
    parse_metrics,
)

TOLERANCE = 0.02
PD_GROUPS = "PD Groups"
PD_GROUP_COUNT = 10
INF = math.inf

# (PSI, DPV, Effect size, Overlapping) per row; sampled values, not analytic ones
REFERENCE_TABLES: dict[str, dict[str, tuple[float, float, float, float]]] = {
    simulation.STABLE: {
        "Gender": (0.0004, 0.0241, 0.0198, 0.9903),
        "Age": (0.0007, 0.0575, 0.0102, 0.9889),
        "NumEnq": (0.0010, 0.0639, 0.0133, 0.9874),
        "ExistCust": (0.0001, 0.0153, 0.0077, 0.9969),
        "CCother": (0.0008, 0.1206, 0.0087, 0.9924),
        "OutBal": (0.0008, 0.1066, 0.0136, 0.9878),
        "Prov": (0.0016, 0.1538, 0.0163, 0.9838),
        "AppMethod": (0.0010, 0.0458, 0.0175, 0.9857),
        "Income": (0.0012, 0.0633, 0.0128, 0.9868),
        "RecDef": (0.0007, 0.0734, 0.0132, 0.9909),
        PD_GROUPS: (0.0017, 0.0690, 0.0109, 0.9837),
    },
    simulation.STABLE_OUTCOME: {
        "Gender": (0.0002, 0.0156, 0.0128, 0.9937),
        "Age": (0.0014, 0.0659, 0.0135, 0.9848),
        "NumEnq": (0.0952, 0.4948, 0.1170, 0.8961),
        "ExistCust": (0.0001, 0.0222, 0.0112, 0.9955),
        "CCother": (0.2046, 0.6729, 0.3323, 0.7963),
        "OutBal": (INF, 0.0410, 0.0097, 0.9918),
        "Prov": (0.0021, 0.0775, 0.0251, 0.9787),
        "AppMethod": (0.0018, 0.0529, 0.0269, 0.9796),
        "Income": (0.0021, 0.2400, 0.0094, 0.9878),
        "RecDef": (0.0016, 0.1210, 0.0250, 0.9828),
        PD_GROUPS: (0.0191, 0.2610, 0.0372, 0.9442),
    },
    simulation.UNSTABLE: {
        "Gender": (0.0079, 0.1092, 0.0897, 0.9560),
        "Age": (0.0014, 0.0659, 0.0135, 0.9848),
        "NumEnq": (0.0175, 0.1765, 0.0638, 0.9461),
        "ExistCust": (0.0160, 0.262, 0.1321, 0.9469),
        "CCother": (0.0105, 0.1556, 0.0738, 0.9529),
        "OutBal": (INF, 0.0410, 0.0097, 0.9918),
        "Prov": (0.0102, 0.1462, 0.0608, 0.9534),
        "AppMethod": (0.0244, 0.1869, 0.1001, 0.9297),
        "Income": (0.0021, 0.2400, 0.0094, 0.9878),
        "RecDef": (0.0016, 0.1210, 0.0250, 0.9828),
        PD_GROUPS: (0.0055, 0.1430, 0.0197, 0.9705),
    },
}

# information values of the development attributes in the reference study
REFERENCE_IV = {
    "Gender": 0.499,
    "ExistCust": 0.441,
    "NumEnq": 0.394,
    "CCother": 0.515,
    "Prov": 0.284,
    "AppMethod": 0.222,
    "Age": 0.164,
    "OutBal": 0.083,
    "Income": 0.182,
    "RecDef": 0.192,
}

REFERENCE_MEAN_PD = {
    simulation.STABLE: (0.0992, 0.1008),
    simulation.STABLE_OUTCOME: (0.0992, 0.0969),
    simulation.UNSTABLE: (0.0992, 0.1067),
}

TABLE_METRIC_ORDER = (Metric.PSI, Metric.DPV, Metric.EFFECT_SIZE, Metric.OVERLAPPING)


@dataclass
class Cell:
    scenario: str
    row: str
    metric: Metric
    ours: Optional[float]
    reference: float
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        if self.ours is None:
            return False
        if math.isinf(self.reference):
            return math.isinf(self.ours)
        if math.isinf(self.ours):
            return False
        return abs(self.ours - self.reference) <= TOLERANCE

    @property
    def difference(self) -> Optional[float]:
        if self.ours is None or math.isinf(self.ours) or math.isinf(self.reference):
            return None
        return self.ours - self.reference


@dataclass
class ScenarioResult:
    scenario: simulation.ScenarioConfig
    report: StabilityReport
    development: simulation.SimulatedPopulation
    review: simulation.SimulatedPopulation
    model: scorecard.ScorecardModel
    grouping: scorecard.PdGrouping
    information_values: dict
    analytic_mean_pd: tuple[float, float]
    cells: list = field(default_factory=list)


@dataclass
class Reproduction:
    seed: int
    size: int
    results: list
    elapsed: float

    @property
    def cells(self) -> list:
        return [c for r in self.results for c in r.cells]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.cells)

    def failures(self) -> list:
        return [c for c in self.cells if not c.passed]

    def comparison_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scenario", "row", "metric", "ours", "sampled_reference", "difference", "tolerance", "status"])
        for c in self.cells:
            writer.writerow(
                [
                    c.scenario,
                    c.row,
                    c.metric.value,
                    c.error if c.ours is None else _fmt(c.ours),
                    _fmt(c.reference),
                    "" if c.difference is None else f"{c.difference:+.4f}",
                    TOLERANCE,
                    "pass" if c.passed else "FAIL",
                ]
            )
        return buf.getvalue()

    def comparison_text(self) -> str:
        lines = [
            f"seed={self.seed} size={self.size} tolerance=+-{TOLERANCE} elapsed={self.elapsed:.1f}s",
            "reference values are single sampled realisations (labelled 'sampled reference')",
        ]
        for result in self.results:
            name = result.scenario.name
            dev_mean, rev_mean = result.analytic_mean_pd
            lines.append("")
            lines.append(f"== {name} ==")
            lines.append(
                f"mean PD analytic dev={dev_mean:.4f} review={rev_mean:.4f}; sampled default rate "
                f"dev={result.development.default_rate():.4f} review={result.review.default_rate():.4f}; "
                f"sampled reference {REFERENCE_MEAN_PD[name][0]:.4f}/{REFERENCE_MEAN_PD[name][1]:.4f}"
            )
            header = f"{'Variable':<10}" + "".join(
                f"{m.value + ' ours':>18}{'ref':>8}" for m in TABLE_METRIC_ORDER
            )
            lines.append(header)
            by_row: dict = {}
            for c in result.cells:
                by_row.setdefault(c.row, {})[c.metric] = c
            for row, cells in by_row.items():
                text = f"{row:<10}"
                for m in TABLE_METRIC_ORDER:
                    c = cells[m]
                    ours = c.error if c.ours is None else _fmt(c.ours, 4)
                    mark = " " if c.passed else "!"
                    text += f"{ours:>17}{mark}{_fmt(c.reference, 4):>8}"
                lines.append(text)
            for row in result.report.rows:
                for note in row.notes:
                    lines.append(f"note [{row.name}]: {note}")
        lines.append("")
        lines.append("Information values on the development population (band)")
        first = self.results[0]
        for name, (value, band) in first.information_values.items():
            ref = REFERENCE_IV.get(name)
            ref_band = scorecard.iv_band(ref).value if ref is not None else "-"
            lines.append(f"  {name:<10} {value:.3f} {band.value:<12} reference {ref} ({ref_band})")
        failures = self.failures()
        lines.append("")
        lines.append(f"{len(self.cells) - len(failures)}/{len(self.cells)} cells within tolerance")
        for c in failures:
            lines.append(
                f"  FAIL {c.scenario}/{c.row}/{c.metric.value}: ours="
                f"{c.error if c.ours is None else _fmt(c.ours, 4)} reference={_fmt(c.reference, 4)}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "size": self.size,
            "tolerance": TOLERANCE,
            "elapsed_seconds": self.elapsed,
            "all_passed": self.all_passed,
            "cells": [
                {
                    "scenario": c.scenario,
                    "row": c.row,
                    "metric": c.metric.value,
                    "ours": None if c.ours is None else _fmt(c.ours),
                    "error": c.error,
                    "sampled_reference": _fmt(c.reference),
                    "passed": c.passed,
                }
                for c in self.cells
            ],
        }


def _fmt(value: float, digits: Optional[int] = None):
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}f}" if digits is not None else repr(float(value))


def _customers(population: simulation.SimulatedPopulation) -> dict:
    return {name: population.labels(name) for name in population.attribute_names}


def information_values(population: simulation.SimulatedPopulation) -> dict:
    """IV and band of every attribute; unoccupied levels are dropped first."""
    out = {}
    for name in population.attribute_names:
        counts = scorecard.GroupedCounts.from_labels(
            population.labels(name), population.defaulted, population.attribute(name).levels
        ).drop_empty()
        out[name] = scorecard.iv(counts)
    return out


def run_scenario(
    config: simulation.ScenarioConfig,
    seed: int,
    size: Optional[int] = None,
    b: int = 0,
    thresholds: Thresholds = Thresholds(),
    reference: Optional[dict] = None,
) -> ScenarioResult:
    dev = simulation.simulate(config, simulation.Which.DEVELOPMENT, seed, size)
    review = simulation.simulate(config, simulation.Which.REVIEW, seed, size)
    pairs = [(name, simulation.snapshot(dev, review, name)) for name in config.attribute_names]

    model = scorecard.build_scorecard(
        _customers(dev), dev.defaulted, {a.name: a.levels for a in config.base}
    )
    dev_pd = scorecard.predict_pd(model, _customers(dev))
    review_pd = scorecard.predict_pd(model, _customers(review))
    grouping = scorecard.pd_groups(dev_pd, review_pd, PD_GROUP_COUNT)
    pairs.append(
        (
            PD_GROUPS,
            SnapshotPair(
                grouping.group_proportions_dev,
                grouping.group_proportions_review,
                dev_count=dev.size,
                review_count=review.size,
            ),
        )
    )

    selected = parse_metrics(["psi", "dpv", "gamma", "overlap"])
    meta = build_metadata(
        seed=seed,
        extra={
            "scenario": config.name,
            "population_size": dev.size,
            "simulator_generator": "numpy.random.PCG64DXSM seeded by SeedSequence(seed, spawn_key=(0|1,))",
            "pd_groups": PD_GROUP_COUNT,
        },
    )
    report = compute_report(pairs, selected, thresholds, meta)
    if b:
        attach_monte_carlo(report, selected, b=b, seed=seed)

    reference = REFERENCE_TABLES.get(config.name) if reference is None else reference
    result = ScenarioResult(
        config,
        report,
        dev,
        review,
        model,
        grouping,
        information_values(dev),
        simulation.mean_pd_shift(config),
    )
    if reference:
        for row in report.rows:
            ref = reference.get(row.name)
            if ref is None:
                continue
            if math.isinf(ref[0]) and Metric.PSI in row.outcomes and not row.outcomes[Metric.PSI].infinite:
                row.notes.append(
                    "reference PSI is infinite, but no level of this attribute is empty in the configured "
                    "development distribution; the only zero-proportion level is RecDef '>1000000'"
                )
            for metric, ref_value in zip(TABLE_METRIC_ORDER, ref):
                outcome = row.outcomes.get(metric)
                result.cells.append(
                    Cell(
                        config.name,
                        row.name,
                        metric,
                        None if outcome is None else outcome.value,
                        ref_value,
                        row.errors.get(metric),
                    )
                )
    return result


def reproduce(seed: int = 1, size: int = 10_000, b: int = 0) -> Reproduction:
    start = time.perf_counter()
    results = [
        run_scenario(config, seed, size, b) for config in simulation.builtin_scenarios()
    ]
    return Reproduction(seed, size, results, time.perf_counter() - start)


def write_outputs(rep: Reproduction, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for result in rep.results:
        stem = result.scenario.name
        path = out / f"{stem}_report.json"
        path.write_text(result.report.to_json(), encoding="utf-8")
        written.append(path)
        path = out / f"{stem}_report.txt"
        path.write_text(result.report.to_table(title=stem), encoding="utf-8")
        written.append(path)
    for name, text in (
        ("comparison.csv", rep.comparison_csv()),
        ("comparison.txt", rep.comparison_text()),
        ("comparison.json", json.dumps(rep.to_dict(), indent=2) + "\n"),
    ):
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written

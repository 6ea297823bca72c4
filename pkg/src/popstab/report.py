"""Stability reports: per-attribute metric rows plus run metadata."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from popstab import __version__, metrics, montecarlo
from popstab.metrics import Band, Metric, MetricOutcome, ProportionVector, SnapshotPair, StabilityError

EMPTY_LEVEL_DROPPED = "EmptyLevelDropped"
DEFAULT_METRICS = ("psi", "dpv", "gamma", "overlap", "ks")
TABLE_METRICS = ("psi", "dpv", "gamma", "overlap")

_METRIC_NAMES = {
    "psi": Metric.PSI,
    "dpv": Metric.DPV,
    "gamma": Metric.EFFECT_SIZE,
    "effectsize": Metric.EFFECT_SIZE,
    "overlap": Metric.OVERLAPPING,
    "overlapping": Metric.OVERLAPPING,
    "ks": Metric.KS,
}

_SELECTOR_FOR = {
    Metric.PSI: montecarlo.MetricSelector.PSI,
    Metric.DPV: montecarlo.MetricSelector.DPV,
    Metric.EFFECT_SIZE: montecarlo.MetricSelector.EFFECT_SIZE_GAMMA,
    Metric.OVERLAPPING: montecarlo.MetricSelector.OVERLAPPING_COMPLEMENT,
    Metric.KS: montecarlo.MetricSelector.KS,
}

_COLUMN_TITLES = {
    Metric.PSI: "PSI",
    Metric.DPV: "DPV",
    Metric.EFFECT_SIZE: "Effect size",
    Metric.OVERLAPPING: "Overlapping",
    Metric.KS: "KS",
}


def parse_metrics(names: Iterable[str]) -> list[Metric]:
    out = []
    for name in names:
        key = name.strip().lower().replace("_", "").replace("-", "")
        if not key:
            continue
        if key not in _METRIC_NAMES:
            raise ValueError(f"unknown metric {name!r}; choose from {sorted(set(_METRIC_NAMES))}")
        if _METRIC_NAMES[key] not in out:
            out.append(_METRIC_NAMES[key])
    return out


@dataclass(frozen=True)
class Thresholds:
    delta: float = 0.2
    gamma_cutoff: float = 0.1
    overlap_threshold: Optional[float] = None
    alpha: float = 0.05
    k_star: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "gamma_cutoff": self.gamma_cutoff,
            "overlap_threshold": self.overlap_threshold,
            "alpha": self.alpha,
            "k_star": self.k_star,
        }


@dataclass
class AttributeRow:
    name: str
    pair: SnapshotPair
    outcomes: dict = field(default_factory=dict)  # Metric -> MetricOutcome
    errors: dict = field(default_factory=dict)  # Metric -> error code
    mc: dict = field(default_factory=dict)  # Metric -> McResult
    notes: list = field(default_factory=list)

    @property
    def substantial(self) -> bool:
        return any(o.band is Band.SUBSTANTIAL_CHANGE for o in self.outcomes.values())

    def to_dict(self) -> dict:
        out = {
            "attribute": self.name,
            "levels": list(self.pair.levels),
            "ordinal": self.pair.ordinal,
            "development": list(self.pair.development.props),
            "review": list(self.pair.review.props),
            "dev_count": self.pair.dev_count,
            "review_count": self.pair.review_count,
            "metrics": {m.value: o.to_dict() for m, o in self.outcomes.items()},
            "errors": {m.value: code for m, code in self.errors.items()},
        }
        if self.mc:
            out["monte_carlo"] = {m.value: r.to_dict() for m, r in self.mc.items()}
        if self.notes:
            out["notes"] = list(self.notes)
        return out


@dataclass
class StabilityReport:
    rows: list
    thresholds: Thresholds
    metadata: dict

    @property
    def any_substantial(self) -> bool:
        return any(row.substantial for row in self.rows)

    def exit_code(self) -> int:
        return 2 if self.any_substantial else 0

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "thresholds": self.thresholds.to_dict(),
            "rows": [row.to_dict() for row in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def metrics_present(self) -> list:
        seen = []
        for row in self.rows:
            for m in list(row.outcomes) + list(row.errors):
                if m not in seen:
                    seen.append(m)
        order = [Metric.PSI, Metric.DPV, Metric.EFFECT_SIZE, Metric.OVERLAPPING, Metric.KS]
        return [m for m in order if m in seen]

    def to_table(self, title: Optional[str] = None) -> str:
        cols = self.metrics_present()
        with_mc = any(row.mc for row in self.rows)
        header = ["Variable"] + [_COLUMN_TITLES[m] for m in cols]
        if with_mc:
            header += [f"p({_COLUMN_TITLES[m]})" for m in cols]
        body = []
        for row in self.rows:
            cells = [row.name]
            for m in cols:
                if m in row.outcomes:
                    o = row.outcomes[m]
                    text = "inf" if o.infinite else f"{o.value:.4f}"
                    if o.band is Band.SUBSTANTIAL_CHANGE:
                        text += " *"
                    cells.append(text)
                else:
                    cells.append(row.errors.get(m, "-"))
            if with_mc:
                for m in cols:
                    r = row.mc.get(m)
                    cells.append("-" if r is None or r.p_value is None else f"{r.p_value:.4f}")
            body.append(cells)
        widths = [max(len(str(c)) for c in column) for column in zip(header, *body)]
        lines = []
        if title:
            lines.append(title)
        rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
        lines += [rule, "  ".join(h.ljust(w) for h, w in zip(header, widths)), rule]
        lines += ["  ".join(str(c).ljust(w) for c, w in zip(cells, widths)) for cells in body]
        lines.append(rule)
        lines.append("* SubstantialChange under the thresholds in force")
        t = self.thresholds
        lines.append(
            f"thresholds: delta={t.delta} gamma_cutoff={t.gamma_cutoff} "
            f"overlap_threshold={t.overlap_threshold} alpha={t.alpha}"
        )
        for row in self.rows:
            for note in row.notes:
                lines.append(f"note [{row.name}]: {note}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["attribute", "metric", "value", "band", "flags", "error", "p_value", "critical_value"]
        )
        for row in self.rows:
            for m in self.metrics_present():
                r = row.mc.get(m)
                p = "" if r is None or r.p_value is None else repr(r.p_value)
                cv = "" if r is None else _fmt(r.critical_value)
                if m in row.outcomes:
                    o = row.outcomes[m]
                    writer.writerow(
                        [row.name, m.value, _fmt(o.value), o.band.value, ";".join(o.flags), "", p, cv]
                    )
                elif m in row.errors:
                    writer.writerow([row.name, m.value, "", "", "", row.errors[m], p, cv])
        return buf.getvalue()

    def render(self, fmt: str, title: Optional[str] = None) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        if fmt == "table":
            return self.to_table(title)
        raise ValueError(f"unknown format {fmt!r}")


def _fmt(value: float) -> str:
    return "inf" if math.isinf(value) else repr(float(value))


def drop_joint_empty_levels(pair: SnapshotPair) -> tuple[SnapshotPair, list[str]]:
    """Remove levels with zero proportion in both samples.

    Such levels carry no information, yet DPV and the effect sizes cannot be
    evaluated on them.
    """
    q, P = pair.arrays()
    keep = ~((q == 0) & (P == 0))
    if keep.all() or keep.sum() < 2:
        return pair, []
    dropped = [lvl for lvl, k in zip(pair.levels, keep) if not k]
    levels = tuple(lvl for lvl, k in zip(pair.levels, keep) if k)
    reduced = SnapshotPair(
        ProportionVector(levels, tuple(q[keep]), pair.development.ordinal),
        ProportionVector(levels, tuple(P[keep]), pair.review.ordinal),
        pair.dev_count,
        pair.review_count,
    )
    return reduced, dropped


def evaluate(pair: SnapshotPair, metric: Metric, thresholds: Thresholds) -> MetricOutcome:
    """One metric with the report-level bands applied."""
    if metric is Metric.PSI:
        return metrics.psi(pair)
    if metric is Metric.DPV:
        o = metrics.dpv(pair, thresholds.k_star)
        return MetricOutcome(o.metric, o.value, metrics.threshold_band(o.value, thresholds.delta), o.flags)
    if metric is Metric.EFFECT_SIZE:
        return metrics.gamma(pair, thresholds.gamma_cutoff)
    if metric is Metric.OVERLAPPING:
        o = metrics.overlap(pair)
        if thresholds.overlap_threshold is None:
            return o
        band = Band.SUBSTANTIAL_CHANGE if o.value < thresholds.overlap_threshold else Band.NO_CHANGE
        return MetricOutcome(o.metric, o.value, band, o.flags)
    if metric is Metric.KS:
        return metrics.ks(pair)
    raise ValueError(f"{metric} is not a grouped-data metric")


def build_metadata(seed=None, b=None, m=None, generator=None, extra=None) -> dict:
    meta = {
        "tool": "popstab",
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": seed,
        "b": b,
        "m": m,
        "generator": generator,
    }
    if extra:
        meta.update(extra)
    return meta


def compute_report(
    pairs: Sequence[tuple[str, SnapshotPair]],
    selected: Sequence[Metric] = None,
    thresholds: Thresholds = Thresholds(),
    metadata: Optional[dict] = None,
) -> StabilityReport:
    selected = parse_metrics(DEFAULT_METRICS) if selected is None else list(selected)
    rows = []
    for name, original in pairs:
        pair, dropped = drop_joint_empty_levels(original)
        row = AttributeRow(name, original)
        if dropped:
            row.notes.append(f"{EMPTY_LEVEL_DROPPED}: {', '.join(dropped)} (empty in both samples)")
        for metric in selected:
            try:
                outcome = evaluate(pair, metric, thresholds)
            except StabilityError as exc:
                row.errors[metric] = exc.code
                continue
            if dropped:
                outcome = MetricOutcome(
                    outcome.metric, outcome.value, outcome.band, outcome.flags + (EMPTY_LEVEL_DROPPED,)
                )
            row.outcomes[metric] = outcome
        rows.append(row)
    return StabilityReport(rows, thresholds, metadata if metadata is not None else build_metadata())


def attach_monte_carlo(
    report: StabilityReport,
    selected: Sequence[Metric],
    b: int,
    seed: int,
    m: Optional[int] = None,
    workers: int = 1,
) -> StabilityReport:
    """Add Monte-Carlo p-values and critical values to every row.

    ``m`` defaults to each row's review sample size. Attributes get
    independent seeds derived from ``seed`` and their position.
    """
    ms = set()
    for index, row in enumerate(report.rows):
        pair, _ = drop_joint_empty_levels(row.pair)
        size = m if m is not None else pair.review_count
        if size is None:
            raise ValueError(f"{row.name}: review sample size unknown; pass m explicitly")
        ms.add(size)
        attr_seed = int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])
        cfg = montecarlo.McConfig(m=size, b=b, alpha=report.thresholds.alpha, seed=attr_seed, workers=workers)
        for metric in selected:
            selector = _SELECTOR_FOR[metric]
            try:
                row.mc[metric] = montecarlo.p_value(selector, pair, cfg)
            except StabilityError as exc:
                row.errors.setdefault(metric, exc.code)
    report.metadata.update(
        {
            "seed": seed,
            "b": b,
            "m": m if m is not None else sorted(ms),
            "generator": montecarlo.GENERATOR_NAME,
            "attribute_seed_derivation": "SeedSequence([seed, attribute_index]).generate_state(1, uint64)",
        }
    )
    return report

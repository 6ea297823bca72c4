"""Command-line entry point: ``popstab <command> ...``.

Exit codes: 0 success, 1 error, 2 when ``compute`` finds a SubstantialChange
row or ``reproduce`` has cells outside tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from popstab import __version__, montecarlo, reproduce, scorecard, simulation
from popstab.metrics import ProportionVector, StabilityError
from popstab.report import (
    DEFAULT_METRICS,
    Thresholds,
    attach_monte_carlo,
    build_metadata,
    compute_report,
    parse_metrics,
)
from popstab.scorecard import ScorecardError
from popstab.snapshots import SnapshotParseError, read_snapshot, write_snapshot

log = logging.getLogger("popstab")


def _default_seed() -> int:
    value = os.environ.get("POPSTAB_SEED")
    return int(value) if value else 0


def _csv_list(text: str) -> list[str]:
    return [part for part in text.split(",") if part.strip()]


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _thresholds(args) -> Thresholds:
    return Thresholds(
        delta=args.delta,
        gamma_cutoff=args.gamma_cutoff,
        overlap_threshold=args.overlap_threshold,
        alpha=getattr(args, "alpha", 0.05),
        k_star=args.k_star,
    )


def _add_threshold_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=0.2, help="DPV materiality threshold (default 0.2)")
    p.add_argument("--gamma-cutoff", type=float, default=0.1, help="effect-size cutoff (default 0.1)")
    p.add_argument("--overlap-threshold", type=float, default=None,
                   help="flag overlapping below this value (default: no banding)")
    p.add_argument("--k-star", type=int, default=None, help="DPV considers only the first k* levels")


def _add_output_flags(p: argparse.ArgumentParser, default_format: str = "table") -> None:
    p.add_argument("--format", choices=("json", "table", "csv"), default=default_format)
    p.add_argument("--out", default=None, help="write to this file instead of stdout")


def _add_mc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, default=None, help="review sample size (default: from counts)")
    p.add_argument("--b", type=int, default=10_000, help="null replications (default 10000)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None, help="default: $POPSTAB_SEED or 0")
    p.add_argument("--workers", type=int, default=1)


def cmd_compute(args) -> int:
    pairs = read_snapshot(args.snapshot)
    report = compute_report(pairs, parse_metrics(_csv_list(args.metrics)), _thresholds(args),
                            build_metadata(extra={"snapshot": str(args.snapshot)}))
    _emit(report.render(args.format), args.out)
    return report.exit_code()


def cmd_pvalue(args) -> int:
    pairs = read_snapshot(args.snapshot)
    selected = parse_metrics(_csv_list(args.metric))
    seed = _default_seed() if args.seed is None else args.seed
    thresholds = _thresholds(args)
    report = compute_report(pairs, selected, thresholds, build_metadata(extra={"snapshot": str(args.snapshot)}))
    attach_monte_carlo(report, selected, b=args.b, seed=seed, m=args.m, workers=args.workers)
    if args.format == "table":
        text = report.to_table()
        lines = [f"critical values (alpha={args.alpha}, b={args.b}, seed={seed}):"]
        for row in report.rows:
            for metric, result in row.mc.items():
                lines.append(f"  {row.name:<12} {result.statistic_name:<22} {result.critical_value:.6g}")
        text += "\n".join(lines) + f"\ngenerator: {montecarlo.GENERATOR_NAME}\n"
        _emit(text, args.out)
    else:
        _emit(report.render(args.format), args.out)
    return 0


def cmd_critical(args) -> int:
    selector = montecarlo.MetricSelector.parse(args.metric)
    seed = _default_seed() if args.seed is None else args.seed
    targets = []
    if args.q:
        props = [float(v) for v in _csv_list(args.q)]
        q = ProportionVector(tuple(str(j) for j in range(len(props))), tuple(props), not args.nominal)
        targets.append(("q", q, None))
    else:
        if not args.snapshot:
            raise ValueError("give a snapshot file or --q")
        for name, pair in read_snapshot(args.snapshot):
            targets.append((name, pair.development, pair.review_count))
    lines = [f"# statistic={selector.value} alpha={args.alpha} b={args.b} seed={seed}",
             f"# generator={montecarlo.GENERATOR_NAME}",
             "attribute,m,beta,critical_value"]
    for name, q, review_count in targets:
        m = args.m if args.m is not None else review_count
        if m is None:
            raise ValueError(f"{name}: pass --m (sample size unknown)")
        cfg = montecarlo.McConfig(m=m, b=args.b, alpha=args.alpha, seed=seed, workers=args.workers)
        result = montecarlo.critical_value(selector, q, cfg)
        lines.append(f"{name},{m},{cfg.beta},{result.critical_value!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_simulate(args) -> int:
    config = simulation.ScenarioConfig.load(args.config) if args.config else simulation.get_scenario(args.scenario)
    seed = _default_seed() if args.seed is None else args.seed
    size = args.size or config.population_size
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dev = simulation.simulate(config, simulation.Which.DEVELOPMENT, seed, size)
    review = simulation.simulate(config, simulation.Which.REVIEW, seed, size)
    simulation.write_population_csv(dev, out / "development.csv")
    simulation.write_population_csv(review, out / "review.csv")
    names = config.attribute_names
    pairs = [(name, simulation.snapshot(dev, review, name)) for name in names]
    counts = [(dev.counts(name), review.counts(name)) for name in names]
    write_snapshot(out / "snapshot.csv", pairs, counts,
                   comments=[f"scenario={config.name} seed={seed} size={size}"])
    log.info("wrote %s", ", ".join(str(out / f) for f in ("development.csv", "review.csv", "snapshot.csv")))
    return 0


def cmd_reproduce(args) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    rep = reproduce.reproduce(seed=seed, size=args.size, b=args.b)
    if args.out:
        reproduce.write_outputs(rep, args.out)
    sys.stdout.write(rep.comparison_text())
    return 0 if rep.all_passed else 2


def cmd_scorecard_fit(args) -> int:
    columns, outcomes = simulation.read_population_csv(args.population)
    if args.attributes:
        wanted = _csv_list(args.attributes)
        columns = {name: columns[name] for name in wanted}
    model = scorecard.build_scorecard(columns, outcomes, smoothing=args.smoothing)
    lines = [f"fitted {len(model.attributes)} attributes on {outcomes.size} customers "
             f"({int(outcomes.sum())} defaults); gradient max-norm {model.fit.gradient_norm:.2e} "
             f"after {model.fit.iterations} Newton steps"]
    if model.fit.separated:
        lines.append("warning: coefficient beyond separation cap; data may be separable")
    for name, labels in columns.items():
        counts = scorecard.GroupedCounts.from_labels(labels, outcomes, model_levels(model, name)).drop_empty()
        value, band = scorecard.iv(counts, args.smoothing)
        lines.append(f"  IV {name:<12} {value:.4f} ({band.value})")
    if args.out:
        model.save(args.out)
        lines.append(f"model written to {args.out}")
    else:
        lines.append(json.dumps(model.to_dict(), indent=2))
    if args.review:
        rev_columns, _ = simulation.read_population_csv(args.review)
        dev_pd = scorecard.predict_pd(model, columns)
        rev_pd = scorecard.predict_pd(model, {name: rev_columns[name] for name in columns})
        grouping = scorecard.pd_groups(dev_pd, rev_pd, args.groups)
        lines.append(f"PD groups (g={args.groups}) cut points: "
                     + ", ".join(f"{c:.5f}" for c in grouping.cut_points))
        lines.append("  development: " + ", ".join(f"{p:.4f}" for p in grouping.group_proportions_dev.props))
        lines.append("  review:      " + ", ".join(f"{p:.4f}" for p in grouping.group_proportions_review.props))
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def model_levels(model: scorecard.ScorecardModel, name: str):
    for attr, table in model.attributes:
        if attr == name:
            return table.levels
    return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="popstab", description="Population stability metrics for credit scorecard monitoring.")
    parser.add_argument("--version", action="version", version=f"popstab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="stability metrics for every attribute in a snapshot file")
    p.add_argument("snapshot")
    p.add_argument("--metrics", default=",".join(DEFAULT_METRICS))
    _add_threshold_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("pvalue", help="Monte-Carlo p-values and critical values")
    p.add_argument("snapshot")
    p.add_argument("--metric", "--metrics", dest="metric", default="psi")
    _add_mc_flags(p)
    _add_threshold_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_pvalue)

    p = sub.add_parser("critical", help="Monte-Carlo critical values under the null")
    p.add_argument("snapshot", nargs="?")
    p.add_argument("--q", default=None, help="comma-separated baseline proportions instead of a file")
    p.add_argument("--nominal", action="store_true", help="with --q: levels are unordered")
    p.add_argument("--metric", default="psi")
    _add_mc_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_critical)

    p = sub.add_parser("simulate", help="simulate development/review populations")
    p.add_argument("scenario", nargs="?", default=simulation.STABLE,
                   help="stable, stable-outcome or unstable")
    p.add_argument("--config", default=None, help="scenario JSON file instead of a built-in name")
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="rerun the three scenarios and compare with reference tables")
    p.add_argument("--out", default=None, help="directory for reports and comparison files")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--size", type=int, default=10_000)
    p.add_argument("--b", type=int, default=0, help="attach Monte-Carlo p-values with b replications")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("scorecard-fit", help="fit a WOE logistic scorecard on a population CSV")
    p.add_argument("population")
    p.add_argument("--attributes", default=None, help="comma-separated subset of attribute columns")
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--review", default=None, help="review population CSV for PD-group proportions")
    p.add_argument("--groups", type=int, default=10)
    p.add_argument("--out", default=None, help="model JSON path")
    p.set_defaults(func=cmd_scorecard_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SnapshotParseError, StabilityError, ScorecardError, ValueError, KeyError,
            OSError, simulation.CalibrationError, scorecard.ConvergenceError) as exc:
        print(f"popstab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Reading and writing attribute snapshot CSV files.

A snapshot file holds, for each attribute, its levels in order with either
counts or proportions for the development and review samples::

    # comment lines start with '#'
    attribute,level,level_order,dev_count,review_count,ordinal
    Gender,Female,0,6000,5500,true
    Gender,Male,1,4000,4500,true

``dev_prop``/``review_prop`` replace the count columns when proportions are
given. A file uses counts or proportions, never both.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

from popstab.metrics import ProportionVector, SnapshotPair

PROP_FILE_TOL = 1e-6
_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f"}


class SnapshotParseError(ValueError):
    def __init__(self, line: int, message: str, source: str = "<snapshot>"):
        super().__init__(f"{source}:{line}: {message}")
        self.line = line


def _parse_bool(text: str, line: int, source: str) -> bool:
    value = text.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise SnapshotParseError(line, f"ordinal flag must be true/false, got {text!r}", source)


def _check_header(header: list[str], line: int, source: str) -> None:
    required = {"attribute", "level", "level_order", "ordinal"}
    missing = required - set(header)
    if missing:
        raise SnapshotParseError(line, f"header lacks columns {sorted(missing)}", source)
    has_counts = {"dev_count", "review_count"} <= set(header)
    has_props = {"dev_prop", "review_prop"} <= set(header)
    if has_counts == has_props:
        raise SnapshotParseError(
            line,
            "header must carry exactly one of (dev_count, review_count) or (dev_prop, review_prop)",
            source,
        )


def parse_snapshot(text: str, source: str = "<snapshot>") -> list[tuple[str, SnapshotPair]]:
    """Parse snapshot CSV text into ``(attribute, SnapshotPair)`` in file order."""
    header = None
    header_line = 0
    records: dict[str, list] = {}
    for line_no, raw in enumerate(io.StringIO(text), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        cells = [c.strip() for c in next(csv.reader([raw]))]
        if header is None:
            header, header_line = cells, line_no
            _check_header(header, header_line, source)
            continue
        if len(cells) != len(header):
            raise SnapshotParseError(
                line_no, f"expected {len(header)} columns, found {len(cells)}", source
            )
        row = dict(zip(header, cells))
        records.setdefault(row["attribute"], []).append((line_no, row))

    if header is None:
        raise SnapshotParseError(1, "missing header row", source)
    has_counts = "dev_count" in header
    dev_col, rev_col = ("dev_count", "review_count") if has_counts else ("dev_prop", "review_prop")

    pairs = []
    for name, rows in records.items():
        parsed = []
        ordinal_flags = set()
        for line_no, row in rows:
            try:
                order = int(row["level_order"])
                dev = float(row[dev_col])
                rev = float(row[rev_col])
            except ValueError as exc:
                raise SnapshotParseError(line_no, f"bad numeric field: {exc}", source) from None
            if not (math.isfinite(dev) and math.isfinite(rev)) or dev < 0 or rev < 0:
                raise SnapshotParseError(line_no, "values must be finite and non-negative", source)
            if has_counts and (dev != int(dev) or rev != int(rev)):
                raise SnapshotParseError(line_no, "counts must be integers", source)
            ordinal_flags.add(_parse_bool(row["ordinal"], line_no, source))
            parsed.append((order, row["level"], dev, rev, line_no))
        first_line = rows[0][0]
        if len(ordinal_flags) != 1:
            raise SnapshotParseError(first_line, f"{name}: inconsistent ordinal flags", source)
        parsed.sort(key=lambda item: item[0])
        levels = [item[1] for item in parsed]
        if len(set(levels)) != len(levels):
            raise SnapshotParseError(first_line, f"{name}: duplicate levels", source)
        if len({item[0] for item in parsed}) != len(parsed):
            raise SnapshotParseError(first_line, f"{name}: duplicate level_order values", source)
        if len(levels) < 2:
            raise SnapshotParseError(first_line, f"{name}: needs at least two levels", source)
        ordinal = ordinal_flags.pop()
        dev_vals = [item[2] for item in parsed]
        rev_vals = [item[3] for item in parsed]
        try:
            if has_counts:
                pair = SnapshotPair(
                    ProportionVector.from_counts(levels, dev_vals, ordinal),
                    ProportionVector.from_counts(levels, rev_vals, ordinal),
                    dev_count=int(sum(dev_vals)),
                    review_count=int(sum(rev_vals)),
                )
            else:
                for label, vals in (("development", dev_vals), ("review", rev_vals)):
                    total = math.fsum(vals)
                    if abs(total - 1.0) > PROP_FILE_TOL:
                        raise SnapshotParseError(
                            first_line, f"{name}: {label} proportions sum to {total}", source
                        )
                pair = SnapshotPair(
                    ProportionVector(tuple(levels), _renormalise(dev_vals), ordinal),
                    ProportionVector(tuple(levels), _renormalise(rev_vals), ordinal),
                )
        except SnapshotParseError:
            raise
        except ValueError as exc:
            raise SnapshotParseError(first_line, f"{name}: {exc}", source) from None
        pairs.append((name, pair))
    return pairs


def _renormalise(values: Sequence[float]) -> tuple[float, ...]:
    total = math.fsum(values)
    if abs(total - 1.0) <= 1e-12:
        return tuple(values)
    return tuple(v / total for v in values)


def read_snapshot(path) -> list[tuple[str, SnapshotPair]]:
    path = Path(path)
    return parse_snapshot(path.read_text(encoding="utf-8"), source=str(path))


def format_snapshot(
    pairs: Iterable[tuple[str, SnapshotPair]],
    counts: Sequence[tuple[Sequence[int], Sequence[int]]] | None = None,
    comments: Sequence[str] = (),
) -> str:
    """Serialise pairs as snapshot CSV.

    With ``counts`` (one ``(dev_counts, review_counts)`` per pair) the file
    carries integer counts; otherwise proportions written with ``repr`` so
    that a re-read reproduces them exactly.
    """
    pairs = list(pairs)
    buf = io.StringIO()
    for comment in comments:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    if counts is None:
        writer.writerow(["attribute", "level", "level_order", "dev_prop", "review_prop", "ordinal"])
    else:
        writer.writerow(["attribute", "level", "level_order", "dev_count", "review_count", "ordinal"])
    for idx, (name, pair) in enumerate(pairs):
        flag = "true" if pair.ordinal else "false"
        for j, level in enumerate(pair.levels):
            if counts is None:
                dev_value = repr(pair.development.props[j])
                rev_value = repr(pair.review.props[j])
            else:
                dev_value = str(int(counts[idx][0][j]))
                rev_value = str(int(counts[idx][1][j]))
            writer.writerow([name, level, j, dev_value, rev_value, flag])
    return buf.getvalue()


def write_snapshot(path, pairs, counts=None, comments: Sequence[str] = ()) -> None:
    Path(path).write_text(format_snapshot(pairs, counts, comments), encoding="utf-8")

"""Population stability metrics on grouped (discrete) attributes.

Every metric compares the development proportions ``q`` of an attribute
against the review proportions ``P`` over the same ordered levels:

    PSI      sum (P_j - q_j) * ln(P_j / q_j)
    DPV      max_j |P_j - q_j| / q_j            (optionally over the first k* levels)
    Gamma    sum q_j * |P_j - q_j| / sqrt(q_j (1 - q_j))
    Overlap  sum min(q_j, P_j)
    KS       max_j |F_q(j) - F_P(j)|            (ordinal attributes only)

PAI works on raw (ungrouped) observations instead; see :func:`pai`.

The ``*_values`` helpers are vectorised over a 2-D array of review
proportions (one row per replication) and are what the Monte-Carlo engine
calls. The public functions wrap them with validation and banding.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SUM_TOL = 1e-9


class StabilityError(ValueError):
    """Raised when a metric cannot be evaluated on the given inputs.

    ``code`` is a short machine-readable tag (``ZeroBaselineLevel``,
    ``NominalAttributeKS`` ...) that report writers carry into their output.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class Metric(str, enum.Enum):
    PSI = "PSI"
    DPV = "DPV"
    EFFECT_SIZE = "EffectSize"
    OVERLAPPING = "Overlapping"
    KS = "KS"
    PAI = "PAI"


class Band(str, enum.Enum):
    NO_CHANGE = "NoChange"
    SMALL_CHANGE = "SmallChange"
    SUBSTANTIAL_CHANGE = "SubstantialChange"
    NOT_CLASSIFIED = "NotClassified"


ZERO_BASELINE_LEVEL = "ZeroBaselineLevel"
ZERO_REVIEW_LEVEL = "ZeroReviewLevel"
NOMINAL_ATTRIBUTE_KS = "NominalAttributeKS"
DEGENERATE_BASELINE = "DegenerateBaselineLevel"
ZERO_VARIANCE = "ZeroDevelopmentVariance"
LEVEL_MISMATCH = "LevelMismatch"


@dataclass(frozen=True)
class ProportionVector:
    """Proportions of an attribute over its ordered levels."""

    levels: tuple[str, ...]
    props: tuple[float, ...]
    ordinal: bool = True

    def __post_init__(self):
        levels = tuple(str(level) for level in self.levels)
        props = tuple(float(p) for p in self.props)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "props", props)
        if len(props) < 2:
            raise ValueError("an attribute needs at least two levels")
        if len(levels) != len(props):
            raise ValueError(f"{len(levels)} levels but {len(props)} proportions")
        if len(set(levels)) != len(levels):
            raise ValueError(f"duplicate level labels in {levels}")
        if any(not (0.0 <= p <= 1.0) or math.isnan(p) for p in props):
            raise ValueError(f"proportions must lie in [0, 1], got {props}")
        total = math.fsum(props)
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"proportions sum to {total!r}, not 1")

    @classmethod
    def from_counts(cls, levels: Sequence[str], counts: Sequence[float], ordinal: bool = True):
        counts = np.asarray(counts, dtype=float)
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        total = counts.sum()
        if total <= 0:
            raise ValueError("counts sum to zero")
        return cls(tuple(levels), tuple(counts / total), ordinal)

    @property
    def k(self) -> int:
        return len(self.props)

    def as_array(self) -> np.ndarray:
        return np.array(self.props, dtype=float)


@dataclass(frozen=True)
class SnapshotPair:
    """Development and review proportions of one attribute.

    ``dev_count`` and ``review_count`` are the sample sizes n and m when the
    proportions were derived from counts.
    """

    development: ProportionVector
    review: ProportionVector
    dev_count: Optional[int] = None
    review_count: Optional[int] = None

    def __post_init__(self):
        if self.development.levels != self.review.levels:
            raise StabilityError(
                LEVEL_MISMATCH,
                f"development levels {self.development.levels} differ from "
                f"review levels {self.review.levels}",
            )
        for count in (self.dev_count, self.review_count):
            if count is not None and count <= 0:
                raise ValueError("sample sizes must be positive")

    @classmethod
    def from_props(cls, q: Sequence[float], p: Sequence[float], levels=None, ordinal=True):
        """Convenience constructor with default level labels ``"0", "1", ...``."""
        if levels is None:
            levels = tuple(str(j) for j in range(len(q)))
        return cls(ProportionVector(levels, q, ordinal), ProportionVector(levels, p, ordinal))

    @property
    def levels(self) -> tuple[str, ...]:
        return self.development.levels

    @property
    def ordinal(self) -> bool:
        return self.development.ordinal

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.development.as_array(), self.review.as_array()


@dataclass(frozen=True)
class MetricOutcome:
    metric: Metric
    value: float
    band: Band = Band.NOT_CLASSIFIED
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric.value,
            "value": "inf" if self.infinite else self.value,
            "band": self.band.value,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class RawSamplePair:
    """Ungrouped attribute values at development (x) and review (y)."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        y = tuple(float(v) for v in self.y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if not x or not y:
            raise ValueError("both samples must be non-empty")


# --------------------------------------------------------------------------
# Vectorised kernels. ``q`` is 1-D (k,), ``P`` is (..., k).


def psi_values(q: np.ndarray, P: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (P - q) * (np.log(P) - np.log(q))
    # mixed zeros give (+-x) * (-+inf) = +inf already; 0 * nan for joint zeros
    terms = np.where((P == 0) & (q == 0), 0.0, terms)
    return terms.sum(axis=-1)


def dpv_values(q: np.ndarray, P: np.ndarray, k_star: Optional[int] = None) -> np.ndarray:
    q = np.asarray(q, dtype=float)[:k_star]
    P = np.asarray(P, dtype=float)[..., :k_star]
    return (np.abs(P - q) / q).max(axis=-1)


def gamma_values(q: np.ndarray, P: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    weights = np.sqrt(q / (1.0 - q))
    return (np.abs(np.asarray(P, dtype=float) - q) * weights).sum(axis=-1)


def overlap_values(q: np.ndarray, P: np.ndarray) -> np.ndarray:
    return np.minimum(np.asarray(q, dtype=float), np.asarray(P, dtype=float)).sum(axis=-1)


def ks_values(q: np.ndarray, P: np.ndarray) -> np.ndarray:
    Fq = np.cumsum(np.asarray(q, dtype=float))
    FP = np.cumsum(np.asarray(P, dtype=float), axis=-1)
    return np.abs(FP - Fq).max(axis=-1)


# --------------------------------------------------------------------------
# Bands


def psi_band(value: float) -> Band:
    if value < 0.1:
        return Band.NO_CHANGE
    if value < 0.25:
        return Band.SMALL_CHANGE
    return Band.SUBSTANTIAL_CHANGE


def pai_band(value: float) -> Band:
    if value < 1.1:
        return Band.NO_CHANGE
    if value < 1.5:
        return Band.SMALL_CHANGE
    return Band.SUBSTANTIAL_CHANGE


def threshold_band(value: float, threshold: float) -> Band:
    """Two-way band used for user thresholds (DPV delta, Gamma cutoff)."""
    return Band.SUBSTANTIAL_CHANGE if value > threshold else Band.NO_CHANGE


# --------------------------------------------------------------------------
# Public metrics


def psi(pair: SnapshotPair) -> MetricOutcome:
    """Population stability index with natural logarithm.

    A level present in one sample but absent in the other makes the index
    infinite; this is reported as a flagged value rather than raised.
    """
    q, P = pair.arrays()
    flags = []
    if np.any((q == 0) & (P > 0)):
        flags.append(ZERO_BASELINE_LEVEL)
    if np.any((P == 0) & (q > 0)):
        flags.append(ZERO_REVIEW_LEVEL)
    if flags:
        return MetricOutcome(Metric.PSI, math.inf, Band.SUBSTANTIAL_CHANGE, tuple(flags))
    value = float(psi_values(q, P))
    return MetricOutcome(Metric.PSI, max(value, 0.0), psi_band(value))


def dpv(pair: SnapshotPair, k_star: Optional[int] = None) -> MetricOutcome:
    """Largest relative change in a level proportion.

    Only the first ``k_star`` levels are considered when given, e.g. to drop
    levels for which credit is never granted.
    """
    q, P = pair.arrays()
    if k_star is not None and not (1 <= k_star <= len(q)):
        raise ValueError(f"k_star must lie in [1, {len(q)}], got {k_star}")
    considered = q[:k_star]
    if np.any(considered == 0):
        j = int(np.flatnonzero(considered == 0)[0])
        raise StabilityError(
            ZERO_BASELINE_LEVEL, f"level {pair.levels[j]!r} has zero development proportion"
        )
    return MetricOutcome(Metric.DPV, float(dpv_values(q, P, k_star)))


def _check_effect_size_baseline(pair: SnapshotPair, q: np.ndarray):
    bad = (q <= 0) | (q >= 1)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise StabilityError(
            DEGENERATE_BASELINE,
            f"level {pair.levels[j]!r} has development proportion {q[j]}; "
            "effect sizes need 0 < q_j < 1",
        )


def effect_sizes(pair: SnapshotPair) -> list[float]:
    """Per-level standardised change |P_j - q_j| / sqrt(q_j (1 - q_j))."""
    q, P = pair.arrays()
    _check_effect_size_baseline(pair, q)
    return (np.abs(P - q) / np.sqrt(q * (1.0 - q))).tolist()


def gamma(pair: SnapshotPair, cutoff: float = 0.1) -> MetricOutcome:
    """Development-weighted average of the per-level effect sizes.

    ``cutoff`` defaults to 0.1; values above it are banded SubstantialChange.
    """
    q, P = pair.arrays()
    _check_effect_size_baseline(pair, q)
    value = float(gamma_values(q, P))
    return MetricOutcome(Metric.EFFECT_SIZE, value, threshold_band(value, cutoff))


def overlap(pair: SnapshotPair) -> MetricOutcome:
    q, P = pair.arrays()
    value = float(overlap_values(q, P))
    return MetricOutcome(Metric.OVERLAPPING, min(value, 1.0))


def ks(pair: SnapshotPair) -> MetricOutcome:
    """Kolmogorov-Smirnov distance between the two cumulative distributions.

    Cumulative sums only make sense when level order is meaningful, so
    nominal attributes are rejected.
    """
    if not pair.ordinal or not pair.review.ordinal:
        raise StabilityError(
            NOMINAL_ATTRIBUTE_KS, "KS needs ordered levels; attribute is nominal"
        )
    q, P = pair.arrays()
    return MetricOutcome(Metric.KS, float(ks_values(q, P)))


def pai(samples: RawSamplePair) -> MetricOutcome:
    """Population accuracy index for a simple linear regression on one attribute.

    Both mean squared deviations are taken about the development mean.
    """
    x = np.asarray(samples.x)
    y = np.asarray(samples.y)
    centre = x.mean()
    denominator = np.mean((x - centre) ** 2)
    if denominator <= 0:
        raise StabilityError(ZERO_VARIANCE, "development sample has zero variance")
    value = 0.5 * (1.0 + np.mean((y - centre) ** 2) / denominator)
    return MetricOutcome(Metric.PAI, float(value), pai_band(value))

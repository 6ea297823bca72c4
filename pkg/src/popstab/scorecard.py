"""A minimal credit scorecard: WOE encoding, IV, logistic fit, PD groups."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from popstab.metrics import ProportionVector

SEPARATION_CAP = 30.0
GRADIENT_TOL = 1e-6
MAX_ITER = 100


class ScorecardError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class IvBand(str, enum.Enum):
    UNPREDICTIVE = "unpredictive"
    WEAK = "weak"
    MEDIUM = "medium"
    STRONG = "strong"


def iv_band(value: float) -> IvBand:
    if value < 0.02:
        return IvBand.UNPREDICTIVE
    if value < 0.1:
        return IvBand.WEAK
    if value < 0.3:
        return IvBand.MEDIUM
    return IvBand.STRONG


@dataclass(frozen=True)
class GroupedCounts:
    """Observations ``n`` and defaults ``d`` per level of one attribute."""

    levels: tuple[str, ...]
    n: tuple[int, ...]
    d: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "d", tuple(int(v) for v in self.d))
        if not (len(self.levels) == len(self.n) == len(self.d)):
            raise ValueError("levels, n and d must have equal length")
        if any(d < 0 or d > n for n, d in zip(self.n, self.d)):
            raise ValueError("need 0 <= d_j <= n_j at every level")
        total, defaults = sum(self.n), sum(self.d)
        if total <= 0 or not (0 < defaults < total):
            raise ValueError("need at least one default and one non-default")

    @classmethod
    def from_labels(cls, labels: Sequence, outcomes: Sequence, levels: Optional[Sequence[str]] = None):
        labels = np.asarray(labels).astype(str)
        outcomes = np.asarray(outcomes, dtype=bool)
        if levels is None:
            levels = sorted(set(labels.tolist()))
        n = [int(np.sum(labels == lvl)) for lvl in levels]
        d = [int(np.sum(outcomes[labels == lvl])) for lvl in levels]
        return cls(tuple(levels), tuple(n), tuple(d))

    def drop_empty(self) -> "GroupedCounts":
        keep = [j for j, n in enumerate(self.n) if n > 0]
        return GroupedCounts(
            tuple(self.levels[j] for j in keep),
            tuple(self.n[j] for j in keep),
            tuple(self.d[j] for j in keep),
        )


@dataclass(frozen=True)
class WoeTable:
    levels: tuple[str, ...]
    woe: tuple[float, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.woe):
            raise ValueError("levels and woe must have equal length")
        if not all(math.isfinite(w) for w in self.woe):
            raise ValueError("WOE values must be finite")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.levels, self.woe))

    def encode(self, labels: Sequence) -> np.ndarray:
        lookup = self.as_dict()
        out = np.empty(len(labels))
        for i, label in enumerate(labels):
            try:
                out[i] = lookup[str(label)]
            except KeyError:
                raise ScorecardError("UnknownLevel", f"level {label!r} not in WOE table") from None
        return out


def _woe_terms(counts: GroupedCounts, smoothing: float):
    n = np.asarray(counts.n, dtype=float)
    d = np.asarray(counts.d, dtype=float)
    if smoothing == 0:
        bad = (d == 0) | (d == n)
        if np.any(bad):
            j = int(np.flatnonzero(bad)[0])
            raise ScorecardError(
                "DegenerateLevel",
                f"level {counts.levels[j]!r} has {int(d[j])} defaults out of {int(n[j])}",
            )
    goods = n - d + smoothing
    bads = d + smoothing
    goods_share = goods / goods.sum()
    bads_share = bads / bads.sum()
    return goods_share, bads_share, np.log(goods_share / bads_share)


def woe(counts: GroupedCounts, smoothing: float = 0.0) -> WoeTable:
    """Weight of evidence ln(D (n_j - D_j) / (D_j (n - D))) per level.

    Levels with no defaults or no non-defaults have no finite WOE and raise
    ``DegenerateLevel`` unless an additive ``smoothing`` constant is given.
    """
    _, _, values = _woe_terms(counts, smoothing)
    return WoeTable(counts.levels, tuple(values.tolist()))


def iv(counts: GroupedCounts, smoothing: float = 0.0) -> tuple[float, IvBand]:
    goods_share, bads_share, values = _woe_terms(counts, smoothing)
    value = float(np.sum((goods_share - bads_share) * values))
    return value, iv_band(value)


# --------------------------------------------------------------------------
# Logistic regression


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def log_likelihood(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Bernoulli log-likelihood; ``X`` already contains the intercept column."""
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def gradient(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return X.T @ (y - sigmoid(X @ beta))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LogisticFit:
    intercept: float
    coefficients: tuple[float, ...]
    iterations: int
    gradient_norm: float
    loglik_history: tuple[float, ...]
    separated: bool = False
    dropped: tuple[int, ...] = ()


class ConvergenceError(RuntimeError):
    pass


def fit_logistic_raw(X, y, max_iter: int = MAX_ITER, tol: float = GRADIENT_TOL) -> LogisticFit:
    """Maximum-likelihood logistic regression by damped Newton iterations.

    Starts at zero; every accepted step is halved until the log-likelihood
    does not decrease. Zero-variance columns duplicate the intercept and are
    excluded (their coefficient is reported as 0).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ValueError("features and outcomes have different lengths")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("outcomes must be 0/1")
    if not (0 < y.sum() < y.size):
        raise ValueError("need at least one default and one non-default")

    constant = [j for j in range(X.shape[1]) if np.ptp(X[:, j]) == 0]
    active = [j for j in range(X.shape[1]) if j not in constant]
    A = _design(X[:, active])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise ScorecardError("RankDeficient", "feature matrix does not have full column rank")

    beta = np.zeros(A.shape[1])
    ll = log_likelihood(beta, A, y)
    history = [ll]
    grad = gradient(beta, A, y)
    iterations = 0
    while np.max(np.abs(grad)) >= tol:
        if iterations >= max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} iterations; gradient max-norm {np.max(np.abs(grad)):.3g}"
            )
        p = sigmoid(A @ beta)
        hessian = A.T @ (A * (p * (1 - p))[:, None])
        step = np.linalg.solve(hessian, grad)
        scale = 1.0
        for _ in range(60):
            candidate = beta + scale * step
            ll_new = log_likelihood(candidate, A, y)
            if ll_new >= ll:
                break
            scale *= 0.5
        else:
            raise ConvergenceError(
                f"step halving found no ascent; gradient max-norm {np.max(np.abs(grad)):.3g}"
            )
        beta, ll = candidate, ll_new
        history.append(ll)
        grad = gradient(beta, A, y)
        iterations += 1
        if np.max(np.abs(beta)) > SEPARATION_CAP:
            break

    coefficients = np.zeros(X.shape[1])
    coefficients[active] = beta[1:]
    return LogisticFit(
        intercept=float(beta[0]),
        coefficients=tuple(coefficients.tolist()),
        iterations=iterations,
        gradient_norm=float(np.max(np.abs(grad))),
        loglik_history=tuple(history),
        separated=bool(np.max(np.abs(beta)) > SEPARATION_CAP),
        dropped=tuple(constant),
    )


@dataclass(frozen=True)
class ScorecardModel:
    attributes: tuple[tuple[str, WoeTable], ...]
    coefficients: tuple[float, ...]
    intercept: float
    fit: Optional[LogisticFit] = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.attributes) != len(self.coefficients):
            raise ValueError("one coefficient per attribute is required")

    @property
    def attribute_names(self) -> list[str]:
        return [name for name, _ in self.attributes]

    def linear_score(self, customers: Mapping[str, Sequence]) -> np.ndarray:
        """Intercept plus coefficient-weighted WOEs, one value per customer."""
        score = None
        for (name, table), coef in zip(self.attributes, self.coefficients):
            if name not in customers:
                raise ScorecardError("UnknownAttribute", f"customer data lacks {name!r}")
            contribution = coef * table.encode(customers[name])
            score = contribution if score is None else score + contribution
        if score is None:
            n = len(next(iter(customers.values()))) if customers else 1
            score = np.zeros(n)
        return self.intercept + score

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "attributes": [
                {"name": name, "coefficient": coef, "woe": table.as_dict()}
                for (name, table), coef in zip(self.attributes, self.coefficients)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScorecardModel":
        attrs = []
        coefs = []
        for entry in data["attributes"]:
            levels = tuple(entry["woe"].keys())
            attrs.append((entry["name"], WoeTable(levels, tuple(float(v) for v in entry["woe"].values()))))
            coefs.append(float(entry["coefficient"]))
        return cls(tuple(attrs), tuple(coefs), float(data["intercept"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ScorecardModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_logistic(
    features,
    outcomes,
    attributes: Optional[Sequence[tuple[str, WoeTable]]] = None,
    **kwargs,
) -> ScorecardModel:
    """Fit a scorecard to per-customer WOE feature vectors (one column per attribute)."""
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if attributes is None:
        attributes = tuple((f"x{j}", WoeTable((), ())) for j in range(X.shape[1]))
    if len(attributes) != X.shape[1]:
        raise ValueError("one attribute entry per feature column is required")
    result = fit_logistic_raw(X, outcomes, **kwargs)
    return ScorecardModel(tuple(attributes), result.coefficients, result.intercept, result)


def build_scorecard(
    customers: Mapping[str, Sequence],
    outcomes: Sequence,
    levels: Optional[Mapping[str, Sequence[str]]] = None,
    smoothing: float = 0.0,
) -> ScorecardModel:
    """WOE-encode every attribute and fit the logistic model on the encodings.

    Levels that no customer occupies are dropped before WOE is computed.
    """
    outcomes = np.asarray(outcomes, dtype=float)
    tables = []
    columns = []
    for name, labels in customers.items():
        order = None if levels is None else levels.get(name)
        counts = GroupedCounts.from_labels(labels, outcomes, order).drop_empty()
        table = woe(counts, smoothing)
        tables.append((name, table))
        columns.append(table.encode(labels))
    X = np.column_stack(columns) if columns else np.zeros((outcomes.size, 0))
    return fit_logistic(X, outcomes, tables)


def predict_pd(model: ScorecardModel, customers: Mapping[str, Sequence]) -> np.ndarray:
    return sigmoid(model.linear_score(customers))


# --------------------------------------------------------------------------
# PD groups


@dataclass(frozen=True)
class PdGrouping:
    cut_points: tuple[float, ...]
    group_proportions_dev: ProportionVector
    group_proportions_review: ProportionVector

    @property
    def groups(self) -> int:
        return len(self.cut_points) + 1


def assign_groups(pds, cut_points: Sequence[float]) -> np.ndarray:
    """Group index per PD; group j covers [cut_{j-1}, cut_j), outer groups are open."""
    return np.searchsorted(np.asarray(cut_points), np.asarray(pds, dtype=float), side="right")


def pd_groups(dev_pds, review_pds, g: int = 10) -> PdGrouping:
    """Equal-frequency PD groups cut on the development sample."""
    dev = np.sort(np.asarray(dev_pds, dtype=float))
    review = np.asarray(review_pds, dtype=float)
    if g < 2:
        raise ValueError("need at least two groups")
    if dev.size < g:
        raise ValueError(f"{dev.size} development PDs cannot form {g} groups")
    distinct = np.unique(dev).size
    if distinct < g:
        raise ScorecardError("TooFewDistinctPds", f"only {distinct} distinct PDs; at most {distinct} groups")
    cuts = []
    for i in range(1, g):
        r = (i * dev.size) // g
        cuts.append(0.5 * (dev[r - 1] + dev[r]))
    if np.any(np.diff(cuts) <= 0):
        raise ScorecardError(
            "TooFewDistinctPds", f"tied PDs collapse the {g} equal-frequency groups; reduce g"
        )
    labels = tuple(f"G{j + 1}" for j in range(g))
    dev_counts = np.bincount(assign_groups(dev, cuts), minlength=g)
    review_counts = np.bincount(assign_groups(review, cuts), minlength=g)
    return PdGrouping(
        tuple(float(c) for c in cuts),
        ProportionVector.from_counts(labels, dev_counts),
        ProportionVector.from_counts(labels, review_counts),
    )

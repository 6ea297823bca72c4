"""Multinomial null simulation for critical values and p-values.

Under population stability the review counts m*P follow a multinomial
distribution with parameters (m, q). Drawing ``b`` such samples and
evaluating a metric on each gives its null distribution; the critical value
at level alpha is the order statistic at 1-based index floor(b * (1 - alpha)).

Replications are generated in fixed-size blocks. Each block owns a random
stream derived from ``(seed, block index)`` so the draws do not depend on
how many workers evaluate them.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from popstab import metrics
from popstab.metrics import ProportionVector, SnapshotPair, StabilityError

BLOCK_SIZE = 4096
GENERATOR_NAME = "numpy.random.PCG64DXSM seeded by SeedSequence(seed, spawn_key=(block,))"
# observed statistic and null draws are computed along different float paths
TIE_SLACK = 1e-12


class MetricSelector(str, enum.Enum):
    PSI = "PSI"
    DPV = "DPV"
    EFFECT_SIZE_GAMMA = "EffectSizeGamma"
    OVERLAPPING_COMPLEMENT = "OverlappingComplement"
    KS = "KS"

    @classmethod
    def parse(cls, name: str) -> "MetricSelector":
        aliases = {
            "psi": cls.PSI,
            "dpv": cls.DPV,
            "gamma": cls.EFFECT_SIZE_GAMMA,
            "effectsize": cls.EFFECT_SIZE_GAMMA,
            "effectsizegamma": cls.EFFECT_SIZE_GAMMA,
            "overlap": cls.OVERLAPPING_COMPLEMENT,
            "overlapping": cls.OVERLAPPING_COMPLEMENT,
            "overlappingcomplement": cls.OVERLAPPING_COMPLEMENT,
            "ks": cls.KS,
        }
        try:
            return aliases[name.replace("_", "").replace("-", "").lower()]
        except KeyError:
            raise ValueError(f"unknown metric {name!r}") from None


def _kernel(selector: MetricSelector) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if selector is MetricSelector.PSI:
        return metrics.psi_values
    if selector is MetricSelector.DPV:
        return metrics.dpv_values
    if selector is MetricSelector.EFFECT_SIZE_GAMMA:
        return metrics.gamma_values
    if selector is MetricSelector.OVERLAPPING_COMPLEMENT:
        return lambda q, P: 1.0 - metrics.overlap_values(q, P)
    if selector is MetricSelector.KS:
        return metrics.ks_values
    raise ValueError(selector)


def check_computable(selector: MetricSelector, q: ProportionVector):
    """Raise StabilityError if ``selector`` is undefined for baseline ``q``."""
    arr = q.as_array()
    if selector is MetricSelector.DPV and np.any(arr == 0):
        raise StabilityError(metrics.ZERO_BASELINE_LEVEL, "DPV needs every q_j > 0")
    if selector is MetricSelector.EFFECT_SIZE_GAMMA and np.any((arr <= 0) | (arr >= 1)):
        raise StabilityError(metrics.DEGENERATE_BASELINE, "Gamma needs 0 < q_j < 1")
    if selector is MetricSelector.KS and not q.ordinal:
        raise StabilityError(metrics.NOMINAL_ATTRIBUTE_KS, "KS needs ordered levels")


def statistic(selector: MetricSelector, pair: SnapshotPair) -> float:
    """Observed value of the selected statistic (1 - overlap for overlapping)."""
    check_computable(selector, pair.development)
    q, P = pair.arrays()
    return float(_kernel(selector)(q, P))


@dataclass(frozen=True)
class McConfig:
    m: int
    b: int = 10_000
    alpha: float = 0.05
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.b < 100:
            raise ValueError("b must be at least 100")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.beta < 1:
            raise ValueError("floor(b * (1 - alpha)) must be at least 1")

    @property
    def beta(self) -> int:
        # 1-based index; the nudge absorbs b*(1-alpha) landing an ulp below an integer
        return math.floor(self.b * (1.0 - self.alpha) + 1e-9)


@dataclass(frozen=True)
class McResult:
    statistic_name: str
    null_draws_sorted: np.ndarray
    critical_value: float
    p_value: Optional[float] = None
    observed: Optional[float] = None
    generator: str = GENERATOR_NAME

    def to_dict(self, include_draws: bool = False) -> dict:
        out = {
            "statistic": self.statistic_name,
            "critical_value": _jsonable(self.critical_value),
            "p_value": self.p_value,
            "observed": None if self.observed is None else _jsonable(self.observed),
            "b": int(self.null_draws_sorted.size),
            "generator": self.generator,
        }
        if include_draws:
            out["null_draws_sorted"] = [_jsonable(v) for v in self.null_draws_sorted]
        return out


def _jsonable(value: float):
    return "inf" if math.isinf(value) else float(value)


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64DXSM(np.random.SeedSequence(seed, spawn_key=(block,))))


def multinomial_counts(rng: np.random.Generator, m: int, q: np.ndarray, size: int) -> np.ndarray:
    """``size`` multinomial(m, q) count vectors via k-1 conditional binomials."""
    q = np.asarray(q, dtype=float)
    k = q.size
    counts = np.zeros((size, k), dtype=np.int64)
    remaining = np.full(size, m, dtype=np.int64)
    mass_left = 1.0
    for j in range(k - 1):
        if mass_left <= 0:
            break
        prob = min(max(q[j] / mass_left, 0.0), 1.0)
        counts[:, j] = rng.binomial(remaining, prob)
        remaining -= counts[:, j]
        mass_left -= q[j]
    counts[:, k - 1] = remaining
    return counts


def sample_null_proportions(q: ProportionVector, m: int, rng: np.random.Generator) -> ProportionVector:
    """One review sample of size m drawn under the null hypothesis p = q."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    counts = multinomial_counts(rng, m, q.as_array(), 1)[0]
    return ProportionVector(q.levels, tuple(counts / m), q.ordinal)


def null_draws(selector: MetricSelector, q: ProportionVector, cfg: McConfig) -> np.ndarray:
    """Unsorted null realisations of the statistic, in replication order."""
    check_computable(selector, q)
    kernel = _kernel(selector)
    qa = q.as_array()
    n_blocks = -(-cfg.b // BLOCK_SIZE)

    def run_block(block: int) -> np.ndarray:
        # always draw a full block so replication i does not depend on b
        size = min(BLOCK_SIZE, cfg.b - block * BLOCK_SIZE)
        rng = block_generator(cfg.seed, block)
        P = multinomial_counts(rng, cfg.m, qa, BLOCK_SIZE)[:size] / cfg.m
        return kernel(qa, P)

    if cfg.workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run_block, range(n_blocks)))
    else:
        parts = [run_block(block) for block in range(n_blocks)]
    return np.concatenate(parts)


def critical_value(selector: MetricSelector, q: ProportionVector, cfg: McConfig) -> McResult:
    draws = np.sort(null_draws(selector, q, cfg), kind="stable")
    return McResult(selector.value, draws, float(draws[cfg.beta - 1]))


def p_value(selector: MetricSelector, pair: SnapshotPair, cfg: McConfig) -> McResult:
    """Monte-Carlo p-value: share of null draws at least as large as observed."""
    observed = statistic(selector, pair)
    result = critical_value(selector, pair.development, cfg)
    draws = result.null_draws_sorted
    # draws are sorted: count of draws >= observed - slack
    n_ge = draws.size - int(np.searchsorted(draws, observed - TIE_SLACK, side="left"))
    return McResult(
        result.statistic_name,
        draws,
        result.critical_value,
        p_value=n_ge / cfg.b,
        observed=observed,
    )

"""Range statistics, mean/SD aggregation, test-retest reliability and comparisons."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AnalysisError

BANDS = (
    (0.60, "fair"),
    (0.70, "moderate"),
    (0.80, "acceptable"),
    (0.90, "good"),
)


@dataclass(frozen=True)
class RangeStats:
    min: float
    max: float
    range: float
    units: str = ""

    def as_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "range": self.range, "units": self.units}


@dataclass(frozen=True)
class AggregateStats:
    mean: float
    sd: float | None  # None when it cannot be estimated (n < 2, or unpublished)
    n: int | None
    provenance: str = "computed"

    def as_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "n": self.n, "provenance": self.provenance}

    def interval(self) -> "UncertaintyInterval":
        if self.sd is None:
            raise AnalysisError("no standard deviation available for an uncertainty interval")
        return UncertaintyInterval(self.mean - self.sd, self.mean + self.sd)


@dataclass(frozen=True)
class ReliabilityResult:
    alpha: float
    band: str
    trial_pair: tuple[str, str]


@dataclass(frozen=True)
class UncertaintyInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise AnalysisError(f"interval lower bound {self.lo} exceeds upper bound {self.hi}")

    @classmethod
    def from_mean_sd(cls, mean: float, sd: float) -> "UncertaintyInterval":
        return cls(mean - sd, mean + sd)

    def rounded(self, digits: int = 2) -> "UncertaintyInterval":
        return UncertaintyInterval(round(self.lo, digits), round(self.hi, digits))


def _finite(values: Sequence[float], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise AnalysisError(f"{what} contains non-finite values")
    return arr


def range_stats(series: Sequence[float], units: str = "") -> RangeStats:
    arr = _finite(series, "series")
    if arr.size == 0:
        raise AnalysisError("range of an empty series")
    lo, hi = float(arr.min()), float(arr.max())
    return RangeStats(lo, hi, hi - lo, units)


def aggregate(values: Sequence[float]) -> AggregateStats:
    """Arithmetic mean and sample (n - 1) standard deviation."""
    arr = _finite(values, "values")
    if arr.size < 2:
        raise AnalysisError(f"aggregation needs at least 2 values, got {arr.size}")
    return AggregateStats(float(arr.mean()), float(arr.std(ddof=1)), int(arr.size))


def band(alpha: float) -> str:
    """Qualitative band of a reliability coefficient."""
    if math.isnan(alpha):
        raise AnalysisError("alpha is NaN")
    for upper, label in BANDS:
        if alpha < upper:
            return label
    return "excellent"


def reliability_alpha(trial_a: Sequence[float], trial_b: Sequence[float],
                      labels: tuple[str, str] = ("a", "b")) -> ReliabilityResult:
    """Two-item Cronbach alpha between paired repetitions of two trials."""
    a = _finite(trial_a, "trial_a")
    b = _finite(trial_b, "trial_b")
    if a.size != b.size:
        raise AnalysisError(f"trial lengths differ ({a.size} vs {b.size})")
    if a.size < 3:
        raise AnalysisError(f"reliability needs at least 3 paired values, got {a.size}")
    total = np.var(a + b, ddof=1)
    if total <= 0.0:
        raise AnalysisError("zero total variance; alpha undefined")
    alpha = float(2.0 * (1.0 - (np.var(a, ddof=1) + np.var(b, ddof=1)) / total))
    return ReliabilityResult(alpha, band(alpha), (labels[0], labels[1]))


def percent_difference(reference: float, value: float) -> float:
    if reference == 0:
        raise AnalysisError("percent difference against a zero reference")
    return 100.0 * abs(value - reference) / abs(reference)


def interval_overlap(a: UncertaintyInterval, b: UncertaintyInterval) -> UncertaintyInterval | None:
    lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
    return UncertaintyInterval(lo, hi) if lo <= hi else None

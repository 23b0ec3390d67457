"""Aggregate statistics: means, sample SD, 95% confidence intervals, fairness."""

import csv
import math
from dataclasses import dataclass

Z_95 = 1.96  # normal-approximation quantile; adequate for ~100 samples


@dataclass
class StatSummary:
    n: int
    mean: float
    sd: float | None  # undefined for n == 1
    ci_low: float
    ci_high: float


def summarize(values):
    """Mean, sample (n-1) SD and 95% CI of a list of reals."""
    values = list(values)
    if not values:
        raise ValueError("cannot summarize an empty list")
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return StatSummary(n=1, mean=mean, sd=None, ci_low=mean, ci_high=mean)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    sd = math.sqrt(var)
    half = Z_95 * sd / math.sqrt(n)
    return StatSummary(n=n, mean=mean, sd=sd, ci_low=mean - half, ci_high=mean + half)


def improvement_pct(before, after):
    """Relative change in percent against a positive baseline."""
    if before <= 0:
        raise ValueError("baseline must be positive")
    return 100.0 * (after - before) / before


def fairness_sd(values):
    """Sample SD of a subset's mean SINRs; lower means fairer."""
    values = list(values)
    if not values:
        raise ValueError("empty subset")
    if len(values) == 1:
        return None
    return summarize(values).sd


def write_summary_csv(rows, path):
    """Rows of (metric, subset, StatSummary)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "subset", "n", "mean", "sd", "ci_low", "ci_high"])
        for metric, subset, s in rows:
            writer.writerow(
                [
                    metric,
                    subset,
                    s.n,
                    repr(s.mean),
                    "" if s.sd is None else repr(s.sd),
                    repr(s.ci_low),
                    repr(s.ci_high),
                ]
            )

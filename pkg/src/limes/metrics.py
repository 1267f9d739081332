"""Accuracy bookkeeping, per-day aggregation, and the Wilcoxon signed-rank test."""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from .model import LinearModel, predict
from .stream import TimeStepBatch

METRICS = ("avg_of_avg", "avg_of_min")
EXACT_MAX_N = 20


def step_accuracy(model: LinearModel, eval_batch: TimeStepBatch) -> float:
    """Fraction of ``eval_batch`` classified correctly (one minus the mean 0/1 loss)."""
    if len(eval_batch) == 0:
        raise ValueError("cannot evaluate on an empty batch")
    return float(np.mean(predict(model, eval_batch.features) == eval_batch.labels))


@dataclass
class AccuracySeries:
    method: str
    realization: int
    steps: list[int] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)

    def append(self, t: int, acc: float) -> None:
        if self.steps and t <= self.steps[-1]:
            raise ValueError(f"time steps must increase: {self.steps[-1]} then {t}")
        if not 0.0 <= acc <= 1.0:
            raise ValueError(f"accuracy {acc} outside [0, 1]")
        self.steps.append(int(t))
        self.accuracy.append(float(acc))

    def __len__(self) -> int:
        return len(self.steps)


def day_aggregate(series, period: int = 24) -> list[tuple[int, float, float]]:
    """Mean and minimum over consecutive windows of ``period`` steps.

    Accepts an :class:`AccuracySeries` or a plain sequence of accuracies.
    A trailing partial window is dropped.
    """
    values = series.accuracy if isinstance(series, AccuracySeries) else list(series)
    if len(values) == 0:
        raise ValueError("empty series")
    if period < 1:
        raise ValueError("period must be >= 1")
    days = []
    for day in range(len(values) // period):
        window = values[day * period : (day + 1) * period]
        days.append((day + 1, math.fsum(window) / period, min(window)))
    return days


class WilcoxonResult(NamedTuple):
    statistic: float
    pvalue: float
    n: int
    exact: bool
    degenerate: bool = False


def _exact_pvalue(doubled_ranks: np.ndarray, w2: int) -> float:
    """P(min(W+, W-) <= w) under random signs, by counting all 2**n sign patterns.

    Works on doubled ranks so that mid-ranks stay integral.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks.tolist():
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    sums = np.arange(total + 1)
    extreme = (sums <= w2) | (sums >= total - w2)
    return min(1.0, int(counts[extreme].sum()) / 2 ** len(doubled_ranks))


def _normal_pvalue(ranks: np.ndarray, w: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    if var <= 0:
        return 1.0
    z = min(w - mean + 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(-z / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided paired Wilcoxon signed-rank test.

    Zero differences are dropped and tied magnitudes get mid-ranks.  The
    statistic is ``min(W+, W-)``.  For at most 20 non-zero differences the
    p-value is exact; above that a tie- and continuity-corrected normal
    approximation is used.  With no non-zero differences ``p = 1`` and
    ``degenerate`` is set.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must have equal length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValueError("need at least one pair")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        warnings.warn("all paired differences are zero; returning p = 1", RuntimeWarning, stacklevel=2)
        return WilcoxonResult(0.0, 1.0, 0, True, True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        return WilcoxonResult(w, _exact_pvalue(doubled, int(round(2 * w))), n, True)
    return WilcoxonResult(w, _normal_pvalue(ranks, w), n, False)


# --------------------------------------------------------------------------
# cross-realization summaries


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float | None
    values: tuple[float, ...]


@dataclass(frozen=True)
class PairTest:
    method_a: str
    method_b: str
    metric: str
    statistic: float
    pvalue: float


@dataclass
class MetricsReport:
    period: int
    methods: list[str]
    summary: dict[str, dict[str, MetricSummary]]
    per_day: dict[tuple[str, int], list[tuple[int, float, float]]]
    tests: list[PairTest] = field(default_factory=list)

    def value(self, method: str, metric: str) -> float:
        return self.summary[method][metric].mean


def _summarize(values: list[float]) -> MetricSummary:
    std = float(np.std(values, ddof=1)) if len(values) >= 2 else None
    return MetricSummary(math.fsum(values) / len(values), std, tuple(values))


def summarize_realizations(
    all_series: list[AccuracySeries], period: int = 24, pairing: str = "per-realization"
) -> MetricsReport:
    """Aggregate per-realization series into avg-of-avg / avg-of-min statistics.

    Pairwise Wilcoxon tests compare every pair of methods on each metric,
    pairing either per-realization aggregates or per-day values.
    """
    if pairing not in ("per-realization", "per-day"):
        raise ValueError(f"unknown pairing {pairing!r}")
    if not all_series:
        raise ValueError("no series to summarize")
    lengths = {len(s) for s in all_series}
    if len(lengths) != 1:
        raise ValueError(f"series have mismatched lengths: {sorted(lengths)}")

    methods = list(dict.fromkeys(s.method for s in all_series))
    by_method: dict[str, list[AccuracySeries]] = {m: [] for m in methods}
    for s in all_series:
        by_method[s.method].append(s)

    summary, per_day = {}, {}
    day_values: dict[str, dict[str, dict[int, list[float]]]] = {}
    for method in methods:
        runs = sorted(by_method[method], key=lambda s: s.realization)
        avg_vals, min_vals = [], []
        day_values[method] = {"avg_of_avg": {}, "avg_of_min": {}}
        for s in runs:
            days = day_aggregate(s, period)
            per_day[(method, s.realization)] = days
            avg_vals.append(math.fsum(d[1] for d in days) / len(days))
            min_vals.append(math.fsum(d[2] for d in days) / len(days))
            day_values[method]["avg_of_avg"][s.realization] = [d[1] for d in days]
            day_values[method]["avg_of_min"][s.realization] = [d[2] for d in days]
        summary[method] = {"avg_of_avg": _summarize(avg_vals), "avg_of_min": _summarize(min_vals)}

    report = MetricsReport(period, methods, summary, per_day)
    for ma, mb in itertools.combinations(methods, 2):
        for metric in METRICS:
            va, vb = day_values[ma][metric], day_values[mb][metric]
            shared = sorted(set(va) & set(vb))
            if pairing == "per-realization":
                xa = [math.fsum(va[r]) / len(va[r]) for r in shared]
                xb = [math.fsum(vb[r]) / len(vb[r]) for r in shared]
            else:
                xa = [v for r in shared for v in va[r]]
                xb = [v for r in shared for v in vb[r]]
            if not xa:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = wilcoxon_signed_rank(xa, xb)
            report.tests.append(PairTest(ma, mb, metric, res.statistic, res.pvalue))
    return report


# --------------------------------------------------------------------------
# CSV interfaces

SUMMARY_HEADER = ["method", "avg_of_avg_mean", "avg_of_avg_std", "avg_of_min_mean", "avg_of_min_std"]
TESTS_HEADER = ["method_a", "method_b", "metric", "W", "p"]
SERIES_HEADER = ["method", "realization", "t", "accuracy"]


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_summary_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for m in report.methods:
            s = report.summary[m]
            writer.writerow(
                [m, _fmt(s["avg_of_avg"].mean), _fmt(s["avg_of_avg"].std),
                 _fmt(s["avg_of_min"].mean), _fmt(s["avg_of_min"].std)]
            )


def write_tests_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TESTS_HEADER)
        for t in report.tests:
            writer.writerow([t.method_a, t.method_b, t.metric, _fmt(t.statistic), _fmt(t.pvalue)])


def write_series_csv(all_series: list[AccuracySeries], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for s in all_series:
            for t, acc in zip(s.steps, s.accuracy):
                writer.writerow([s.method, s.realization, t, _fmt(acc)])


def read_series_csv(path) -> list[AccuracySeries]:
    path = Path(path)
    series: dict[tuple[str, int], AccuracySeries] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SERIES_HEADER:
            raise ValueError(f"{path}: header must be {','.join(SERIES_HEADER)}")
        for row in reader:
            if len(row) != 4:
                raise ValueError(f"{path}:{reader.line_num}: expected 4 columns")
            key = (row[0], int(row[1]))
            if key not in series:
                series[key] = AccuracySeries(*key)
            series[key].append(int(row[2]), float(row[3]))
    return list(series.values())


def format_table(report: MetricsReport) -> str:
    """Plain-text method x {avg-of-avg, avg-of-min} table in percent."""

    def cell(s: MetricSummary) -> str:
        body = f"{100 * s.mean:6.2f}"
        return body + (f" ± {100 * s.std:.2f}" if s.std is not None else "")

    rows = [("method", "avg-of-avg", "avg-of-min")]
    for m in report.methods:
        rows.append((m, cell(report.summary[m]["avg_of_avg"]), cell(report.summary[m]["avg_of_min"])))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if report.tests:
        lines.append("")
        lines.append("pairwise Wilcoxon signed-rank tests (two-sided):")
        for t in report.tests:
            lines.append(f"  {t.method_a} vs {t.method_b} [{t.metric}]: W={t.statistic:g} p={t.pvalue:.4g}")
    return "\n".join(lines)

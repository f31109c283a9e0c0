"""Mixture-level bootstrap alignment tests and the t-test baseline."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import betainc

from .metrics import RunResult, is_absent

DEFAULT_LEVELS = (95, 99)


class MixtureGroupedSample:
    """Per-mixture lists of one metric's per-run values.

    Only group sums and counts matter to the bootstrap, so those are kept
    alongside the raw values.
    """

    def __init__(self, groups: Sequence[Sequence[float]]):
        if len(groups) == 0:
            raise ValueError("need at least one mixture")
        self.groups = [np.asarray(g, dtype=np.float64) for g in groups]
        if any(len(g) == 0 for g in self.groups):
            raise ValueError("every mixture group must be non-empty")
        self.sums = np.array([g.sum() for g in self.groups])
        self.counts = np.array([len(g) for g in self.groups], dtype=np.int64)

    def __len__(self):
        return len(self.groups)

    def subset(self, idx: Sequence[int]) -> "MixtureGroupedSample":
        return MixtureGroupedSample([self.groups[i] for i in idx])

    def mean(self, idx: Optional[Sequence[int]] = None) -> float:
        if idx is None:
            return float(self.sums.sum() / self.counts.sum())
        idx = np.asarray(idx)
        return float(self.sums[idx].sum() / self.counts[idx].sum())

    def values(self, idx: Optional[Sequence[int]] = None) -> np.ndarray:
        chosen = self.groups if idx is None else [self.groups[i] for i in idx]
        return np.concatenate(chosen)

    @classmethod
    def from_results(cls, results: Iterable[RunResult], metric: str) -> "MixtureGroupedSample":
        by_mixture: dict[int, list[float]] = defaultdict(list)
        for r in results:
            v = getattr(r, metric)
            if not is_absent(v):
                by_mixture[r.mixture_idx].append(float(v))
        return cls([by_mixture[m] for m in sorted(by_mixture)])


def percentile_rank_bounds(level: float, n: int) -> tuple[int, int]:
    """1-based nearest ranks of the lower and upper percentile endpoints."""
    tail = Fraction(100 - Fraction(level)) / 200
    lo = max(1, math.ceil(tail * n))
    hi = min(n, max(1, math.ceil((1 - tail) * n)))
    return lo, hi


@dataclass
class BootstrapReport:
    means: np.ndarray
    mean_of_means: float
    se: float
    ci: dict[int, tuple[float, float]]
    draw_size: int
    target: Optional[float] = None
    accept: dict[int, bool] = field(default_factory=dict)
    diff_ci: dict[int, tuple[float, float]] = field(default_factory=dict)


def bootstrap_means(sample: MixtureGroupedSample, B: int, draw_size: int, rng: np.random.Generator) -> np.ndarray:
    """B resampled means; each resample is ``draw_size`` mixtures drawn with replacement.

    The mean of a resample pools all of its runs, so mixtures weigh in by run count.
    """
    idx = rng.integers(0, len(sample), size=(B, draw_size))
    return sample.sums[idx].sum(axis=1) / sample.counts[idx].sum(axis=1)


def bootstrap_ci(
    sample: MixtureGroupedSample,
    B: int = 1000,
    draw_size: int = 500,
    levels: Sequence[int] = DEFAULT_LEVELS,
    rng: Optional[np.random.Generator] = None,
) -> BootstrapReport:
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 1 <= draw_size <= len(sample):
        raise ValueError(f"draw_size {draw_size} must lie in 1..{len(sample)}")
    rng = rng if rng is not None else np.random.default_rng()
    means = bootstrap_means(sample, B, draw_size, rng)
    ordered = np.sort(means)
    ci = {}
    for level in levels:
        lo, hi = percentile_rank_bounds(level, B)
        ci[level] = (float(ordered[lo - 1]), float(ordered[hi - 1]))
    se = float(np.std(means, ddof=1)) if B > 1 else 0.0
    return BootstrapReport(means, float(means.mean()), se, ci, draw_size)


def alignment_test(report: BootstrapReport, target: float) -> BootstrapReport:
    """Accept at a level iff ``target`` lies in the closed percentile interval."""
    report.target = float(target)
    report.accept = {lvl: lo <= target <= hi for lvl, (lo, hi) in report.ci.items()}
    report.diff_ci = {lvl: (lo - target, hi - target) for lvl, (lo, hi) in report.ci.items()}
    return report


def one_sample_t_test(values: Sequence[float], target: float) -> float:
    """Two-sided p-value of a one-sample t-test of mean == target."""
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two values")
    mean = x.mean()
    sd = x.std(ddof=1)
    if sd == 0.0:
        return 1.0 if mean == target else 0.0
    t = (mean - target) / (sd / math.sqrt(n))
    df = n - 1
    # two-sided tail of Student t via the regularized incomplete beta function
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


@dataclass
class SelfAlignmentResult:
    trials: int
    rejections: dict[tuple[str, str], int]

    def rates(self) -> dict[tuple[str, str], float]:
        return {key: n / self.trials for key, n in self.rejections.items()}


def self_alignment_experiment(
    sample: MixtureGroupedSample,
    trials: int = 1000,
    holdout: int = 500,
    draw_size: int = 500,
    B: int = 1000,
    rng: Optional[np.random.Generator] = None,
    levels: Sequence[int] = DEFAULT_LEVELS,
) -> SelfAlignmentResult:
    """False-rejection rates when a result set is tested against itself.

    Each trial holds out ``holdout`` random mixtures as the target mean. The
    bootstrap test draws from the remaining mixtures. The t-test uses the runs
    of one resample of ``draw_size`` mixtures from that remainder. Trial ``k``
    runs on its own sub-seed, so trials reproduce individually.
    """
    if len(sample) < holdout + draw_size:
        raise ValueError(f"need at least {holdout + draw_size} mixtures, have {len(sample)}")
    rng = rng if rng is not None else np.random.default_rng()
    trial_seeds = rng.integers(0, 2**63, size=trials)
    counts = {("bootstrap", f"{lvl}"): 0 for lvl in levels}
    counts.update({("t-test", f"{(100 - lvl) / 100:g}"): 0 for lvl in levels})
    for k in range(trials):
        trial_rng = np.random.default_rng(int(trial_seeds[k]))
        perm = trial_rng.permutation(len(sample))
        target = sample.mean(perm[:holdout])
        rest = sample.subset(perm[holdout:])

        report = bootstrap_ci(rest, B, draw_size, levels, trial_rng)
        alignment_test(report, target)
        for lvl in levels:
            counts[("bootstrap", f"{lvl}")] += not report.accept[lvl]

        pick = trial_rng.integers(0, len(rest), size=draw_size)
        p = one_sample_t_test(rest.values(pick), target)
        for lvl in levels:
            counts[("t-test", f"{(100 - lvl) / 100:g}")] += p < (100 - lvl) / 100
    return SelfAlignmentResult(trials, counts)


# --------------------------------------------------------------------------
# report tables

ALIGN_COLUMNS = [
    "experiment_id", "metric", "target", "mixtures", "boot_mean", "se",
    "ci95_lo", "ci95_hi", "diff95_lo", "diff95_hi", "accept95",
    "ci99_lo", "ci99_hi", "diff99_lo", "diff99_hi", "accept99",
]


def alignment_rows(
    results: Sequence[RunResult],
    targets: Mapping[tuple[str, str], float],
    B: int = 1000,
    draw_size: int = 500,
    seed: int = 0,
    warn=None,
) -> list[dict]:
    """One row per (experiment, metric) that has a target."""
    by_exp: dict[str, list[RunResult]] = defaultdict(list)
    for r in results:
        by_exp[r.experiment_id].append(r)
    rows = []
    for exp_id in sorted(by_exp):
        metrics = [m for (e, m) in sorted(targets) if e == exp_id]
        if not metrics:
            if warn:
                warn(f"no target for experiment {exp_id!r}; skipped")
            continue
        for metric in metrics:
            sample = MixtureGroupedSample.from_results(by_exp[exp_id], metric)
            size = min(draw_size, len(sample))
            rng = np.random.default_rng(np.random.SeedSequence([seed, len(rows)]))
            rep = alignment_test(bootstrap_ci(sample, B, size, DEFAULT_LEVELS, rng), targets[(exp_id, metric)])
            rows.append({
                "experiment_id": exp_id,
                "metric": metric,
                "target": rep.target,
                "mixtures": len(sample),
                "boot_mean": rep.mean_of_means,
                "se": rep.se,
                "ci95_lo": rep.ci[95][0], "ci95_hi": rep.ci[95][1],
                "diff95_lo": rep.diff_ci[95][0], "diff95_hi": rep.diff_ci[95][1],
                "accept95": int(rep.accept[95]),
                "ci99_lo": rep.ci[99][0], "ci99_hi": rep.ci[99][1],
                "diff99_lo": rep.diff_ci[99][0], "diff99_hi": rep.diff_ci[99][1],
                "accept99": int(rep.accept[99]),
            })
    return rows


REPORT_METRICS = (
    "zi_surplus", "la_surplus", "nbbo_spread_median", "bbo_spread_mean_median", "exec_time_mean", "zi_tx", "la_tx",
)
REPORT_COLUMNS = ["experiment_id", "env", "config", "latency", "metric", "mean", "n"]


def aggregate_rows(results: Iterable[RunResult]) -> list[dict]:
    """Long-format means per (experiment, metric); absent values are skipped."""
    sums: dict[tuple, list] = {}
    for r in results:
        key = (r.experiment_id, r.env, r.config, r.latency)
        acc = sums.setdefault(key, [[0.0, 0] for _ in REPORT_METRICS])
        for slot, metric in zip(acc, REPORT_METRICS):
            v = getattr(r, metric)
            if not is_absent(v):
                slot[0] += v
                slot[1] += 1
    rows = []
    for key in sorted(sums, key=lambda k: (k[1], k[2], k[3], k[0])):
        for (total, n), metric in zip(sums[key], REPORT_METRICS):
            rows.append({
                "experiment_id": key[0], "env": key[1], "config": key[2], "latency": key[3],
                "metric": metric, "mean": total / n if n else "", "n": n,
            })
    return rows


def write_rows(rows: Sequence[dict], columns: Sequence[str], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

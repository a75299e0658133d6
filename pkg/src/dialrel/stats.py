"""Correlation and significance machinery for the evaluation protocol.

Metrics are compared to averaged human ratings with Spearman and Pearson
correlations, a seeded two-sided permutation test for significance, multi-run
mean/std aggregation with the two significance markers ('*' = significant in
all runs, the double-dagger '‡' = in at least one), and the best-to-worst
Spearman ratio that summarizes how sensitive a metric is to the evaluation
dataset.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

P_SIGNIFICANT = 0.01
MIN_PERMUTATIONS = 1_000
MARKER_ALL = "*"
MARKER_SOME = "‡"

# Permutation matrices are generated in chunks capped at this many floats.
_PERM_CHUNK_BUDGET = 8_000_000


def rank_average(x) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean of their rank range."""
    x = np.asarray(x, dtype=np.float64)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    csum = np.cumsum(counts)
    mean_rank = csum - (counts - 1) / 2.0
    return mean_rank[inverse]


def _check_xy(x, y, min_n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise ValueError(f"x and y must be 1-d of equal length, got {x.shape} vs {y.shape}")
    if x.size < min_n:
        raise ValueError(f"need at least {min_n} points, got {x.size}")
    return x, y


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    x, y = _check_xy(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance: correlation undefined")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(x, y) -> float:
    """Pearson correlation of average-rank-transformed data."""
    x, y = _check_xy(x, y)
    return pearson(rank_average(x), rank_average(y))


def perm_pvalue(x, y, stat: str = "spearman", n_perm: int = 10_000, seed: int = 0) -> float:
    """Two-sided permutation p-value for a correlation statistic.

    p = (1 + #{|stat_perm| >= |stat_obs|}) / (n_perm + 1), permuting y with a
    generator seeded by ``seed``; deterministic given the seed.
    """
    if n_perm < MIN_PERMUTATIONS:
        raise ValueError(f"n_perm must be >= {MIN_PERMUTATIONS}, got {n_perm}")
    if stat not in ("spearman", "pearson"):
        raise ValueError(f"unknown statistic {stat!r}")
    x, y = _check_xy(x, y)
    if stat == "spearman":
        x, y = rank_average(x), rank_average(y)
    # Permuting either variable samples the same null; fixing which one by a
    # canonical order makes the p-value exactly invariant to relabeling.
    if x.tobytes() > y.tobytes():
        x, y = y, x

    xc = x - x.mean()
    sxx = float(xc @ xc)
    yc = y - y.mean()
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance: correlation undefined")
    obs = abs(float(xc @ yc) / math.sqrt(sxx * syy))

    # Permuting y permutes its (already computed) centered values, so each
    # permuted statistic is a single dot product; chunked to bound memory.
    rng = np.random.default_rng(seed)
    n = x.size
    chunk = max(1, _PERM_CHUNK_BUDGET // n)
    exceed = 0
    done = 0
    denom = math.sqrt(sxx * syy)
    while done < n_perm:
        m = min(chunk, n_perm - done)
        perms = rng.permuted(np.tile(yc, (m, 1)), axis=1)
        stats = (perms @ xc) / denom
        exceed += int(np.count_nonzero(np.abs(stats) >= obs))
        done += m
    return (1 + exceed) / (n_perm + 1)


@dataclass
class CorrelationReport:
    metric: str
    dataset: str
    split: str
    n: int
    spearman: float
    pearson: float
    p_spearman: float
    p_pearson: float
    runs: int = 1
    spearman_std: float = 0.0
    pearson_std: float = 0.0
    marker_spearman: str = ""
    marker_pearson: str = ""


def evaluate_scores(
    scores,
    targets,
    *,
    metric: str,
    dataset: str,
    split: str,
    n_perm: int = 10_000,
    seed: int = 0,
) -> CorrelationReport:
    """Correlate one run's metric scores against human ratings."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    s = spearman(scores, targets)
    p = pearson(scores, targets)
    p_s = perm_pvalue(scores, targets, "spearman", n_perm=n_perm, seed=seed)
    p_p = perm_pvalue(scores, targets, "pearson", n_perm=n_perm, seed=seed + 1)
    marker_s = MARKER_ALL if p_s < P_SIGNIFICANT else ""
    marker_p = MARKER_ALL if p_p < P_SIGNIFICANT else ""
    return CorrelationReport(
        metric=metric, dataset=dataset, split=split, n=int(scores.size),
        spearman=s, pearson=p, p_spearman=p_s, p_pearson=p_p,
        marker_spearman=marker_s, marker_pearson=marker_p,
    )


def _marker(pvals: list[float]) -> str:
    if all(p < P_SIGNIFICANT for p in pvals):
        return MARKER_ALL
    if any(p < P_SIGNIFICANT for p in pvals):
        return MARKER_SOME
    return ""


def aggregate_runs(reports: list[CorrelationReport]) -> CorrelationReport:
    """Mean and population std of correlations over repeat runs of one cell.

    All reports must share (metric, dataset, split).  The aggregate keeps the
    worst (largest) p-value of each statistic and sets the significance
    markers: '*' when every run was significant at p < 0.01, '‡' when at
    least one was.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    key = (reports[0].metric, reports[0].dataset, reports[0].split)
    for r in reports:
        if (r.metric, r.dataset, r.split) != key:
            raise ValueError(f"mixed report keys: {key} vs {(r.metric, r.dataset, r.split)}")
    s_vals = np.array([r.spearman for r in reports])
    p_vals = np.array([r.pearson for r in reports])
    ps_vals = [r.p_spearman for r in reports]
    pp_vals = [r.p_pearson for r in reports]

    def pop_std(vals):  # exactly 0 for identical runs (deterministic metrics)
        return 0.0 if np.ptp(vals) == 0.0 else float(vals.std())
    return CorrelationReport(
        metric=key[0], dataset=key[1], split=key[2], n=reports[0].n,
        spearman=float(s_vals.mean()), pearson=float(p_vals.mean()),
        p_spearman=max(ps_vals), p_pearson=max(pp_vals),
        runs=len(reports),
        spearman_std=pop_std(s_vals), pearson_std=pop_std(p_vals),
        marker_spearman=_marker(ps_vals), marker_pearson=_marker(pp_vals),
    )


@dataclass
class SensitivityReport:
    metric: str
    best_dataset: str
    worst_dataset: str
    best: float
    worst: float
    ratio: float
    per_dataset: dict[str, float] = field(default_factory=dict)


def sensitivity_ratio(per_dataset_spearman: dict[str, float], metric: str = "") -> SensitivityReport:
    """Best-to-worst Spearman ratio across datasets (closer to 1 is better).

    The sign is preserved (a negative worst correlation yields a negative
    ratio); a worst of exactly 0 yields infinity.
    """
    if len(per_dataset_spearman) < 2:
        raise ValueError("need Spearman values for at least 2 datasets")
    items = list(per_dataset_spearman.items())
    best_ds, best = max(items, key=lambda kv: kv[1])
    worst_ds, worst = min(items, key=lambda kv: kv[1])
    ratio = math.inf if worst == 0.0 else best / worst
    return SensitivityReport(
        metric=metric, best_dataset=best_ds, worst_dataset=worst_ds,
        best=best, worst=worst, ratio=ratio, per_dataset=dict(per_dataset_spearman),
    )


# ---------------------------------------------------------------------------
# Report files and table rendering

REPORT_SCHEMA_VERSION = 1


def write_report(report: CorrelationReport, path: str | Path) -> None:
    payload = {"schema_version": REPORT_SCHEMA_VERSION, **asdict(report)}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)
        f.write("\n")


def read_report(path: str | Path) -> CorrelationReport:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    version = payload.pop("schema_version", REPORT_SCHEMA_VERSION)
    if version != REPORT_SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported report schema version {version}")
    return CorrelationReport(**payload)


def _cell(value: float, std: float, runs: int, marker: str) -> str:
    if runs > 1:
        return f"{marker}{value:.2f} ({std:.2f})"
    return f"{marker}{value:.2f}"


def render_reports(reports: list[CorrelationReport], fmt: str = "markdown") -> str:
    """Render reports as a table: metrics as rows, datasets as column groups.

    Markdown mirrors the usual "S | P" column-pair layout with "mean (std)"
    cells and significance markers; CSV and JSON emit full-precision values
    that re-parse exactly.
    """
    if fmt == "json":
        return json.dumps(
            {"schema_version": REPORT_SCHEMA_VERSION, "reports": [asdict(r) for r in reports]},
            ensure_ascii=False, indent=2,
        )
    if fmt == "csv":
        cols = [
            "metric", "dataset", "split", "n", "runs",
            "spearman", "spearman_std", "p_spearman", "marker_spearman",
            "pearson", "pearson_std", "p_pearson", "marker_pearson",
        ]
        lines = [",".join(cols)]
        for r in reports:
            d = asdict(r)
            lines.append(",".join(repr(d[c]) if isinstance(d[c], float) else str(d[c]) for c in cols))
        return "\n".join(lines) + "\n"
    if fmt != "markdown":
        raise ValueError(f"unknown report format {fmt!r}")

    datasets = []
    metrics = []
    for r in reports:
        if r.dataset not in datasets:
            datasets.append(r.dataset)
        if r.metric not in metrics:
            metrics.append(r.metric)
    by_key = {(r.metric, r.dataset): r for r in reports}

    header = ["Metric"]
    for ds in datasets:
        header += [f"{ds} S", f"{ds} P"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join("---" for _ in header) + "|"]
    for m in metrics:
        row = [m]
        for ds in datasets:
            r = by_key.get((m, ds))
            if r is None:
                row += ["-", "-"]
            else:
                row.append(_cell(r.spearman, r.spearman_std, r.runs, r.marker_spearman))
                row.append(_cell(r.pearson, r.pearson_std, r.runs, r.marker_pearson))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"

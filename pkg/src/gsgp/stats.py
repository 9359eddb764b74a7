"""Multi-run aggregation and the Wilcoxon rank-sum test."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, astuple, fields

import numpy as np
from scipy.stats import rankdata

EXACT_MAX_TOTAL = 20


def median(values) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("median of an empty list")
    mid = v.size // 2
    if v.size % 2:
        return float(v[mid])
    return float((v[mid - 1] + v[mid]) / 2.0)


def _exact_two_sided(ranks, n_a) -> float:
    """P(|W - E[W]| >= |w_obs - E[W]|) over all equally likely subsets.

    Midranks are doubled to integers and the null distribution of the
    rank sum is counted with a subset-sum table: ways[j][s] is the number
    of j-element subsets of the pooled ranks whose doubled sum is s.
    """
    doubled = np.rint(np.asarray(ranks) * 2).astype(int)
    total = int(doubled.sum())
    N = doubled.size
    ways = [[0] * (total + 1) for _ in range(n_a + 1)]
    ways[0][0] = 1
    for r in doubled:
        for j in range(min(n_a, N), 0, -1):
            prev, row = ways[j - 1], ways[j]
            for s in range(total, r - 1, -1):
                if prev[s - r]:
                    row[s] += prev[s - r]
    w_obs = int(doubled[:n_a].sum())
    # the mean rank sum in doubled units is n_a * (N + 1)
    centre2 = n_a * (N + 1)
    dev_obs = abs(w_obs - centre2)
    hits = sum(c for s, c in enumerate(ways[n_a]) if c and abs(s - centre2) >= dev_obs)
    return hits / math.comb(N, n_a)


def wilcoxon_rank_sum(a, b, mode: str = "auto") -> float:
    """Two-sided p-value of the Wilcoxon rank-sum test (ties get midranks).

    ``exact`` enumerates the null distribution and needs
    ``len(a) + len(b) <= 20``; ``normal`` uses the tie-corrected normal
    approximation with continuity correction; ``auto`` picks exact when it
    is allowed.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 1 or b.size < 1:
        raise ValueError("both samples need at least one value")
    n, m = a.size, b.size
    N = n + m
    if mode == "auto":
        mode = "exact" if N <= EXACT_MAX_TOTAL else "normal"
    ranks = rankdata(np.concatenate([a, b]))
    if mode == "exact":
        if N > EXACT_MAX_TOTAL:
            raise ValueError(f"exact mode supports n + m <= {EXACT_MAX_TOTAL}; use mode='normal'")
        return min(1.0, _exact_two_sided(ranks, n))
    if mode != "normal":
        raise ValueError(f"unknown mode {mode!r}")
    w = ranks[:n].sum()
    mean = n * (N + 1) / 2.0
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(counts**3 - counts))
    var = n * m / 12.0 * ((N + 1) - tie_term / (N * (N - 1))) if N > 1 else 0.0
    if var <= 0:
        return 1.0
    z = max(abs(w - mean) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class BoxSummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    whisker_low: float
    whisker_high: float
    n_outliers: int


def box_summary(values) -> BoxSummary:
    """Five-number summary plus 1.5*IQR whiskers; quartiles by linear interpolation."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size < 4:
        raise ValueError("box_summary needs at least 4 values")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return BoxSummary(float(v[0]), float(q1), float(med), float(q3), float(v[-1]),
                      float(inside[0]), float(inside[-1]), int(v.size - inside.size))


def curve_summary(traces) -> list:
    """Per-generation median of best train/test RMSE over runs.

    ``traces`` are lists of ``(generation, train, test, ...)`` rows; runs are
    truncated to the shortest one.
    """
    if not traces:
        raise ValueError("need at least one run")
    length = min(len(t) for t in traces)
    out = []
    for g in range(length):
        out.append((traces[0][g][0],
                    median([t[g][1] for t in traces]),
                    median([t[g][2] for t in traces])))
    return out


def write_summary_csv(curves: dict, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "generation", "median_train", "median_test"])
        for method, rows in curves.items():
            for g, tr, te in rows:
                w.writerow([method, g, repr(tr), repr(te)])


def write_boxes_csv(boxes: dict, path):
    """``boxes`` maps (method, metric) -> BoxSummary."""
    names = [f.name for f in fields(BoxSummary)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "metric", *names])
        for (method, metric), box in boxes.items():
            w.writerow([method, metric, *(repr(x) for x in astuple(box))])

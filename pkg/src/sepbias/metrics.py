"""Per-group evaluation: TPR, accuracy and ROC AUC, plus degradation deltas.

AUC is computed by the rank formulation, with tied scores worth half a win,
which is the same convention the Mann-Whitney statistic in :mod:`.stats`
uses. TPR for a group with no positive samples is reported as None rather
than silently defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelsError, DomainError, IncompatibleReportsError
from .stats import midranks

__all__ = [
    "GroupMetrics",
    "MetricsReport",
    "GroupDelta",
    "DegradationReport",
    "roc_auc",
    "group_metrics",
    "degradation",
    "METRICS_CSV_COLUMNS",
    "metrics_csv_rows",
]

METRICS_CSV_COLUMNS = ("run_id", "seed", "group", "n_pos", "n_neg", "tpr", "accuracy", "auc", "threshold")


@dataclass(frozen=True)
class GroupMetrics:
    """Counts and metrics for one slice of the evaluation data.

    ``tpr`` and ``auc`` are None when undefined (no positives, or a single
    class, respectively). ``tpr`` times ``n_pos`` is always an exact integer
    count of true positives.
    """

    n_pos: int
    n_neg: int
    tpr: float | None
    accuracy: float
    auc: float | None


@dataclass(frozen=True)
class MetricsReport:
    """Overall and per-group metrics at one decision threshold."""

    threshold: float
    overall: GroupMetrics
    groups: dict[int, GroupMetrics]


@dataclass(frozen=True)
class GroupDelta:
    """Biased-minus-clean metric changes in percentage points (None if undefined)."""

    tpr_pp: float | None
    accuracy_pp: float | None
    auc_pp: float | None


@dataclass(frozen=True)
class DegradationReport:
    overall: GroupDelta
    groups: dict[int, GroupDelta]


def _validate_binary(name: str, values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be 1-d")
    arr = arr.astype(np.int64)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise DomainError(f"{name} entries must be 0 or 1")
    return arr


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via ranks; tied scores count half.

    Equals the probability that a uniformly random positive outscores a
    uniformly random negative, with ties worth 1/2. Needs both classes
    present, else DegenerateLabelsError.
    """
    score_arr = np.asarray(scores, dtype=np.float64)
    if score_arr.ndim != 1:
        raise DomainError("scores must be 1-d")
    if not np.all(np.isfinite(score_arr)):
        raise DomainError("scores must be finite")
    label_arr = _validate_binary("labels", labels)
    if label_arr.shape != score_arr.shape:
        raise DomainError(
            f"scores and labels must have equal lengths, got {score_arr.size} and {label_arr.size}"
        )
    n_pos = int(np.sum(label_arr == 1))
    n_neg = label_arr.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(f"roc_auc needs both classes, got {n_pos} positive / {n_neg} negative")
    ranks = midranks(score_arr)
    rank_sum_pos = float(np.sum(ranks[label_arr == 1]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _slice_metrics(predictions, scores, labels) -> GroupMetrics:
    n_pos = int(np.sum(labels == 1))
    n_neg = int(labels.size - n_pos)
    accuracy = float(np.mean(predictions == labels))
    tpr = None if n_pos == 0 else float(np.sum((predictions == 1) & (labels == 1)) / n_pos)
    auc = None if n_pos == 0 or n_neg == 0 else float(roc_auc(scores, labels))
    return GroupMetrics(n_pos=n_pos, n_neg=n_neg, tpr=tpr, accuracy=accuracy, auc=auc)


def group_metrics(predictions, scores, true_labels, groups, threshold: float = 0.5) -> MetricsReport:
    """Overall and per-group TPR / accuracy / AUC of thresholded predictions.

    ``predictions`` are the hard calls actually being evaluated and ``scores``
    the underlying continuous scores (used only for AUC); ``threshold`` is
    recorded as metadata. All inputs must have equal lengths.
    """
    preds = _validate_binary("predictions", predictions)
    labels = _validate_binary("true_labels", true_labels)
    group_arr = _validate_binary("groups", groups)
    score_arr = np.asarray(scores, dtype=np.float64)
    if score_arr.ndim != 1:
        raise DomainError("scores must be 1-d")
    lengths = {preds.size, labels.size, group_arr.size, score_arr.size}
    if len(lengths) != 1:
        raise DomainError(f"all inputs must have equal lengths, got {sorted(lengths)}")
    if preds.size == 0:
        raise DomainError("inputs are empty")
    if not np.all(np.isfinite(score_arr)):
        raise DomainError("scores must be finite")
    per_group: dict[int, GroupMetrics] = {}
    for g in sorted(int(v) for v in np.unique(group_arr)):
        mask = group_arr == g
        per_group[g] = _slice_metrics(preds[mask], score_arr[mask], labels[mask])
    overall = _slice_metrics(preds, score_arr, labels)
    return MetricsReport(threshold=float(threshold), overall=overall, groups=per_group)


def _delta(clean: float | None, biased: float | None) -> float | None:
    if clean is None or biased is None:
        return None
    return 100.0 * (biased - clean)


def _group_delta(clean: GroupMetrics, biased: GroupMetrics) -> GroupDelta:
    return GroupDelta(
        tpr_pp=_delta(clean.tpr, biased.tpr),
        accuracy_pp=_delta(clean.accuracy, biased.accuracy),
        auc_pp=_delta(clean.auc, biased.auc),
    )


def degradation(clean: MetricsReport, biased: MetricsReport) -> DegradationReport:
    """Per-group metric changes, biased minus clean, in percentage points.

    Both reports must describe the same test set: same groups with identical
    positive and negative counts, overall included. Anything else raises
    IncompatibleReportsError.
    """
    if set(clean.groups) != set(biased.groups):
        raise IncompatibleReportsError(
            f"reports cover different groups: {sorted(clean.groups)} vs {sorted(biased.groups)}"
        )
    pairs = [("overall", clean.overall, biased.overall)] + [
        (f"group {g}", clean.groups[g], biased.groups[g]) for g in sorted(clean.groups)
    ]
    for name, c, b in pairs:
        if (c.n_pos, c.n_neg) != (b.n_pos, b.n_neg):
            raise IncompatibleReportsError(
                f"{name}: counts differ between reports "
                f"(({c.n_pos}, {c.n_neg}) vs ({b.n_pos}, {b.n_neg})); not the same test set"
            )
    return DegradationReport(
        overall=_group_delta(clean.overall, biased.overall),
        groups={g: _group_delta(clean.groups[g], biased.groups[g]) for g in clean.groups},
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_csv_rows(report: MetricsReport, run_id: str, seed: int) -> list[list[str]]:
    """results.csv rows for one report: one per group, then one 'overall' row."""
    rows = []
    for g in sorted(report.groups):
        m = report.groups[g]
        rows.append(
            [run_id, str(seed), str(g), str(m.n_pos), str(m.n_neg), _fmt(m.tpr), _fmt(m.accuracy), _fmt(m.auc), _fmt(report.threshold)]
        )
    m = report.overall
    rows.append(
        [run_id, str(seed), "overall", str(m.n_pos), str(m.n_neg), _fmt(m.tpr), _fmt(m.accuracy), _fmt(m.auc), _fmt(report.threshold)]
    )
    return rows

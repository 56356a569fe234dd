"""Classification scores and per-descriptor significance."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .data import Dataset

__all__ = [
    "ClassificationReport",
    "DescriptorReport",
    "auc",
    "confusion_report",
    "welch_pvalue",
    "descriptor_pvalues",
    "write_descriptor_report",
]


def _check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size == 0 or labels.min() == labels.max():
        raise ValueError("both classes must be present")
    return labels


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney probability.

    Equals ``P(s_pos > s_neg) + 0.5 * P(s_pos == s_neg)`` over all
    positive/negative pairs; tied scores share their average rank.
    """
    labels = _check_labels(labels)
    scores = np.asarray(scores, dtype=float)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    ranks = stats.rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ClassificationReport:
    auc: float
    accuracy: float
    sensitivity: float
    specificity: float
    threshold: float
    n_pos: int
    n_neg: int
    tp: int
    tn: int
    fp: int
    fn: int


def confusion_report(scores, labels, cutoff: float = 0.5) -> ClassificationReport:
    """Threshold ``scores`` at ``cutoff`` (predict 1 when ``score >= cutoff``)."""
    labels = _check_labels(labels)
    scores = np.asarray(scores, dtype=float)
    pred = scores >= cutoff
    truth = labels == 1
    tp = int(np.sum(pred & truth))
    tn = int(np.sum(~pred & ~truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return ClassificationReport(
        auc=auc(scores, labels),
        accuracy=(tp + tn) / labels.size,
        sensitivity=tp / (tp + fn),
        specificity=tn / (tn + fp),
        threshold=cutoff,
        n_pos=tp + fn,
        n_neg=tn + fp,
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
    )


def welch_pvalue(a, b) -> float:
    """Two-sided Welch t-test p-value.

    When neither group has any spread the test is undefined; the p-value is
    then 0 if the group means differ and 1 if they coincide.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va = a.var(ddof=1) if a.size > 1 else 0.0
    vb = b.var(ddof=1) if b.size > 1 else 0.0
    if va == 0.0 and vb == 0.0:
        return 0.0 if a.mean() != b.mean() else 1.0
    if a.size < 2 or b.size < 2:
        return 1.0
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)


@dataclass(frozen=True)
class DescriptorEntry:
    rank: int
    name: str
    coefficient: float
    p_value: float
    class_tag: str = ""


@dataclass(frozen=True)
class DescriptorReport:
    entries: tuple[DescriptorEntry, ...]

    def __len__(self):
        return len(self.entries)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]


def descriptor_pvalues(d: Dataset, support, coefficients=None,
                       class_tags: dict[str, str] | None = None) -> DescriptorReport:
    """Rank selected descriptors by ``|coefficient|`` and attach Welch p-values.

    ``coefficients`` may be a full-length coefficient vector (indexed by
    descriptor) or omitted, in which case every coefficient is reported as 0
    and the order follows ``support``.
    """
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        raise ValueError("support is empty")
    _check_labels(d.y)
    coefs = np.zeros(d.p) if coefficients is None else np.asarray(coefficients, dtype=float)
    class_tags = class_tags or {}
    pos = d.y == 1
    rows = []
    for j in support:
        col = d.x[:, j]
        rows.append((d.names[j], float(coefs[j]), welch_pvalue(col[pos], col[~pos])))
    # stable sort keeps support order among equal magnitudes
    order = sorted(range(len(rows)), key=lambda i: -abs(rows[i][1]))
    entries = tuple(
        DescriptorEntry(rank=k + 1, name=rows[i][0], coefficient=rows[i][1], p_value=rows[i][2],
                        class_tag=class_tags.get(rows[i][0], ""))
        for k, i in enumerate(order)
    )
    return DescriptorReport(entries)


def write_descriptor_report(report: DescriptorReport, path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "name", "coefficient", "p_value", "class_tag"])
        for e in report.entries:
            w.writerow([e.rank, e.name, repr(e.coefficient), repr(e.p_value), e.class_tag])

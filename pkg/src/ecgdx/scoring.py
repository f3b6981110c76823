"""Reward-weighted challenge metric plus per-class AUC / F1.

Equivalent class pairs are merged (logical OR) into 24 categories before
scoring.  Each record spreads a unit of credit across the confusion
matrix: with predicted set P and truth set G it adds ``1 / |G u P|`` to
``a[i][j]`` for every i in P, j in G.  The reward-weighted sum is then
normalized so an always-normal classifier scores 0 and a perfect one
scores 1.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateDatasetError, RecordValidationError
from .records import ClassMap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardMatrix:
    """Benefit matrix over the 24 merged categories.

    Always loaded from data (CSV with a header row of category
    abbreviations), never hardcoded; the diagonal must be exactly 1 and
    no entry may exceed 1.
    """
    values: np.ndarray
    abbreviations: tuple[str, ...]

    def __post_init__(self):
        w = np.asarray(self.values, dtype=np.float64)
        n = len(self.abbreviations)
        if w.shape != (n, n):
            raise RecordValidationError(
                f"reward matrix shape {w.shape} does not match {n} categories")
        if not np.allclose(np.diag(w), 1.0, atol=0):
            raise RecordValidationError("reward matrix diagonal must be exactly 1")
        if np.any(w > 1.0):
            raise RecordValidationError("reward matrix entries must be <= 1")
        object.__setattr__(self, "values", w)
        object.__setattr__(self, "abbreviations", tuple(self.abbreviations))

    @classmethod
    def from_csv(cls, text: str) -> "RewardMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if len(rows) < 2:
            raise RecordValidationError("reward matrix CSV needs header + rows")
        abbrs = tuple(h.strip() for h in rows[0][1:])
        values = []
        for row in rows[1:]:
            values.append([float(v) for v in row[1:]])
        return cls(values=np.array(values), abbreviations=abbrs)

    @classmethod
    def load(cls, path) -> "RewardMatrix":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv(fh.read())

    @classmethod
    def identity(cls, cmap: ClassMap | None = None) -> "RewardMatrix":
        """Neutral default: full credit on the diagonal, none elsewhere."""
        cmap = cmap or ClassMap.default()
        return cls(values=np.eye(cmap.n_merged),
                   abbreviations=cmap.merged_abbreviations)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["category"] + list(self.abbreviations))
        for abbr, row in zip(self.abbreviations, self.values):
            writer.writerow([abbr] + [repr(float(v)) for v in row])
        return buf.getvalue()


def merge_pairs(labels27, cmap: ClassMap | None = None) -> np.ndarray:
    """Collapse 27-class label vectors to the 24 merged categories (OR).

    Accepts a single vector or a [n, 27] matrix.
    """
    cmap = cmap or ClassMap.default()
    lab = np.atleast_2d(np.asarray(labels27))
    out = np.zeros((lab.shape[0], cmap.n_merged), dtype=np.uint8)
    for class_idx, merged_idx in enumerate(cmap.merged_index):
        out[:, merged_idx] |= lab[:, class_idx].astype(np.uint8)
    return out[0] if np.asarray(labels27).ndim == 1 else out


def merge_probs(probs27, cmap: ClassMap | None = None) -> np.ndarray:
    """Merged probabilities take the max over each equivalence group."""
    cmap = cmap or ClassMap.default()
    p = np.atleast_2d(np.asarray(probs27, dtype=np.float64))
    out = np.zeros((p.shape[0], cmap.n_merged))
    for class_idx, merged_idx in enumerate(cmap.merged_index):
        out[:, merged_idx] = np.maximum(out[:, merged_idx], p[:, class_idx])
    return out[0] if np.asarray(probs27).ndim == 1 else out


def confusion(pred_merged, truth_merged) -> np.ndarray:
    """Credit-spread confusion matrix over merged categories.

    ``a[i][j]`` accumulates ``1/|G u P|`` for predicted i and true j.
    Records with no positive prediction and no positive truth contribute
    nothing (logged as a warning).
    """
    pred = np.atleast_2d(np.asarray(pred_merged)).astype(bool)
    truth = np.atleast_2d(np.asarray(truth_merged)).astype(bool)
    if pred.shape != truth.shape:
        raise RecordValidationError(
            f"prediction matrix {pred.shape} does not align with truth {truth.shape}")
    n_cat = pred.shape[1]
    a = np.zeros((n_cat, n_cat))
    for r in range(pred.shape[0]):
        union = np.count_nonzero(pred[r] | truth[r])
        if union == 0:
            logger.warning("record %d has no positive prediction or truth; skipped", r)
            continue
        a[np.ix_(pred[r], truth[r])] += 1.0 / union
    return a


@dataclass(frozen=True)
class ScoreReport:
    unnormalized: float
    inactive: float
    correct: float
    normalized: float
    per_class_auc: np.ndarray
    per_class_f1: np.ndarray

    def to_json(self, abbreviations=None) -> str:
        body = {
            "unnormalized": self.unnormalized,
            "inactive": self.inactive,
            "correct": self.correct,
            "normalized": self.normalized,
            "per_class_auc": [None if np.isnan(v) else float(v)
                              for v in self.per_class_auc],
            "per_class_f1": [float(v) for v in self.per_class_f1],
        }
        if abbreviations is not None:
            body["classes"] = list(abbreviations)
        return json.dumps(body, indent=2, sort_keys=True)


def _weighted(a: np.ndarray, w: RewardMatrix) -> float:
    return float(np.sum(w.values * a))


def challenge_score(pred_labels27, truth_labels27, w: RewardMatrix,
                    probs27=None, cmap: ClassMap | None = None) -> ScoreReport:
    """Reward-weighted score, normalized between the always-normal and the
    always-correct reference classifiers.

    ``pred_labels27``/``truth_labels27`` are aligned [n, 27] binary
    matrices; ``probs27`` (optional, [n, 27]) feeds the per-class AUC.
    """
    cmap = cmap or ClassMap.default()
    pred = np.atleast_2d(np.asarray(pred_labels27))
    truth = np.atleast_2d(np.asarray(truth_labels27))
    if pred.shape != truth.shape:
        raise RecordValidationError(
            f"predictions {pred.shape} do not align with truths {truth.shape}")
    pred_m = merge_pairs(pred, cmap)
    truth_m = merge_pairs(truth, cmap)

    unnormalized = _weighted(confusion(pred_m, truth_m), w)
    correct = _weighted(confusion(truth_m, truth_m), w)
    inactive_pred = np.zeros_like(truth_m)
    inactive_pred[:, int(cmap.merged_index[cmap.sinus_rhythm_index])] = 1
    inactive = _weighted(confusion(inactive_pred, truth_m), w)
    if correct == inactive:
        raise DegenerateDatasetError(
            f"correct and inactive scores coincide ({correct}); "
            f"the dataset cannot calibrate the metric")
    normalized = (unnormalized - inactive) / (correct - inactive)

    if probs27 is not None:
        metrics = per_class_metrics(probs27, truth, labels=pred)
        auc, f1 = metrics.auc, metrics.f1
    else:
        auc = np.full(truth.shape[1], np.nan)
        f1 = np.full(truth.shape[1], np.nan)
    return ScoreReport(unnormalized=unnormalized, inactive=inactive,
                       correct=correct, normalized=normalized,
                       per_class_auc=auc, per_class_f1=f1)


@dataclass(frozen=True)
class PerClassMetrics:
    auc: np.ndarray        # NaN marks classes without both a positive and a negative
    f1: np.ndarray
    f1_zero_denominator: np.ndarray  # True where F1 was reported as 0 by convention


def per_class_metrics(probs, truths, labels=None,
                      threshold: float = 0.36) -> PerClassMetrics:
    """Columnwise ranking AUC (midranks for ties) and F1.

    F1 is computed at the supplied binarized ``labels`` (defaulting to
    thresholding the probabilities); classes with an empty precision or
    recall denominator report 0 and are flagged.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    t = np.atleast_2d(np.asarray(truths)).astype(bool)
    if labels is None:
        lab = p >= threshold
    else:
        lab = np.atleast_2d(np.asarray(labels)).astype(bool)
    n_classes = p.shape[1]
    auc = np.empty(n_classes)
    f1 = np.empty(n_classes)
    zero_den = np.zeros(n_classes, dtype=bool)
    for k in range(n_classes):
        pos = t[:, k]
        n_pos = int(pos.sum())
        n_neg = int((~pos).sum())
        if n_pos == 0 or n_neg == 0:
            auc[k] = np.nan
        else:
            ranks = rankdata(p[:, k], method="average")
            auc[k] = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
        tp = int(np.count_nonzero(lab[:, k] & pos))
        fp = int(np.count_nonzero(lab[:, k] & ~pos))
        fn = int(np.count_nonzero(~lab[:, k] & pos))
        denom = 2 * tp + fp + fn
        if denom == 0:
            f1[k] = 0.0
            zero_den[k] = True
        else:
            f1[k] = 2.0 * tp / denom
    return PerClassMetrics(auc=auc, f1=f1, f1_zero_denominator=zero_den)

"""Two-window model fusion, binarization, clinical post-processing, and
pseudo-label generation.

The per-record pipeline runs in a fixed order: fuse the short- and
long-window probabilities, binarize at the tuned threshold, apply the
slow-rhythm veto, then fall back to the sinus-rhythm label if nothing is
positive, so every record leaves with at least one label.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import RecordValidationError
from .records import ClassMap, EcgRecord
from .rpeaks import brady_rule, detect_rpeaks, final_brady

DEFAULT_THRESHOLD = 0.36
PSEUDO_LABEL_THRESHOLD = 0.8
REVIEW_THRESHOLD = 0.95


@dataclass(frozen=True)
class PredictionSet:
    """Probabilities and binarized labels for one record."""
    record_id: str
    probs: np.ndarray   # [27] floats in [0, 1]
    labels: np.ndarray  # [27] uint8

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.uint8)
        if p.shape != lab.shape or p.ndim != 1:
            raise RecordValidationError("probs and labels must be aligned vectors")
        if np.any((p < 0) | (p > 1)):
            raise RecordValidationError("probabilities outside [0, 1]")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "labels", lab)


def fuse(p_short, p_long, weight_short: float = 0.5) -> np.ndarray:
    """Combine the 10 s and 30 s model outputs (arithmetic mean by default)."""
    a = np.asarray(p_short, dtype=np.float64)
    b = np.asarray(p_long, dtype=np.float64)
    if a.shape != b.shape:
        raise RecordValidationError(
            f"cannot fuse probability vectors of shapes {a.shape} and {b.shape}")
    return weight_short * a + (1.0 - weight_short) * b


def binarize(probs, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Label = 1 iff probability >= threshold (closed lower bound)."""
    if not (0.0 < threshold < 1.0):
        raise RecordValidationError(f"threshold {threshold} outside (0, 1)")
    return (np.asarray(probs, dtype=np.float64) >= threshold).astype(np.uint8)


def snr_postprocess(labels, cmap: ClassMap | None = None) -> np.ndarray:
    """All-negative predictions are revised to the default sinus-rhythm class."""
    cmap = cmap or ClassMap.default()
    out = np.asarray(labels, dtype=np.uint8).copy()
    if out.sum() == 0:
        out[cmap.sinus_rhythm_index] = 1
    return out


def apply_brady_veto(labels, record: EcgRecord,
                     cmap: ClassMap | None = None) -> np.ndarray:
    """Let the R-R interval rule veto a positive slow-rhythm prediction.

    The rule can only clear the bit, never set it; a negative prediction
    skips peak detection entirely.
    """
    cmap = cmap or ClassMap.default()
    out = np.asarray(labels, dtype=np.uint8).copy()
    idx = cmap.bradycardia_index
    if out[idx] == 0:
        return out
    result = detect_rpeaks(record.lead("I"), record.fs)
    rule = brady_rule(result.rr_intervals)
    out[idx] = 1 if final_brady(True, rule) else 0
    return out


def postprocess(p_short, p_long, record: EcgRecord,
                threshold: float = DEFAULT_THRESHOLD,
                cmap: ClassMap | None = None) -> PredictionSet:
    """Full pipeline: fuse -> binarize -> slow-rhythm veto -> sinus fallback."""
    cmap = cmap or ClassMap.default()
    probs = fuse(p_short, p_long)
    labels = binarize(probs, threshold)
    labels = apply_brady_veto(labels, record, cmap)
    labels = snr_postprocess(labels, cmap)
    return PredictionSet(record_id=record.record_id, probs=probs, labels=labels)


@dataclass(frozen=True)
class PseudoLabel:
    record_id: str
    code: str
    abbreviation: str
    prob: float
    needs_review: bool  # flagged for manual inspection at high confidence


def relabel_pseudo(predict, records, original_label_space,
                   cmap: ClassMap | None = None,
                   threshold: float = PSEUDO_LABEL_THRESHOLD,
                   review_threshold: float = REVIEW_THRESHOLD) -> list[PseudoLabel]:
    """Propose additional labels from high-confidence model output.

    ``predict`` maps a record to a probability vector over the scored
    classes.  A label is proposed iff its probability exceeds
    ``threshold``, its code is not in ``original_label_space``, and it is
    one of the scored classes (guaranteed by construction of the output
    vector).  Existing labels are never removed.  Proposals above
    ``review_threshold`` are flagged for manual review.
    """
    cmap = cmap or ClassMap.default()
    original = frozenset(original_label_space)
    report: list[PseudoLabel] = []
    for rec in records:
        probs = np.asarray(predict(rec), dtype=np.float64)
        if probs.shape != (cmap.n_scored,):
            raise RecordValidationError(
                f"predict() must return {cmap.n_scored} probabilities")
        for i, entry in enumerate(cmap.entries):
            if probs[i] > threshold and entry.code not in original:
                report.append(PseudoLabel(
                    record_id=rec.record_id, code=entry.code,
                    abbreviation=entry.abbreviation, prob=float(probs[i]),
                    needs_review=bool(probs[i] > review_threshold)))
    return report


# ----------------------------------------------------------------------
# predictions file: header of abbreviations, then per record one row of
# binary labels followed by one block of probabilities
# ----------------------------------------------------------------------

def write_predictions(pred_sets, cmap: ClassMap | None = None) -> str:
    cmap = cmap or ClassMap.default()
    abbrs = list(cmap.abbreviations)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["record_id"] + abbrs + abbrs)
    for ps in pred_sets:
        writer.writerow([ps.record_id]
                        + [str(int(v)) for v in ps.labels]
                        + [repr(float(v)) for v in ps.probs])
    return buf.getvalue()


def read_predictions(text: str, cmap: ClassMap | None = None) -> list[PredictionSet]:
    cmap = cmap or ClassMap.default()
    n = cmap.n_scored
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or len(rows[0]) != 1 + 2 * n:
        raise RecordValidationError(
            f"prediction file must have 1 + {2 * n} columns")
    out = []
    for row in rows[1:]:
        labels = np.array([int(v) for v in row[1:1 + n]], dtype=np.uint8)
        probs = np.array([float(v) for v in row[1 + n:]], dtype=np.float64)
        out.append(PredictionSet(record_id=row[0], probs=probs, labels=labels))
    return out

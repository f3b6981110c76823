"""R-peak detection on lead I and the rule-based slow-rhythm classifier.

Detection follows the classic five-stage QRS pipeline: band-pass,
derivative, squaring, moving-window integration, then an adaptive
dual-threshold peak decision with a refractory period and a search-back
pass for missed beats.  All stage constants are exposed on
:class:`DetectorConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import RecordValidationError, SignalTooShortError


@dataclass
class DetectorConfig:
    band_low_hz: float = 5.0
    band_high_hz: float = 15.0
    filter_order: int = 2
    integration_window_s: float = 0.150
    refractory_s: float = 0.200
    signal_update: float = 0.125     # running-estimate weight for QRS peaks
    noise_update: float = 0.125      # running-estimate weight for noise peaks
    threshold_fraction: float = 0.25  # THR = noise + fraction * (signal - noise)
    searchback_factor: float = 1.66   # RR gap triggering a search-back
    searchback_threshold: float = 0.5  # fraction of THR used during search-back


@dataclass(frozen=True)
class RPeakResult:
    peak_indices: np.ndarray   # ascending sample indices
    rr_intervals: np.ndarray   # seconds, length = len(peaks) - 1
    fs: int

    def __post_init__(self):
        idx = np.asarray(self.peak_indices, dtype=np.int64)
        rr = np.asarray(self.rr_intervals, dtype=np.float64)
        if idx.size and np.any(np.diff(idx) <= 0):
            raise RecordValidationError("peak indices must be strictly increasing")
        if rr.size != max(idx.size - 1, 0):
            raise RecordValidationError("rr_intervals length must be len(peaks)-1")
        if rr.size and np.any(rr <= 0):
            raise RecordValidationError("rr intervals must be positive")
        object.__setattr__(self, "peak_indices", idx)
        object.__setattr__(self, "rr_intervals", rr)

    @classmethod
    def from_indices(cls, indices, fs: int) -> "RPeakResult":
        idx = np.asarray(sorted(indices), dtype=np.int64)
        rr = np.diff(idx) / float(fs)
        return cls(peak_indices=idx, rr_intervals=rr, fs=fs)


def _moving_integration(x: np.ndarray, width: int) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(x)])
    out = np.empty_like(x)
    out[width:] = (c[width + 1:] - c[1:-width]) / width
    out[:width] = c[1:width + 1] / np.arange(1, width + 1)
    return out


def detect_rpeaks(lead_i, fs: int, config: DetectorConfig | None = None) -> RPeakResult:
    """Locate R peaks on a single lead.

    Requires at least two seconds of signal at 100-1000 Hz.  A constant
    signal yields an empty peak list rather than an error.
    """
    cfg = config or DetectorConfig()
    x = np.asarray(lead_i, dtype=np.float64)
    if not (100 <= fs <= 1000):
        raise RecordValidationError(f"fs {fs} outside supported range [100, 1000]")
    if x.size < 2 * fs:
        raise SignalTooShortError(
            f"need at least 2 s of signal ({2 * fs} samples), got {x.size}")
    if np.ptp(x) == 0.0:
        return RPeakResult.from_indices([], fs)

    nyq = fs / 2.0
    b, a = sps.butter(cfg.filter_order,
                      [cfg.band_low_hz / nyq, cfg.band_high_hz / nyq],
                      btype="band")
    band = sps.filtfilt(b, a, x)
    deriv = np.gradient(band)
    squared = deriv * deriv
    win = max(int(round(cfg.integration_window_s * fs)), 1)
    mwi = _moving_integration(squared, win)

    refractory = int(round(cfg.refractory_s * fs))
    cand, _ = sps.find_peaks(mwi, distance=max(refractory, 1))
    if cand.size == 0:
        return RPeakResult.from_indices([], fs)

    # adaptive thresholds seeded from the first two seconds
    spki = float(np.max(mwi[:2 * fs])) * 0.5
    npki = float(np.mean(mwi[:2 * fs])) * 0.5
    qrs: list[int] = []
    rr_history: list[float] = []

    def accept(peak: int) -> None:
        qrs.append(peak)
        if len(qrs) >= 2:
            rr_history.append((qrs[-1] - qrs[-2]) / fs)
            del rr_history[:-8]

    for i, peak in enumerate(cand):
        thr = npki + cfg.threshold_fraction * (spki - npki)
        value = mwi[peak]
        if value > thr:
            accept(peak)
            spki = cfg.signal_update * value + (1 - cfg.signal_update) * spki
        else:
            npki = cfg.noise_update * value + (1 - cfg.noise_update) * npki
            # search-back: a long RR gap suggests the threshold overshot
            if qrs and rr_history:
                mean_rr = float(np.mean(rr_history))
                gap = (peak - qrs[-1]) / fs
                if gap > cfg.searchback_factor * mean_rr and \
                        value > cfg.searchback_threshold * thr:
                    accept(peak)
                    spki = cfg.signal_update * value + (1 - cfg.signal_update) * spki

    if not qrs:
        return RPeakResult.from_indices([], fs)

    # snap each integrated-signal peak back to the R wave: the integration
    # window delays the energy peak, so search |band| in the trailing window
    half = win
    refined = []
    for peak in qrs:
        lo = max(peak - half, 0)
        hi = min(peak + max(win // 4, 1), x.size)
        refined.append(lo + int(np.argmax(np.abs(band[lo:hi]))))
    refined = sorted(set(refined))
    # enforce the refractory period after refinement
    final = [refined[0]]
    for r in refined[1:]:
        if r - final[-1] >= refractory:
            final.append(r)
    return RPeakResult.from_indices(final, fs)


def brady_rule(rr_intervals) -> bool:
    """Slow-rhythm test over R-R intervals.

    Counts intervals inside the closed band [1.0, 1.6] seconds and
    returns True when they make up at least half of all intervals.  An
    empty list is negative (no beats, no evidence).
    """
    rr = np.asarray(rr_intervals, dtype=np.float64)
    if rr.size == 0:
        return False
    if np.any(rr < 0):
        raise RecordValidationError("rr intervals must be non-negative")
    in_band = np.count_nonzero((rr >= 1.0) & (rr <= 1.6))
    return bool(in_band / rr.size >= 0.5)


def final_brady(ensemble_brady: bool, rule_brady: bool) -> bool:
    """Combine network and rule predictions; the rule vetoes positives."""
    if not rule_brady:
        return False
    return bool(ensemble_brady)

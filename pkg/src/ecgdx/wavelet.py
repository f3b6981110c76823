"""Biorthogonal spline wavelet transform with exact reconstruction.

Filter pairs are constructed from first principles in rational
arithmetic: the synthesis low-pass is a B-spline factor ``cos(w/2)^p``
and the analysis low-pass carries the complementary ``cos(w/2)^pt``
times the binomial half-band polynomial, so the two-channel product is
half-band and reconstruction is exact (not merely approximate).  The
member named ``biorP.Q`` gives the analysis wavelet P vanishing moments
and the synthesis wavelet Q.

The forward transform extends the signal symmetrically, convolves in
full, and keeps odd-phase samples; the inverse upsamples back onto those
phases and trims the known group delay.  Because every coefficient of
the (slightly redundant) extended convolution is kept, round trips are
exact for any signal length and any extension mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .errors import ConfigError

_SQRT2 = np.sqrt(2.0)


def _poly_mul(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _poly_pow(a: list[Fraction], n: int) -> list[Fraction]:
    out = [Fraction(1)]
    for _ in range(n):
        out = _poly_mul(out, a)
    return out


def _spline_lowpass_pair(p: int, pt: int) -> tuple[list[Fraction], list[Fraction]]:
    """Exact (rec_lo, dec_lo) tap lists, sqrt(2) factored out."""
    if p % 2 or pt % 2 or p < 2 or pt < 2:
        raise ConfigError(f"spline orders must be even and >= 2, got ({p}, {pt})")
    q = (p + pt) // 2
    cos2 = [Fraction(1, 4), Fraction(1, 2), Fraction(1, 4)]    # cos^2(w/2)
    sin2 = [Fraction(-1, 4), Fraction(1, 2), Fraction(-1, 4)]  # sin^2(w/2)
    rec = _poly_pow(cos2, p // 2)
    halfband = None
    for n in range(q):
        term = _poly_mul([Fraction(comb(q - 1 + n, n))], _poly_pow(sin2, n))
        if halfband is None:
            halfband = term
        else:
            pad = (len(term) - len(halfband)) // 2
            halfband = [Fraction(0)] * pad + halfband + [Fraction(0)] * pad
            halfband = [x + y for x, y in zip(halfband, term)]
    dec = _poly_mul(_poly_pow(cos2, pt // 2), halfband)
    return rec, dec


@dataclass(frozen=True)
class FilterBank:
    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray
    delay: int  # group delay of the analysis-synthesis cascade


def _build(name: str, p: int, pt: int) -> FilterBank:
    rec_f, dec_f = _spline_lowpass_pair(p, pt)
    rec_lo = np.array([float(x) for x in rec_f]) * _SQRT2
    dec_lo = np.array([float(x) for x in dec_f]) * _SQRT2
    n = np.arange(len(rec_lo))
    dec_hi = ((-1.0) ** (n + 1)) * rec_lo
    m = np.arange(len(dec_lo))
    rec_hi = ((-1.0) ** m) * dec_lo
    delay = (len(rec_lo) - 1) // 2 + (len(dec_lo) - 1) // 2
    return FilterBank(name, dec_lo, dec_hi, rec_lo, rec_hi, delay)


_FAMILY = {
    "bior2.2": (2, 2),
    "bior2.4": (2, 4),
    "bior2.6": (2, 6),
    "bior2.8": (2, 8),
    "bior4.4": (4, 4),
    "bior6.6": (6, 6),
}
_CACHE: dict[str, FilterBank] = {}


def filter_bank(name: str) -> FilterBank:
    if name not in _FAMILY:
        raise ConfigError(
            f"unknown wavelet {name!r}; available: {sorted(_FAMILY)}")
    if name not in _CACHE:
        _CACHE[name] = _build(name, *_FAMILY[name])
    return _CACHE[name]


@dataclass
class WaveletCoeffs:
    """Multilevel decomposition: approximation plus per-level details.

    ``details[0]`` is the finest level.  ``lengths[k]`` records the input
    length consumed at level ``k`` so the inverse can trim exactly.
    """
    name: str
    approx: np.ndarray
    details: list[np.ndarray]
    lengths: list[int]

    @property
    def level(self) -> int:
        return len(self.details)


def _dwt_single(x: np.ndarray, fb: FilterBank) -> tuple[np.ndarray, np.ndarray]:
    pad = len(fb.dec_lo) - 1
    ext = np.pad(x, pad, mode="symmetric")
    lo = np.convolve(ext, fb.dec_lo, mode="full")
    hi = np.convolve(ext, fb.dec_hi, mode="full")
    return lo[1::2], hi[1::2]


def _idwt_single(ca: np.ndarray, cd: np.ndarray, fb: FilterBank, n: int) -> np.ndarray:
    pad = len(fb.dec_lo) - 1
    n_ext = n + 2 * pad
    ulo = np.zeros(n_ext + len(fb.dec_lo) - 1)
    ulo[1::2] = ca
    uhi = np.zeros(n_ext + len(fb.dec_hi) - 1)
    uhi[1::2] = cd
    a = np.convolve(ulo, fb.rec_lo, mode="full")
    d = np.convolve(uhi, fb.rec_hi, mode="full")
    out = np.zeros(max(len(a), len(d)))
    out[:len(a)] += a
    out[:len(d)] += d
    start = fb.delay + pad
    return out[start:start + n]


def wavedec(x, name: str, level: int) -> WaveletCoeffs:
    if level < 1:
        raise ConfigError(f"decomposition level must be >= 1, got {level}")
    fb = filter_bank(name)
    x = np.asarray(x, dtype=np.float64)
    approx = x
    details: list[np.ndarray] = []
    lengths: list[int] = []
    for _ in range(level):
        lengths.append(len(approx))
        approx, d = _dwt_single(approx, fb)
        details.append(d)
    return WaveletCoeffs(name=name, approx=approx, details=details, lengths=lengths)


def waverec(coeffs: WaveletCoeffs) -> np.ndarray:
    fb = filter_bank(coeffs.name)
    x = coeffs.approx
    for d, n in zip(reversed(coeffs.details), reversed(coeffs.lengths)):
        x = _idwt_single(x, d, fb, n)
    return x

"""GCC-PHAT time-delay estimation and DOA picking on an angular spectrum."""

from dataclasses import dataclass
from typing import List

import numpy as np

from .audio import DEFAULT_FRAME_SHIFT, DEFAULT_WINDOW_LEN, TimeSignal, stft
from .errors import ConfigurationError, EmptyInputError
from .geometry import tdoa

__all__ = ["LagScores", "AngularSpectrum", "Peaks", "gcc_phat",
           "angular_spectrum", "top_k_peaks", "oracle_select", "localize"]

PHAT_FLOOR = 1e-12


@dataclass(frozen=True)
class LagScores:
    lags: np.ndarray  # seconds, increasing
    scores: np.ndarray

    @property
    def peak_lag(self):
        return float(self.lags[np.argmax(self.scores)])

    def at(self, lag):
        return np.interp(lag, self.lags, self.scores)


@dataclass(frozen=True)
class AngularSpectrum:
    grid: np.ndarray  # degrees
    scores: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.grid) <= 0):
            raise ConfigurationError("DOA grid must be strictly increasing")
        if not np.all(np.isfinite(self.scores)):
            raise ConfigurationError("angular spectrum has non-finite scores")

    def __len__(self):
        return len(self.grid)


@dataclass(frozen=True)
class Peaks:
    doas: List[float]
    scores: List[float]
    short: bool = False  # fewer than k peaks were found


def _as_channel(x):
    if isinstance(x, TimeSignal):
        return x.samples[0], x.sample_rate
    return np.asarray(x, dtype=float), None


def gcc_phat(x1, x2, max_lag, sample_rate=None, window_len=DEFAULT_WINDOW_LEN,
             frame_shift=DEFAULT_FRAME_SHIFT, upsample=8):
    """Frame-averaged GCC-PHAT between two channels.

    A positive lag means ``x2`` lags ``x1``. Scores are the inverse DFT of
    the PHAT-weighted cross-spectrum averaged over STFT frames, evaluated on
    a grid refined ``upsample`` times and restricted to ``|lag| <= max_lag``.
    """
    a, sr1 = _as_channel(x1)
    b, sr2 = _as_channel(x2)
    sample_rate = sample_rate or sr1 or sr2
    if sample_rate is None:
        raise ConfigurationError("sample_rate is required for raw arrays")
    if len(a) != len(b):
        raise ConfigurationError("channels must have equal length")
    if not np.any(a) or not np.any(b):
        raise EmptyInputError("PHAT weighting is undefined for an all-zero channel")
    spec = stft(TimeSignal(np.stack([a, b]), sample_rate), window_len,
                frame_shift).bins
    cross = spec[0] * np.conj(spec[1])
    cross = cross / np.maximum(np.abs(cross), PHAT_FLOOR)
    mean_cross = cross.mean(axis=0)
    n = window_len * upsample
    # conj: IDFT of X1 X2* peaks at -delay; we report x2's delay as positive
    cc = np.fft.irfft(np.conj(mean_cross), n=n) * upsample
    max_k = int(np.ceil(max_lag * sample_rate * upsample))
    if max_k >= n // 2:
        raise ConfigurationError("max_lag exceeds half the frame length")
    k = np.arange(-max_k, max_k + 1)
    return LagScores(k / (sample_rate * upsample), cc[k % n])


def angular_spectrum(mixture, geom, pair=None, grid=None, **gcc_kwargs):
    """GCC-PHAT scores mapped onto a DOA grid via the far-field TDOA."""
    i, j = pair if pair is not None else (0, geom.n_mics - 1)
    d = geom.distance(i, j)
    if d <= 0:
        raise ConfigurationError("microphone pair has zero spacing")
    grid = np.arange(0.0, 181.0, 1.0) if grid is None else np.asarray(grid, float)
    max_lag = d / geom.speed_of_sound
    lag_scores = gcc_phat(mixture.channel(i), mixture.channel(j),
                          max_lag * 1.05, mixture.sample_rate, **gcc_kwargs)
    lags = np.array([tdoa(geom, i, j, th) for th in grid])
    return AngularSpectrum(grid, lag_scores.at(lags))


def _local_maxima(scores):
    n = len(scores)
    idx = []
    for k in range(n):
        left = scores[k - 1] if k > 0 else -np.inf
        right = scores[k + 1] if k < n - 1 else -np.inf
        # plateau counts once, at its left edge
        if scores[k] > left and scores[k] >= right:
            idx.append(k)
    return idx


def top_k_peaks(spec, k=2, min_separation=5.0):
    """The ``k`` highest local maxima, at least ``min_separation`` deg apart."""
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    cand = sorted(_local_maxima(spec.scores), key=lambda m: -spec.scores[m])
    chosen = []
    for m in cand:
        if all(abs(spec.grid[m] - spec.grid[c]) >= min_separation for c in chosen):
            chosen.append(m)
        if len(chosen) == k:
            break
    return Peaks([float(spec.grid[m]) for m in chosen],
                 [float(spec.scores[m]) for m in chosen],
                 short=len(chosen) < k)


def oracle_select(peaks, true_doa, scores=None):
    """Peak closest to ``true_doa``; ties go to the higher-scoring peak."""
    if isinstance(peaks, Peaks):
        doas, scores = peaks.doas, peaks.scores
    else:
        doas = list(peaks)
    if not doas:
        raise EmptyInputError("no peaks to select from")
    if scores is None:
        scores = [0.0] * len(doas)
    best = min(range(len(doas)),
               key=lambda m: (abs(doas[m] - true_doa), -scores[m]))
    return float(doas[best])


def localize(mixture, geom, k=2, pair=None, min_separation=5.0, true_doas=None):
    """Angular spectrum, top-k peaks and (given truth) per-source selection."""
    spec = angular_spectrum(mixture, geom, pair)
    peaks = top_k_peaks(spec, k, min_separation)
    selected = None
    if true_doas is not None and peaks.doas:
        selected = [oracle_select(peaks, t) for t in true_doas]
    return spec, peaks, selected

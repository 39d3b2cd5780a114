"""Multichannel waveforms, sine-window STFT/iSTFT and WAV I/O.

Shapes follow ``(channel, sample)`` for waveforms and
``(channel, frame, freq)`` for spectrograms.
"""

import os
import tempfile
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.io import wavfile

from .errors import (ConfigurationError, EmptyInputError,
                     SampleRateMismatchError, WavFormatError)

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_WINDOW_LEN = 1600  # 100 ms at 16 kHz
DEFAULT_FRAME_SHIFT = 800  # 50 ms at 16 kHz

__all__ = [
    "TimeSignal", "Spectrogram", "sine_window", "stft", "istft",
    "read_wav", "write_wav", "ms_to_samples",
]


@dataclass(frozen=True)
class TimeSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ConfigurationError(
                f"samples must be (channel, time), got shape {x.shape}")
        if x.shape[0] < 1:
            raise ConfigurationError("need at least one channel")
        if self.sample_rate <= 0:
            raise ConfigurationError("sample_rate must be positive")
        object.__setattr__(self, "samples", x)

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.n_samples / self.sample_rate

    def channel(self, i):
        """Single-channel view of channel ``i``."""
        return TimeSignal(self.samples[i:i + 1], self.sample_rate)


@dataclass(frozen=True)
class Spectrogram:
    bins: np.ndarray
    window_len: int
    frame_shift: int
    sample_rate: int
    length: Optional[int] = None  # waveform length before padding

    def __post_init__(self):
        b = np.asarray(self.bins)
        if b.ndim == 2:
            b = b[None]
        if b.ndim != 3:
            raise ConfigurationError(
                f"bins must be (channel, frame, freq), got shape {b.shape}")
        _check_framing(self.window_len, self.frame_shift)
        if b.shape[2] != self.window_len // 2 + 1:
            raise ConfigurationError(
                f"freq dimension {b.shape[2]} does not match window_len "
                f"{self.window_len}")
        object.__setattr__(self, "bins", b)

    @property
    def n_channels(self):
        return self.bins.shape[0]

    @property
    def n_frames(self):
        return self.bins.shape[1]

    @property
    def n_freqs(self):
        return self.bins.shape[2]

    @property
    def freqs_hz(self):
        return np.arange(self.n_freqs) * self.sample_rate / self.window_len

    def channel(self, i):
        return self.replace(self.bins[i:i + 1])

    def replace(self, bins):
        """Same framing metadata, new bins."""
        return Spectrogram(bins, self.window_len, self.frame_shift,
                           self.sample_rate, self.length)


def ms_to_samples(ms, sample_rate):
    return int(round(ms * sample_rate / 1000.0))


def sine_window(n):
    return np.sin(np.pi * (np.arange(n) + 0.5) / n)


def _check_framing(window_len, frame_shift):
    if frame_shift <= 0 or window_len <= 0:
        raise ConfigurationError("window_len and frame_shift must be positive")
    if window_len < frame_shift:
        raise ConfigurationError(
            f"window_len ({window_len}) < frame_shift ({frame_shift})")
    if window_len % 2:
        raise ConfigurationError("window_len must be even")


def _n_frames(length, window_len, frame_shift):
    pad = window_len - frame_shift
    return -(-(length + pad) // frame_shift)


def stft(signal, window_len=DEFAULT_WINDOW_LEN, frame_shift=DEFAULT_FRAME_SHIFT):
    """Sine-windowed STFT with ``window_len - frame_shift`` zeros on each edge.

    Returns a Spectrogram with ``window_len // 2 + 1`` frequency bins.
    """
    _check_framing(window_len, frame_shift)
    x = signal.samples
    n = x.shape[1]
    if n == 0:
        raise EmptyInputError("cannot transform an empty signal")
    pad = window_len - frame_shift
    n_frames = _n_frames(n, window_len, frame_shift)
    total = (n_frames - 1) * frame_shift + window_len
    padded = np.zeros((x.shape[0], total))
    padded[:, pad:pad + n] = x
    frames = np.lib.stride_tricks.sliding_window_view(
        padded, window_len, axis=1)[:, ::frame_shift]
    bins = np.fft.rfft(frames * sine_window(window_len), axis=-1)
    return Spectrogram(bins, window_len, frame_shift, signal.sample_rate, n)


def istft(spec, length=None):
    """Weighted overlap-add inverse of :func:`stft`.

    ``length`` defaults to the length recorded on the spectrogram; without
    either, the padded support is returned trimmed only on the left.
    """
    window_len, shift = spec.window_len, spec.frame_shift
    _check_framing(window_len, shift)
    n_ch, n_frames, _ = spec.bins.shape
    win = sine_window(window_len)
    total = (n_frames - 1) * shift + window_len
    out = np.zeros((n_ch, total))
    norm = np.zeros(total)
    frames = np.fft.irfft(spec.bins, n=window_len, axis=-1) * win
    for t in range(n_frames):
        out[:, t * shift:t * shift + window_len] += frames[:, t]
        norm[t * shift:t * shift + window_len] += win ** 2
    out /= np.maximum(norm, 1e-12)
    pad = window_len - shift
    if length is None:
        length = spec.length if spec.length is not None else total - pad
    return TimeSignal(out[:, pad:pad + length], spec.sample_rate)


def read_wav(path, expected_rate=None):
    """Read a PCM16 or float32 WAV file into a float64 TimeSignal."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except wavfile.WavFileWarning as e:
        raise WavFormatError(f"{path}: {e}") from e
    except Exception as e:  # scipy surfaces header damage as assorted errors
        raise WavFormatError(f"{path}: {e}") from e
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported sample format {data.dtype}; "
            "expected 16-bit PCM or 32-bit float")
    if expected_rate is not None and rate != expected_rate:
        raise SampleRateMismatchError(
            f"{path}: file is {rate} Hz, pipeline expects {expected_rate} Hz")
    x = x.T if x.ndim == 2 else x[None, :]
    return TimeSignal(x, int(rate))


def write_wav(path, signal, bit_depth=32):
    """Write ``signal`` atomically; returns the number of clipped samples.

    Only 16-bit writes can clip. Values are scaled by 32768 and clamped to
    the int16 range.
    """
    x = np.asarray(signal.samples).T
    clipped = 0
    if bit_depth == 16:
        scaled = np.round(x * 32768.0)
        clipped = int(np.count_nonzero((scaled > 32767) | (scaled < -32768)))
        data = np.clip(scaled, -32768, 32767).astype(np.int16)
    elif bit_depth == 32:
        data = x.astype(np.float32)
    else:
        raise WavFormatError(f"unsupported bit depth {bit_depth}")
    if data.shape[1] == 1:
        data = data[:, 0]
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(suffix=".wav.tmp", dir=directory)
    os.close(fd)
    try:
        wavfile.write(tmp, int(signal.sample_rate), data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return clipped

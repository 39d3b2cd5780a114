"""Delay-and-sum beamforming, CSIPD features and time-frequency masks.

Mask providers share one output type, :class:`Mask`, so an externally
trained estimator can be swapped in through the mask file format::

    bytes 0-3   b"MASK"
    bytes 4-15  little-endian u32 frames, u32 freqs, u32 reserved (0)
    then        frames * freqs little-endian float32, frame-major
"""

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .audio import stft
from .errors import ConfigurationError, DimensionError, WavFormatError
from .geometry import steering_matrix

__all__ = ["Mask", "FeatureBlock", "ds_beamform", "csipd_features",
           "oracle_mask", "heuristic_mask", "save_mask", "load_external_mask"]

MASK_MAGIC = b"MASK"
ZERO_MAG = 1e-12


@dataclass
class Mask:
    values: np.ndarray  # (frame, freq) in [0, 1]
    source_id: int = 0
    n_clamped: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError(f"mask must be (frame, freq), got {v.shape}")
        if np.any(v < 0) or np.any(v > 1):
            raise ConfigurationError("mask values must lie in [0, 1]")
        self.values = v

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class FeatureBlock:
    magnitude: np.ndarray
    cos_ipd: np.ndarray
    sin_ipd: np.ndarray

    def stacked(self):
        """Per-frame feature vectors, shape (frame, 3 * freq)."""
        return np.concatenate([self.magnitude, self.cos_ipd, self.sin_ipd],
                              axis=-1)


def ds_beamform(spec, geom, direction, normalize=True):
    """Delay-and-sum output ``d^H x`` (divided by the mic count by default)."""
    if spec.n_channels != geom.n_mics:
        raise ConfigurationError(
            f"spectrogram has {spec.n_channels} channels, array has {geom.n_mics}")
    steer = steering_matrix(geom, direction, spec.freqs_hz)  # (F, I)
    out = np.einsum("fi,itf->tf", np.conj(steer), spec.bins)
    if normalize:
        out = out / geom.n_mics
    return spec.replace(out[None])


def _single(spec_or_bins):
    b = getattr(spec_or_bins, "bins", spec_or_bins)
    b = np.asarray(b)
    return b[0] if b.ndim == 3 else b


def csipd_features(ds_spec, ref_spec):
    """Magnitude of the DS output plus cos/sin of its phase lead over the reference.

    Bins where either input is (numerically) zero get ``(cos, sin) = (1, 0)``.
    """
    y = _single(ds_spec)
    r = _single(ref_spec)
    if y.shape != r.shape:
        raise DimensionError(f"shape mismatch {y.shape} vs {r.shape}")
    mag = np.abs(y)
    active = (mag >= ZERO_MAG) & (np.abs(r) >= ZERO_MAG)
    dphi = np.angle(y * np.conj(r))
    cos = np.where(active, np.cos(dphi), 1.0)
    sin = np.where(active, np.sin(dphi), 0.0)
    return FeatureBlock(mag, cos, sin)


def oracle_mask(truth, mixture_spec, kind="ratio"):
    """Ideal masks from simulated ground truth, one per speech source.

    ``kind``: ``"ratio"`` |C_j| / (sum_k |C_k| + |N|), ``"wiener"`` the same
    with squared magnitudes, ``"binary"`` 1 where source j dominates every
    other source and the noise.
    """
    if truth is None or not truth.spatial_images:
        raise ConfigurationError("oracle masks need simulation ground truth")
    ref = truth.geometry.reference_index if truth.geometry else 0
    wl, sh = mixture_spec.window_len, mixture_spec.frame_shift
    mags = [np.abs(stft(im.channel(ref), wl, sh).bins[0])
            for im in truth.spatial_images]
    mags.append(np.abs(stft(truth.noise_image.channel(ref), wl, sh).bins[0]))
    mags = np.stack(mags)
    if kind == "ratio":
        p = mags
    elif kind == "wiener":
        p = mags ** 2
    elif kind == "binary":
        win = np.argmax(mags, axis=0)
        energy = mags.sum(axis=0) > 0
        return [Mask(((win == j) & energy).astype(float), j)
                for j in range(len(mags) - 1)]
    else:
        raise ConfigurationError(f"unknown oracle mask kind {kind!r}")
    total = p.sum(axis=0)
    safe = np.where(total > 0, total, 1.0)
    return [Mask(np.where(total > 0, p[j] / safe, 0.0), j)
            for j in range(len(mags) - 1)]


def heuristic_mask(ds_specs, exponent=2.0):
    """Soft masks from competing DS outputs: ``|Y_j|^p / sum_k |Y_k|^p``."""
    mags = np.stack([np.abs(_single(s)) for s in ds_specs]) ** exponent
    total = mags.sum(axis=0)
    n = len(mags)
    uniform = total <= 0
    safe = np.where(uniform, 1.0, total)
    return [Mask(np.where(uniform, 1.0 / n, mags[j] / safe), j)
            for j in range(n)]


def save_mask(path, mask):
    v = np.ascontiguousarray(mask.values, dtype="<f4")
    with open(path, "wb") as f:
        f.write(MASK_MAGIC + struct.pack("<III", v.shape[0], v.shape[1], 0))
        f.write(v.tobytes())


def load_external_mask(path, expected_dims=None, source_id=0):
    """Read a mask file; out-of-range values are clamped and counted."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:4] != MASK_MAGIC:
        raise WavFormatError(f"{path}: not a mask file")
    frames, freqs, _ = struct.unpack("<III", raw[4:16])
    body = raw[16:]
    if len(body) != 4 * frames * freqs:
        raise DimensionError(
            f"{path}: header says {frames}x{freqs}, payload has {len(body) // 4} values")
    if expected_dims is not None and (frames, freqs) != tuple(expected_dims):
        raise DimensionError(
            f"{path}: mask is {frames}x{freqs}, expected "
            f"{expected_dims[0]}x{expected_dims[1]}")
    v = np.frombuffer(body, dtype="<f4").reshape(frames, freqs).astype(float)
    if not np.all(np.isfinite(v)):
        raise ConfigurationError(f"{path}: mask contains non-finite values")
    bad = int(np.count_nonzero((v < 0) | (v > 1)))
    if bad:
        warnings.warn(f"{path}: clamped {bad} mask values into [0, 1]")
    return Mask(np.clip(v, 0.0, 1.0), source_id, bad)

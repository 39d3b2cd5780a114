"""Mask-weighted spatial covariance estimation.

Matrices are stacked as ``(..., freq, mic, mic)``; recursive updates run
frame by frame, all frequencies at once.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError

__all__ = ["CovariancePair", "update_source_cov", "update_noise_cov",
           "recursive_cov", "batch_cov"]

INIT_EPS = 1e-6
DEFAULT_ALPHA = 0.95


@dataclass
class CovariancePair:
    sigma_j: np.ndarray
    sigma_n: np.ndarray
    alpha: float = DEFAULT_ALPHA


def _check(mask_val, alpha):
    m = np.asarray(mask_val)
    if np.any(m < 0) or np.any(m > 1):
        raise ConfigurationError("mask value outside [0, 1]")
    a = np.asarray(alpha)
    if np.any(a < 0) or np.any(a > 1):
        raise ConfigurationError("alpha must lie in [0, 1]")


def _outer(x):
    return x[..., :, None] * np.conj(x[..., None, :])


def update_source_cov(prev, mask_val, x_tf, alpha):
    """``alpha * prev + (1 - alpha) * M * x x^H``."""
    _check(mask_val, alpha)
    m = np.asarray(mask_val)[..., None, None]
    return alpha * prev + (1 - alpha) * m * _outer(x_tf)


def update_noise_cov(prev, mask_val, x_tf, alpha):
    """``alpha * prev + (1 - alpha) * (1 - M) * x x^H``."""
    _check(mask_val, alpha)
    m = np.asarray(mask_val)[..., None, None]
    return alpha * prev + (1 - alpha) * (1 - m) * _outer(x_tf)


def _mask_values(mask):
    return np.asarray(getattr(mask, "values", mask), dtype=float)


def recursive_cov(mask, spec, alpha=DEFAULT_ALPHA, init_eps=INIT_EPS):
    """Per-frame covariance trajectories, each ``(frame, freq, mic, mic)``.

    Both recursions start from ``init_eps * I``.
    """
    m = _mask_values(mask)
    x = np.moveaxis(spec.bins, 0, -1)  # (T, F, I)
    if m.shape != x.shape[:2]:
        raise DimensionError(f"mask {m.shape} vs spectrogram {x.shape[:2]}")
    n_t, n_f, n_i = x.shape
    sj = np.empty((n_t, n_f, n_i, n_i), dtype=complex)
    sn = np.empty_like(sj)
    cj = np.broadcast_to(init_eps * np.eye(n_i), (n_f, n_i, n_i)).astype(complex)
    cn = cj.copy()
    for t in range(n_t):
        cj = update_source_cov(cj, m[t], x[t], alpha)
        cn = update_noise_cov(cn, m[t], x[t], alpha)
        sj[t], sn[t] = cj, cn
    return CovariancePair(sj, sn, alpha)


def batch_cov(mask, spec, floor=1e-8, fallback_eps=INIT_EPS):
    """Utterance-level mask-weighted covariances, each ``(freq, mic, mic)``.

    A frequency whose mask weight sums below ``floor`` gets
    ``fallback_eps * tr(R_xx) / I * I`` (or ``fallback_eps * I`` if silent).
    """
    m = _mask_values(mask)
    x = np.moveaxis(spec.bins, 0, -1)  # (T, F, I)
    if m.shape != x.shape[:2]:
        raise DimensionError(f"mask {m.shape} vs spectrogram {x.shape[:2]}")
    n_t, n_f, n_i = x.shape
    xx = _outer(x)  # (T, F, I, I)
    rxx = xx.mean(axis=0)
    scale = np.real(np.trace(rxx, axis1=-2, axis2=-1)) / n_i
    scale = np.where(scale > 0, scale, 1.0)
    fallback = fallback_eps * scale[:, None, None] * np.eye(n_i)

    def weighted(w):
        den = w.sum(axis=0)
        num = np.einsum("tf,tfij->fij", w, xx)
        ok = den >= floor
        out = num / np.where(ok, den, 1.0)[:, None, None]
        return np.where(ok[:, None, None], out, fallback)

    return CovariancePair(weighted(m), weighted(1 - m), alpha=1.0)

"""GEV, SDW-MWF and rank-1 MWF beamformers from a covariance pair.

All solvers take stacks ``(..., mic, mic)`` and return weights
``(..., mic)``; the beamformer output is ``w^H x``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ConditioningError

__all__ = ["BeamformerWeights", "gev_weights", "sdw_mwf_weights",
           "r1_mwf_weights", "apply_beamformer", "compute_weights",
           "principal_generalized_eigvec", "KINDS"]

DEFAULT_LOADING = 1e-6
KINDS = ("gev", "sdw", "r1")


@dataclass
class BeamformerWeights:
    w: np.ndarray  # (..., freq, mic)
    kind: str
    mu: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown beamformer kind {self.kind!r}")
        if not np.all(np.isfinite(self.w)):
            raise ConditioningError("beamformer weights are not finite")


def _eye(sigma):
    return np.eye(sigma.shape[-1])


def _load(sigma, loading):
    """Add ``loading * tr(sigma) / I`` to the diagonal."""
    if not loading:
        return sigma
    n = sigma.shape[-1]
    tr = np.real(np.trace(sigma, axis1=-2, axis2=-1)) / n
    tr = np.where(tr > 0, tr, 1.0)
    return sigma + loading * tr[..., None, None] * _eye(sigma)


def _escalating(fn, sigma, loading, tries=6):
    """Run ``fn`` on the loaded matrix, raising the loading tenfold on failure."""
    lv = loading
    for _ in range(tries):
        try:
            out = fn(_load(sigma, lv))
            if np.all(np.isfinite(out)):
                return out
        except np.linalg.LinAlgError:
            pass
        lv = max(lv * 10, DEFAULT_LOADING)
    raise ConditioningError(
        f"matrix still singular with diagonal loading {lv / 10:g}")


def _hermitian(a):
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def principal_generalized_eigvec(sigma_j, sigma_n, loading=DEFAULT_LOADING):
    """Principal eigenpair of ``sigma_n^{-1} sigma_j`` via Cholesky whitening.

    Returns ``(eigval, v)`` with ``v^H sigma_n v = 1`` (for the loaded
    ``sigma_n``).
    """
    sigma_j = _hermitian(np.asarray(sigma_j, dtype=complex))

    def solve(sn):
        chol = np.linalg.cholesky(_hermitian(sn))
        # C = L^{-1} Sj L^{-H}
        a = np.linalg.solve(chol, sigma_j)
        c = np.linalg.solve(chol, np.conj(np.swapaxes(a, -1, -2)))
        vals, vecs = np.linalg.eigh(_hermitian(c))
        u = vecs[..., -1]
        v = np.linalg.solve(np.conj(np.swapaxes(chol, -1, -2)), u[..., None])[..., 0]
        return np.concatenate([vals[..., -1:], v], axis=-1)

    out = _escalating(solve, np.asarray(sigma_n, dtype=complex), loading)
    return np.real(out[..., 0]), out[..., 1:]


def _anchor_phase(w, ref):
    """Unit norm with a real, non-negative reference entry."""
    w = w / np.linalg.norm(w, axis=-1, keepdims=True)
    r = w[..., ref]
    mag = np.abs(r)
    rot = np.where(mag > 0, np.conj(r) / np.where(mag > 0, mag, 1.0), 1.0)
    return w * rot[..., None]


def gev_weights(sigma_j, sigma_n, loading=DEFAULT_LOADING, ref=0):
    """Max-SNR weights: principal generalized eigenvector of (Σ_j, Σ_n).

    The per-frequency gain of a GEV beamformer is arbitrary; it is fixed
    here by unit norm and a real non-negative reference coefficient.
    """
    _, v = principal_generalized_eigvec(sigma_j, sigma_n, loading)
    return _anchor_phase(v, ref)


def sdw_mwf_weights(sigma_j, sigma_n, mu=1.0, loading=DEFAULT_LOADING, ref=0):
    """``(Σ_j + mu Σ_n)^{-1} Σ_j u_ref``."""
    if mu < 0:
        raise ConfigurationError("mu must be non-negative")
    sigma_j = np.asarray(sigma_j, dtype=complex)
    total = sigma_j + mu * np.asarray(sigma_n, dtype=complex)
    rhs = sigma_j[..., :, ref:ref + 1]
    return _escalating(lambda a: np.linalg.solve(a, rhs)[..., 0], total, loading)


def r1_mwf_weights(sigma_j, sigma_n, mu=1.0, loading=DEFAULT_LOADING, ref=0,
                   return_details=False):
    """Rank-1 constrained MWF.

    The source covariance is replaced by ``σ h h^H`` where ``h = Σ_n v`` is
    the steering direction recovered from the principal generalized
    eigenvector ``v`` and ``σ = tr(Σ_j) / ||h||^2``. Then
    ``w = Σ_n^{-1} Σ_R1 u_ref / (mu + λ)`` with ``λ = tr(Σ_n^{-1} Σ_R1)``.
    """
    if mu < 0:
        raise ConfigurationError("mu must be non-negative")
    sigma_j = np.asarray(sigma_j, dtype=complex)
    sigma_n = np.asarray(sigma_n, dtype=complex)
    _, v = principal_generalized_eigvec(sigma_j, sigma_n, loading)
    sn = _load(sigma_n, loading)
    h = (sn @ v[..., None])[..., 0]
    hh = np.sum(np.abs(h) ** 2, axis=-1)
    sigma = np.real(np.trace(sigma_j, axis1=-2, axis2=-1)) / hh
    # Σ_n^{-1} h is v again, so Σ_n^{-1} Σ_R1 = σ v h^H
    lam = sigma * np.real(np.sum(np.conj(h) * v, axis=-1))
    w = (sigma * np.conj(h[..., ref]) / (mu + lam))[..., None] * v
    if return_details:
        sigma_r1 = sigma[..., None, None] * h[..., :, None] * np.conj(h[..., None, :])
        return w, {"h": h, "sigma": sigma, "lambda": lam, "sigma_r1": sigma_r1}
    return w


def compute_weights(pair, kind, mu=1.0, loading=DEFAULT_LOADING, ref=0):
    """Dispatch on ``kind`` in {"gev", "sdw", "r1"}."""
    if kind == "gev":
        w = gev_weights(pair.sigma_j, pair.sigma_n, loading, ref)
    elif kind == "sdw":
        w = sdw_mwf_weights(pair.sigma_j, pair.sigma_n, mu, loading, ref)
    elif kind == "r1":
        w = r1_mwf_weights(pair.sigma_j, pair.sigma_n, mu, loading, ref)
    else:
        raise ConfigurationError(f"unknown beamformer kind {kind!r}")
    return BeamformerWeights(w, kind, mu)


def apply_beamformer(weights, spec):
    """Single-channel spectrogram ``w^H x``.

    Weights of shape (freq, mic) are time-invariant; (frame, freq, mic)
    weights are applied frame by frame.
    """
    w = getattr(weights, "w", weights)
    w = np.asarray(w)
    x = spec.bins  # (I, T, F)
    if w.shape[-1] != spec.n_channels:
        raise ConfigurationError("weight/channel count mismatch")
    if w.ndim == 2:
        out = np.einsum("fi,itf->tf", np.conj(w), x)
    elif w.ndim == 3:
        out = np.einsum("tfi,itf->tf", np.conj(w), x)
    else:
        raise ConfigurationError(f"bad weight shape {w.shape}")
    return spec.replace(out[None])

"""Independent reference computations used by the tests.

Kept deliberately naive: direct sums and textbook formulas, no code shared
with the package paths they check.
"""

import numpy as np


def direct_dft(frame):
    """O(N^2) DFT, non-negative frequencies only."""
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return (frame[None, :] * np.exp(-2j * np.pi * k * t / n)).sum(axis=1)


def schroeder_rt60(h, fs, lo=-5.0, hi=-25.0):
    """RT60 by backward integration and a line fit between ``lo`` and ``hi`` dB."""
    e = np.cumsum(h[::-1] ** 2)[::-1]
    edc = 10 * np.log10(e / e[0] + 1e-300)
    t = np.arange(len(h)) / fs
    i0 = np.argmax(edc <= lo)
    i1 = np.argmax(edc <= hi)
    slope = np.polyfit(t[i0:i1], edc[i0:i1], 1)[0]
    return -60.0 / slope


def rayleigh_quotient(w, a, b):
    w = np.asarray(w)
    return np.real(np.conj(w) @ a @ w) / np.real(np.conj(w) @ b @ w)


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return g @ np.conj(g.T)


def random_unit_vectors(rng, count, n):
    v = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)

import numpy as np
import pytest

from locsep.audio import Spectrogram
from locsep.errors import ConfigurationError, DimensionError
from locsep.stats import (batch_cov, recursive_cov, update_noise_cov,
                          update_source_cov)

from oracles import random_psd


def cvec(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def outer(x):
    return np.outer(x, np.conj(x))


def test_alpha_identities(rng):
    prev = random_psd(rng, 4)
    x = cvec(rng, 4)
    assert np.array_equal(update_source_cov(prev, 0.3, x, 1.0), prev)
    np.testing.assert_array_equal(update_source_cov(prev, 1.0, x, 0.0), outer(x))
    np.testing.assert_array_equal(update_noise_cov(prev, 0.0, x, 0.0), outer(x))
    np.testing.assert_array_equal(update_noise_cov(prev, 1.0, x, 0.5), 0.5 * prev)
    m = 0.37
    total = update_source_cov(prev, m, x, 0.0) + update_noise_cov(prev, m, x, 0.0)
    np.testing.assert_allclose(total, outer(x), atol=1e-12)


def test_geometric_series_case(rng):
    x = cvec(rng, 3)
    c = np.zeros((3, 3), complex)
    for _ in range(2):
        c = update_source_cov(c, 1.0, x, 0.5)
    np.testing.assert_allclose(c, 0.75 * outer(x), atol=1e-12)


def test_noise_stays_at_init_under_full_mask(rng):
    init = 1e-6 * np.eye(4)
    c = init.astype(complex)
    for _ in range(20):
        c = update_noise_cov(c, 1.0, cvec(rng, 4), 1.0)
    np.testing.assert_array_equal(c, init)
    spec = Spectrogram(cvec(rng, 4, 30, 5), 8, 4, 16000)
    tr = recursive_cov(np.ones((30, 5)), spec, alpha=0.9)
    np.testing.assert_allclose(tr.sigma_n[-1], np.broadcast_to(
        0.9 ** 30 * 1e-6 * np.eye(4), (5, 4, 4)), rtol=1e-9)


def test_update_errors(rng):
    with pytest.raises(ConfigurationError):
        update_source_cov(np.eye(2), 1.5, cvec(rng, 2), 0.5)
    with pytest.raises(ConfigurationError):
        update_noise_cov(np.eye(2), -0.1, cvec(rng, 2), 0.5)
    with pytest.raises(ConfigurationError):
        update_source_cov(np.eye(2), 0.5, cvec(rng, 2), 1.2)


def test_hermitian_psd_over_random_sequences(rng):
    # 10^4 independent sequences, vectorized across the leading axis
    n_seq, n_steps, n_mic = 10_000, 20, 4
    sj = np.broadcast_to(1e-6 * np.eye(n_mic), (n_seq, n_mic, n_mic)).astype(complex)
    sn = sj.copy()
    alphas = rng.uniform(0, 1, n_seq)[:, None, None]
    for _ in range(n_steps):
        x = cvec(rng, n_seq, n_mic) * rng.uniform(0, 10, (n_seq, 1))
        m = rng.uniform(0, 1, n_seq)
        m[rng.random(n_seq) < 0.2] = rng.integers(0, 2)  # hard 0/1 masks too
        sj = update_source_cov(sj, m, x, alphas)
        sn = update_noise_cov(sn, m, x, alphas)
    for s in (sj, sn):
        herm = np.abs(s - np.conj(np.swapaxes(s, -1, -2))).max(axis=(1, 2))
        tr = np.real(np.trace(s, axis1=1, axis2=2))
        assert np.all(herm <= 1e-10 * np.maximum(tr, 1))
        eig = np.linalg.eigvalsh(s)
        assert np.all(eig.min(axis=1) >= -1e-9 * tr)


def test_trace_positive_after_first_active_update(rng):
    c = update_source_cov(np.zeros((3, 3), complex), 0.4, cvec(rng, 3), 0.5)
    assert np.real(np.trace(c)) > 0


def spec_of(bins):
    return Spectrogram(bins, 8, 4, 16000)


def test_batch_cov_cases(rng):
    x = cvec(rng, 3, 50, 5)
    b = batch_cov(np.ones((50, 5)), spec_of(x))
    emp = np.einsum("itf,jtf->fij", x, np.conj(x)) / 50
    np.testing.assert_allclose(b.sigma_j, emp, atol=1e-12)
    scale = np.real(np.trace(emp, axis1=1, axis2=2)) / 3
    np.testing.assert_allclose(b.sigma_n, 1e-6 * scale[:, None, None] * np.eye(3))
    one = batch_cov(np.full((1, 5), 0.3), spec_of(x[:, :1]))
    np.testing.assert_allclose(one.sigma_j[2], outer(x[:, 0, 2]), atol=1e-12)
    with pytest.raises(DimensionError):
        batch_cov(np.ones((49, 5)), spec_of(x))
    with pytest.raises(DimensionError):
        recursive_cov(np.ones((50, 4)), spec_of(x))


def test_recursive_shapes(rng):
    x = cvec(rng, 2, 6, 5)
    r = recursive_cov(np.full((6, 5), 0.5), spec_of(x), alpha=0.8)
    assert r.sigma_j.shape == (6, 5, 2, 2) and r.alpha == 0.8

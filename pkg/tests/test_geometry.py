import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locsep.errors import ConfigurationError, DegenerateGeometryError
from locsep.geometry import (ArrayGeometry, SourceDirection, linear_array,
                             relative_delays, steering_matrix, steering_vector,
                             tdoa)

D = 0.226
C = 343.0
TDOA_ENDFIRE = 0.0006588921282798834  # 0.226 / 343


def test_endfire_and_broadside_tdoa():
    g = linear_array()
    assert abs(tdoa(g, 0, 3, 90.0)) < 1e-12
    assert abs(tdoa(g, 0, 3, 0.0) - TDOA_ENDFIRE) < 1e-9
    assert abs(tdoa(g, 0, 3, 180.0) + TDOA_ENDFIRE) < 1e-9
    assert abs(TDOA_ENDFIRE - D / C) < 1e-15


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(0, 180))
def test_tdoa_is_d_cos_theta_over_c(theta):
    g = linear_array()
    assert abs(tdoa(g, 0, 3, theta) - D * np.cos(np.deg2rad(theta)) / C) < 1e-12
    assert abs(tdoa(g, 3, 0, theta) + tdoa(g, 0, 3, theta)) < 1e-15


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(0, 180), orient=st.floats(0, 360),
       cx=st.floats(-5, 5), cy=st.floats(-5, 5))
def test_tdoa_invariant_to_rigid_motion(theta, orient, cx, cy):
    a = linear_array()
    b = linear_array(center=(cx, cy, 1.0), orientation=orient)
    assert abs(tdoa(a, 1, 2, theta) - tdoa(b, 1, 2, theta)) < 1e-12


def test_steering_phase_at_1khz():
    g = linear_array()
    sv = steering_vector(g, 0.0, freq_bin=100, fft_len=1600, sample_rate=16000)
    assert sv.coefficients[0] == 1
    # mic 3 hears the endfire wave D/C later
    assert abs(np.angle(sv.coefficients[3] * np.exp(2j * np.pi * 1000 * D / C))) < 1e-9
    assert abs(2 * np.pi * 1000 * D / C - 4.13994133942445) < 1e-12


def test_steering_unit_modulus_and_dc():
    g = linear_array()
    m = steering_matrix(g, SourceDirection(37.0), np.linspace(0, 8000, 801))
    assert m.shape == (801, 4)
    np.testing.assert_allclose(np.abs(m), 1.0, atol=1e-12)
    np.testing.assert_allclose(m[0], 1.0)
    np.testing.assert_allclose(m[:, 0], 1.0)


def test_relative_delays_match_pairwise_tdoa():
    g = linear_array()
    tau = relative_delays(g, 63.0)
    for i in range(1, 4):
        assert abs(tau[i] - tdoa(g, 0, i, 63.0)) < 1e-15


def test_nonuniform_offsets_and_geometry_errors():
    g = linear_array(offsets=[0.113, 0.05, -0.02, -0.113])
    assert abs(g.distance(0, 3) - D) < 1e-12
    with pytest.raises(DegenerateGeometryError):
        ArrayGeometry(np.zeros((2, 3)))
    with pytest.raises(ConfigurationError):
        ArrayGeometry(np.zeros((0, 3)))
    assert ArrayGeometry(np.zeros((1, 3))).n_mics == 1
    with pytest.raises(ConfigurationError):
        tdoa(g, 1, 1, 0.0)
    with pytest.raises(ConfigurationError):
        steering_vector(g, 0.0, 801, 1600, 16000)


def test_doa_of_point_round_trip():
    g = linear_array(center=(2, 3, 1.5), orientation=40)
    for th in (0.0, 12.5, 90.0, 133.0, 180.0):
        p = g.center + 1.7 * g.direction_vector(th)
        assert abs(g.doa_of_point(p) - th) < 1e-6


def test_dict_round_trip():
    g = linear_array(center=(1, 2, 3), orientation=77, reference_index=2)
    h = ArrayGeometry.from_dict(g.to_dict())
    assert np.array_equal(g.mic_positions, h.mic_positions)
    assert h.reference_index == 2

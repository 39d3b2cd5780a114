"""Array geometry, far-field TDOA and steering vectors.

Angle convention: the array axis ``a`` points from the last microphone
toward the first one, and a source at DOA ``theta`` lies in direction
``cos(theta) a + sin(theta) b`` with ``b`` the horizontal normal of the
axis. With this choice the TDOA of pair (first, last) is ``d cos(theta)/c``
and is positive when the wave reaches the last microphone after the first.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateGeometryError

SPEED_OF_SOUND = 343.0
DEFAULT_APERTURE = 0.226

__all__ = [
    "ArrayGeometry", "SourceDirection", "SteeringVector", "linear_array",
    "tdoa", "steering_vector", "steering_matrix", "relative_delays",
]


@dataclass(frozen=True)
class ArrayGeometry:
    mic_positions: np.ndarray
    reference_index: int = 0
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        if p.shape[1] != 3:
            raise ConfigurationError("mic positions must be 3D points")
        if len(p) < 1:
            raise ConfigurationError("an array needs at least one microphone")
        if not 0 <= self.reference_index < len(p):
            raise ConfigurationError(
                f"reference_index {self.reference_index} out of range")
        if self.speed_of_sound <= 0:
            raise ConfigurationError("speed of sound must be positive")
        diff = np.linalg.norm(p[:, None] - p[None], axis=-1)
        np.fill_diagonal(diff, np.inf)
        if len(p) > 1 and diff.min() < 1e-9:
            raise DegenerateGeometryError("two microphones share a position")
        p.flags.writeable = False
        object.__setattr__(self, "mic_positions", p)

    @property
    def n_mics(self):
        return len(self.mic_positions)

    @property
    def center(self):
        return self.mic_positions.mean(axis=0)

    def distance(self, i, j):
        return float(np.linalg.norm(self.mic_positions[i] - self.mic_positions[j]))

    @property
    def axis(self):
        if self.n_mics == 1:  # no axis; any direction gives zero delays
            return np.array([1.0, 0.0, 0.0])
        a = self.mic_positions[0] - self.mic_positions[-1]
        return a / np.linalg.norm(a)

    @property
    def normal(self):
        """Horizontal unit vector orthogonal to the axis (the 90 deg side)."""
        a = self.axis
        b = np.cross([0.0, 0.0, 1.0], a)
        if np.linalg.norm(b) < 1e-9:  # vertical axis
            b = np.cross([1.0, 0.0, 0.0], a)
        return b / np.linalg.norm(b)

    def direction_vector(self, direction):
        th = np.deg2rad(_azimuth(direction))
        return np.cos(th) * self.axis + np.sin(th) * self.normal

    def doa_of_point(self, point):
        """DOA (deg) of a point as seen from the array center."""
        v = np.asarray(point, dtype=float) - self.center
        c = np.dot(v, self.axis) / np.linalg.norm(v)
        return float(np.rad2deg(np.arccos(np.clip(c, -1.0, 1.0))))

    def translated(self, offset):
        return ArrayGeometry(self.mic_positions + np.asarray(offset, float),
                             self.reference_index, self.speed_of_sound)

    def to_dict(self):
        return {"mic_positions": self.mic_positions.tolist(),
                "reference_index": self.reference_index,
                "speed_of_sound": self.speed_of_sound}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mic_positions"], float),
                   int(d.get("reference_index", 0)),
                   float(d.get("speed_of_sound", SPEED_OF_SOUND)))


@dataclass(frozen=True)
class SourceDirection:
    azimuth: float
    far_field: bool = True

    def __post_init__(self):
        if not np.isfinite(self.azimuth):
            raise ConfigurationError("azimuth must be finite")


@dataclass(frozen=True)
class SteeringVector:
    coefficients: np.ndarray
    freq_bin: int


def _azimuth(direction):
    if isinstance(direction, SourceDirection):
        return direction.azimuth
    return float(direction)


def linear_array(n_mics=4, aperture=DEFAULT_APERTURE, center=(0.0, 0.0, 0.0),
                 orientation=0.0, offsets=None, reference_index=0,
                 speed_of_sound=SPEED_OF_SOUND):
    """Uniform (or explicitly spaced) linear array in the horizontal plane.

    ``orientation`` is the compass angle in degrees of the array axis, i.e.
    the direction from the last microphone toward the first. ``offsets``
    optionally gives each mic's signed position along that axis.
    """
    if offsets is None:
        offsets = aperture / 2 - np.arange(n_mics) * aperture / (n_mics - 1)
    offsets = np.asarray(offsets, dtype=float)
    phi = np.deg2rad(orientation)
    a = np.array([np.cos(phi), np.sin(phi), 0.0])
    pos = np.asarray(center, float) + offsets[:, None] * a
    return ArrayGeometry(pos, reference_index, speed_of_sound)


def tdoa(geom, i, j, direction):
    """Far-field arrival-time difference ``t_j - t_i`` in seconds.

    For a collinear pair this is ``d_ij cos(theta_ij) / c``.
    """
    if i == j:
        raise ConfigurationError("tdoa needs two distinct microphones")
    delta = geom.mic_positions[i] - geom.mic_positions[j]
    if np.linalg.norm(delta) < 1e-12:
        raise DegenerateGeometryError(f"mics {i} and {j} coincide")
    s = geom.direction_vector(direction)
    return float(np.dot(delta, s) / geom.speed_of_sound)


def relative_delays(geom, direction):
    """Per-mic arrival delay relative to the reference microphone (s)."""
    s = geom.direction_vector(direction)
    delta = geom.mic_positions[geom.reference_index] - geom.mic_positions
    return delta @ s / geom.speed_of_sound


def steering_matrix(geom, direction, freqs_hz):
    """Steering coefficients ``exp(-2j pi f tau_i)``, shape (freq, mic)."""
    tau = relative_delays(geom, direction)
    f = np.asarray(freqs_hz, dtype=float)
    return np.exp(-2j * np.pi * f[..., None] * tau)


def steering_vector(geom, direction, freq_bin, fft_len, sample_rate):
    if not 0 <= freq_bin <= fft_len // 2:
        raise ConfigurationError(
            f"freq_bin {freq_bin} outside [0, {fft_len // 2}]")
    nu = freq_bin * sample_rate / fft_len
    coef = steering_matrix(geom, direction, nu)
    coef[geom.reference_index] = 1.0
    return SteeringVector(coef, freq_bin)

"""Reverberant two-speaker scene simulation.

Scene parameters are sampled uniformly from configurable ranges, room
impulse responses come from an image-source model of a shoebox room, and
the reverberated speech and noise images are scaled to a target SIR/SNR at
the reference microphone.
"""

import hashlib
import json
from functools import lru_cache
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np
from scipy.signal import butter, fftconvolve, lfilter

from .audio import TimeSignal, read_wav
from .errors import (ConfigurationError, DegenerateGeometryError,
                     EmptyInputError, InfeasibleSceneError)
from .geometry import ArrayGeometry, linear_array

__all__ = [
    "RoomSpec", "SourceSpec", "SceneSpec", "SceneTruth", "Rir", "SceneConfig",
    "sample_scene", "simulate_rir", "render_scene", "synth_noise",
    "synth_speech", "place_array", "absorption_from_rt60", "derive_seed",
    "energy_ratio_db",
]

SYNTH_SPEECH = "synth-speech"
ISOTROPIC = "isotropic"


@dataclass(frozen=True)
class RoomSpec:
    dims: Tuple[float, float, float]
    rt60: float
    source_positions: Tuple[Tuple[float, float, float], ...]
    array_center: Tuple[float, float, float]
    orientation: float = 0.0  # compass angle of the array axis, degrees
    anechoic: bool = False

    def __post_init__(self):
        dims = np.asarray(self.dims, float)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise ConfigurationError(f"bad room dims {self.dims}")
        if not self.anechoic and self.rt60 <= 0:
            raise ConfigurationError("rt60 must be positive unless anechoic")
        for p in list(self.source_positions) + [self.array_center]:
            if not _inside(p, dims):
                raise ConfigurationError(f"position {p} is outside the room")


@dataclass(frozen=True)
class SourceSpec:
    path: str  # WAV path or "synth-speech:<seed>:<seconds>"
    doa: float


@dataclass(frozen=True)
class SceneSpec:
    room: RoomSpec
    speech_sources: Tuple[SourceSpec, ...]
    sir_db: float
    snr_db: float
    noise_source: str = ISOTROPIC  # "isotropic" or a WAV path, optional "@offset"
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        r = d["room"]
        room = RoomSpec(tuple(r["dims"]), float(r["rt60"]),
                        tuple(tuple(p) for p in r["source_positions"]),
                        tuple(r["array_center"]), float(r["orientation"]),
                        bool(r.get("anechoic", False)))
        srcs = tuple(SourceSpec(s["path"], float(s["doa"]))
                     for s in d["speech_sources"])
        return cls(room, srcs, float(d["sir_db"]), float(d["snr_db"]),
                   d.get("noise_source", ISOTROPIC), int(d.get("seed", 0)))


@dataclass(frozen=True)
class Rir:
    taps: np.ndarray  # (mic, tap)
    sample_rate: int


@dataclass
class SceneTruth:
    mixture: TimeSignal
    spatial_images: List[TimeSignal]
    noise_image: TimeSignal
    true_doas: List[float]
    achieved_sir: np.ndarray  # per channel, dB, source 0 vs the rest
    achieved_snr: np.ndarray  # per channel, dB
    geometry: Optional[ArrayGeometry] = None
    spec: Optional[SceneSpec] = None

    def additivity_holds(self):
        """Mixture equals the float32 sum of images and noise, bit for bit."""
        f32 = lambda a: np.asarray(a).astype(np.float32)
        return np.array_equal(
            f32(self.mixture.samples),
            _mix([f32(im.samples) for im in self.spatial_images],
                 f32(self.noise_image.samples)))

    def record(self):
        """JSON-serializable truth record."""
        ref = self.geometry.reference_index if self.geometry else 0
        rec = {
            "true_doas": [float(d) for d in self.true_doas],
            "achieved_sir_db": float(self.achieved_sir[ref]),
            "achieved_snr_db": float(self.achieved_snr[ref]),
            "achieved_sir_db_per_channel": [float(v) for v in self.achieved_sir],
            "achieved_snr_db_per_channel": [float(v) for v in self.achieved_snr],
            "sample_rate": self.mixture.sample_rate,
            "n_samples": self.mixture.n_samples,
        }
        if self.spec is not None:
            rec["rt60"] = self.spec.room.rt60
            rec["seed"] = self.spec.seed
            rec["sir_db"] = self.spec.sir_db
            rec["snr_db"] = self.spec.snr_db
        if self.geometry is not None:
            rec["geometry"] = self.geometry.to_dict()
        return rec


@dataclass
class SceneConfig:
    """Sampling ranges and rendering options for a scene generator."""
    source_pool: List[str] = field(default_factory=list)
    dim_range: Tuple[float, float] = (3.0, 9.0)
    rt60_range: Tuple[float, float] = (0.3, 1.0)
    sir_range: Tuple[float, float] = (0.0, 10.0)
    snr_range: Tuple[float, float] = (0.0, 10.0)
    doa_range: Tuple[float, float] = (0.0, 180.0)
    min_delta_doa: float = 5.0
    n_sources: int = 2
    distance_range: Tuple[float, float] = (1.0, 2.0)
    height_range: Tuple[float, float] = (1.0, 1.8)
    wall_margin: float = 0.5
    noise_pool: List[str] = field(default_factory=list)  # empty: isotropic
    max_retries: int = 1000
    anechoic: bool = False

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for k, v in known.items():
            if k.endswith("_range"):
                known[k] = tuple(v)
        return cls(**known)


def derive_seed(master_seed, scene_id):
    """Stable 63-bit seed from a master seed and a scene identifier."""
    h = hashlib.sha256(f"{master_seed}:{scene_id}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def _inside(p, dims, margin=0.0):
    p = np.asarray(p, float)
    return bool(np.all(p > margin) and np.all(p < np.asarray(dims) - margin))


def energy_ratio_db(a, b):
    return 10.0 * np.log10(np.sum(np.square(a), axis=-1)
                           / np.sum(np.square(b), axis=-1))


# ---------------------------------------------------------------- sampling

def sample_scene(config, seed):
    """Draw a SceneSpec; identical seeds give identical specs."""
    if not config.source_pool:
        raise EmptyInputError("source audio pool is empty")
    if config.n_sources < 1:
        raise ConfigurationError("need at least one source")
    rng = np.random.default_rng(seed)
    for _ in range(config.max_retries):
        dims = rng.uniform(*config.dim_range, size=3)
        rt60 = float(rng.uniform(*config.rt60_range))
        doas = rng.uniform(*config.doa_range, size=config.n_sources)
        if config.n_sources > 1:
            gaps = np.abs(doas[:, None] - doas[None])
            gaps[np.diag_indices(config.n_sources)] = np.inf
            if gaps.min() < config.min_delta_doa:
                continue
        m = config.wall_margin
        if np.any(dims <= 2 * m):
            continue
        center = np.array([rng.uniform(m, dims[0] - m),
                           rng.uniform(m, dims[1] - m),
                           rng.uniform(*config.height_range)])
        orientation = float(rng.uniform(0.0, 360.0))
        dists = rng.uniform(*config.distance_range, size=config.n_sources)
        phi = np.deg2rad(orientation)
        a = np.array([np.cos(phi), np.sin(phi), 0.0])
        b = np.array([-np.sin(phi), np.cos(phi), 0.0])
        th = np.deg2rad(doas)
        pos = center + dists[:, None] * (np.cos(th)[:, None] * a
                                         + np.sin(th)[:, None] * b)
        if not _inside(center, dims, m) or not all(
                _inside(p, dims, m) for p in pos):
            continue
        sir = float(rng.uniform(*config.sir_range))
        snr = float(rng.uniform(*config.snr_range))
        picks = rng.choice(len(config.source_pool), size=config.n_sources,
                           replace=len(config.source_pool) < config.n_sources)
        if config.noise_pool:
            noise = config.noise_pool[int(rng.integers(len(config.noise_pool)))]
        else:
            noise = ISOTROPIC
        room = RoomSpec(tuple(float(v) for v in dims), rt60,
                        tuple(tuple(float(v) for v in p) for p in pos),
                        tuple(float(v) for v in center), orientation,
                        config.anechoic)
        sources = tuple(SourceSpec(config.source_pool[k], float(d))
                        for k, d in zip(picks, doas))
        return SceneSpec(room, sources, sir, snr, noise,
                         int(rng.integers(2 ** 62)))
    raise InfeasibleSceneError(
        f"no feasible scene after {config.max_retries} draws")


# -------------------------------------------------------------------- RIRs

@lru_cache(maxsize=256)
def _ism_energy_table(dims, span, c, bin_s=1e-3):
    """Image energy ``1/d**2`` binned by arrival time and reflection order.

    Uses a generic source/receiver pair inside the room; the decay of the
    image model depends on the room far more than on the exact positions.
    """
    dims = np.asarray(dims, float)
    src, rcv = 0.37 * dims, 0.61 * dims
    reach = c * span
    axes = [_axis_images(src[k], dims[k], int(np.ceil(reach / (2 * dims[k]))) + 1)
            for k in range(3)]
    (xs, ox), (ys, oy), (zs, oz) = axes
    n_bins = int(np.ceil(span / bin_s)) + 1
    dyz2 = (ys - rcv[1])[:, None] ** 2 + (zs - rcv[2])[None, :] ** 2
    oyz = oy[:, None] + oz[None, :]
    max_order = int(ox.max() + oyz.max())
    table = np.zeros((n_bins, max_order + 1))
    for x, o in zip(xs, ox):
        d2 = (x - rcv[0]) ** 2 + dyz2
        d = np.sqrt(d2)
        keep = d <= reach
        if not keep.any():
            continue
        b = (d[keep] / c / bin_s).astype(int)
        np.add.at(table, (b, (o + oyz)[keep]), 1.0 / d2[keep])
    return table, bin_s


def _ism_rt60(dims, beta, c, span):
    """RT60 of the image model, from its EDC between -5 and -25 dB."""
    table, bin_s = _ism_energy_table(tuple(dims), span, c)
    orders = np.arange(table.shape[1])
    energy = table @ (beta ** (2 * orders))
    edc = np.cumsum(energy[::-1])[::-1]
    edc_db = 10 * np.log10(edc / edc[0] + 1e-300)
    t = np.arange(len(edc)) * bin_s
    t5 = np.interp(5.0, -edc_db, t)
    t25 = np.interp(25.0, -edc_db, t)
    return 3.0 * (t25 - t5)


def absorption_from_rt60(dims, rt60, formula="ism", c=343.0):
    """Uniform wall absorption coefficient giving ``rt60`` in a shoebox.

    ``"sabine"`` and ``"eyring"`` use the classical diffuse-field formulas.
    ``"ism"`` matches the late decay the image-source model actually
    produces (fewer reflections per metre along near-axial directions make
    the image model ring longer than the diffuse formulas predict).
    """
    dims = tuple(float(v) for v in dims)
    lx, ly, lz = dims
    volume = lx * ly * lz
    surface = 2 * (lx * ly + lx * lz + ly * lz)
    k = 24 * np.log(10) / c
    if formula == "sabine":
        alpha = k * volume / (surface * rt60)
    elif formula == "eyring":
        alpha = 1 - np.exp(-k * volume / (surface * rt60))
    elif formula == "ism":
        # bisection on the reflection coefficient; RT60 grows with beta
        span = 1.5 * rt60
        lo, hi = 1e-4, 1.0 - 1e-9
        if _ism_rt60(dims, hi, c, span) < rt60:
            raise InfeasibleSceneError(f"rt60={rt60} s unreachable in {tuple(dims)}")
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if _ism_rt60(dims, mid, c, span) < rt60:
                lo = mid
            else:
                hi = mid
        alpha = 1 - (0.5 * (lo + hi)) ** 2
    else:
        raise ConfigurationError(f"unknown absorption formula {formula!r}")
    if alpha >= 1:
        raise InfeasibleSceneError(
            f"rt60={rt60} s is too short for a {tuple(dims)} room")
    return float(alpha)


def _axis_images(src, length_m, n_max):
    """Image coordinates and reflection counts along one axis."""
    n = np.arange(-n_max, n_max + 1)
    coords, orders = [], []
    for q in (0, 1):
        coords.append((1 - 2 * q) * src + 2 * n * length_m)
        orders.append(np.abs(n - q) + np.abs(n))
    return np.concatenate(coords), np.concatenate(orders)


def simulate_rir(room, src, geom, sample_rate=16000, max_order=None,
                 length=None, fractional=False, absorption="ism",
                 highpass=80.0):
    """Shoebox image-source RIR from ``src`` to every mic of ``geom``.

    Images are placed at the nearest sample (or spread with a windowed sinc
    when ``fractional``) with gain ``beta**order / (4 pi dist)``. ``length``
    (s) defaults to the room's rt60; ``max_order`` defaults to the larger of
    6 and the order needed to fill that length.
    """
    dims = np.asarray(room.dims, float)
    src = np.asarray(src, float)
    mics = geom.mic_positions
    c = geom.speed_of_sound
    if not _inside(src, dims):
        raise ConfigurationError("source outside the room")
    if not all(_inside(m, dims) for m in mics):
        raise ConfigurationError("microphone outside the room")
    direct = np.linalg.norm(mics - src, axis=1)
    if direct.min() < 1e-3:
        raise DegenerateGeometryError("source coincides with a microphone")
    if length is None:
        length = 0.0 if room.anechoic else room.rt60
    length = max(length, (direct.max() / c) + 0.01)
    n_taps = int(np.ceil(length * sample_rate)) + 1
    if room.anechoic:
        beta = 0.0
        max_order = 0
    else:
        beta = np.sqrt(1 - absorption_from_rt60(dims, room.rt60, absorption, c))
        if max_order is None:
            max_order = max(6, int(np.ceil(c * length / dims.min())) + 1)
    reach = c * length
    half = 20 if fractional else 0
    taps = np.zeros((len(mics), n_taps + 2 * half + 1))
    axes = [_axis_images(src[k], dims[k],
                         min(max_order, int(np.ceil(reach / (2 * dims[k]))) + 1))
            for k in range(3)]
    (xs, ox), (ys, oy), (zs, oz) = axes
    yz_order = oy[:, None] + oz[None, :]
    for m, mic in enumerate(mics):
        dyz2 = (ys - mic[1])[:, None] ** 2 + (zs - mic[2])[None, :] ** 2
        idx_all, amp_all = [], []
        for x, o in zip(xs, ox):
            order = o + yz_order
            d = np.sqrt((x - mic[0]) ** 2 + dyz2)
            keep = (order <= max_order) & (d <= reach)
            if not keep.any():
                continue
            d = d[keep]
            gain = (beta ** order[keep] if beta > 0 else
                    (order[keep] == 0).astype(float)) / (4 * np.pi * d)
            idx_all.append(d / c * sample_rate)
            amp_all.append(gain)
        t = np.concatenate(idx_all)
        g = np.concatenate(amp_all)
        if fractional:
            base = np.floor(t).astype(int)
            frac = t - base
            for k in range(-half, half + 1):
                arg = k - frac
                w = 0.5 * (1 + np.cos(np.pi * arg / (half + 1)))
                taps[m] += np.bincount(base + k + half, g * w * np.sinc(arg),
                                       minlength=taps.shape[1])
        else:
            taps[m] += np.bincount(np.rint(t).astype(int) + half, g,
                                   minlength=taps.shape[1])
    taps = taps[:, half:half + n_taps]
    if highpass and not room.anechoic:
        # positive image pulses pile up into a DC tail; strip it
        b, a = butter(2, highpass, "high", fs=sample_rate)
        taps = lfilter(b, a, taps, axis=1)
    return Rir(taps, sample_rate)


# ------------------------------------------------------------ source audio

def synth_speech(duration, sample_rate=16000, seed=0):
    """Speech-like test signal: syllabic bursts of formant-shaped harmonics.

    Not speech, but sparse in time-frequency the way speech is, which is
    what mask-based separation relies on.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    out = np.zeros(n)
    f0_base = rng.uniform(90.0, 240.0)
    t0 = int(rng.uniform(0.0, 0.15) * sample_rate)
    while t0 < n:
        seg = int(rng.uniform(0.12, 0.32) * sample_rate)
        seg = min(seg, n - t0)
        if seg <= 16:
            break
        t = np.arange(seg) / sample_rate
        env = np.sin(np.pi * (np.arange(seg) + 0.5) / seg) ** 1.5
        if rng.random() < 0.8:
            f0 = f0_base * (1 + rng.uniform(-0.12, 0.12)
                            + rng.uniform(-0.1, 0.1) * t / max(t[-1], 1e-9))
            phase = 2 * np.pi * np.cumsum(f0) / sample_rate
            formants = (rng.uniform(300, 900), rng.uniform(900, 2500),
                        rng.uniform(2300, 3400))
            sig = np.zeros(seg)
            for h in range(1, int(7600 / f0_base) + 1):
                fh = h * f0_base
                gain = sum(1.0 / (1 + ((fh - fm) / 120.0) ** 2)
                           for fm in formants) / h ** 0.5
                sig += gain * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        else:
            white = rng.standard_normal(seg)
            spec = np.fft.rfft(white)
            f = np.fft.rfftfreq(seg, 1 / sample_rate)
            spec *= np.exp(-0.5 * ((f - rng.uniform(3000, 7000)) / 1200.0) ** 2)
            sig = np.fft.irfft(spec, seg)
        sig *= env / (np.sqrt(np.mean(sig ** 2)) + 1e-12)
        out[t0:t0 + seg] = sig
        gap = rng.uniform(0.03, 0.15) if rng.random() < 0.85 else rng.uniform(0.25, 0.45)
        t0 += seg + int(gap * sample_rate)
    peak = np.max(np.abs(out))
    return out / peak * 0.5 if peak > 0 else out


def load_source(path, sample_rate):
    """Mono source signal from a WAV path or a ``synth-speech`` descriptor."""
    if path.startswith(SYNTH_SPEECH + ":"):
        _, seed, dur = path.split(":")
        return synth_speech(float(dur), sample_rate, int(seed))
    sig = read_wav(path, expected_rate=sample_rate)
    return sig.samples[0]


def synth_noise(descriptor, geom, n_samples, sample_rate=16000, seed=0,
                n_waves=128):
    """Multichannel background noise of ``n_samples`` samples.

    ``descriptor`` is ``"isotropic"`` (sum of white plane waves from random
    directions, a diffuse-field approximation) or a WAV path with an
    optional ``@offset`` suffix in samples; without an offset a random crop
    is taken.
    """
    rng = np.random.default_rng(seed)
    if descriptor == ISOTROPIC:
        if n_waves < 64:
            raise ConfigurationError("isotropic noise needs >= 64 plane waves")
        n_fft = n_samples
        f = np.fft.rfftfreq(n_fft, 1 / sample_rate)
        spec = np.zeros((geom.n_mics, len(f)), dtype=complex)
        u = rng.standard_normal((n_waves, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        rel = geom.mic_positions - geom.center
        for k in range(n_waves):
            white = np.fft.rfft(rng.standard_normal(n_fft))
            delay = -(rel @ u[k]) / geom.speed_of_sound
            spec += white * np.exp(-2j * np.pi * f * delay[:, None])
        x = np.fft.irfft(spec, n_fft, axis=-1) / np.sqrt(n_waves)
        return TimeSignal(x, sample_rate)
    path, offset = descriptor, None
    if "@" in descriptor:
        path, off = descriptor.rsplit("@", 1)
        offset = int(off)
    sig = read_wav(path, expected_rate=sample_rate)
    if sig.n_channels != geom.n_mics:
        raise ConfigurationError(
            f"noise file has {sig.n_channels} channels, array has {geom.n_mics}")
    if sig.n_samples < n_samples:
        raise ConfigurationError(
            f"noise file {path} shorter than requested {n_samples} samples")
    if offset is None:
        offset = int(rng.integers(0, sig.n_samples - n_samples + 1))
    if offset + n_samples > sig.n_samples:
        raise ConfigurationError("noise crop runs past end of file")
    return TimeSignal(sig.samples[:, offset:offset + n_samples], sample_rate)


# --------------------------------------------------------------- rendering

def place_array(template, center, orientation):
    """Rotate ``template`` about z by ``orientation`` deg and move it to ``center``."""
    rel = template.mic_positions - template.center
    phi = np.deg2rad(orientation)
    rot = np.array([[np.cos(phi), -np.sin(phi), 0.0],
                    [np.sin(phi), np.cos(phi), 0.0],
                    [0.0, 0.0, 1.0]])
    pos = rel @ rot.T + np.asarray(center, float)
    return ArrayGeometry(pos, template.reference_index, template.speed_of_sound)


def _mix(images, noise):
    # fixed summation order keeps additivity bit-exact on re-evaluation
    acc = np.zeros_like(noise)
    for im in images:
        acc = acc + im
    return acc + noise


def render_scene(spec, template=None, sample_rate=16000, peak=0.9,
                 rir_kwargs=None):
    """Convolve, scale and mix the sources of ``spec`` into a SceneTruth.

    Source 0 is the SIR anchor: the interferers are scaled so that the
    reference-channel energy ratio of source 0 to the other images equals
    ``sir_db``; the noise is scaled against the sum of speech images.
    All images are stored as float32-exact values.
    """
    template = template if template is not None else linear_array()
    geom = place_array(template, spec.room.array_center, spec.room.orientation)
    ref = geom.reference_index
    sources = [load_source(s.path, sample_rate) for s in spec.speech_sources]
    n = max(len(s) for s in sources)
    if n == 0:
        raise EmptyInputError("all sources are empty")
    images = []
    for s, pos in zip(sources, spec.room.source_positions):
        if not np.any(s):
            raise EmptyInputError("silent source: cannot realize the SIR")
        rir = simulate_rir(spec.room, pos, geom, sample_rate,
                           **(rir_kwargs or {}))
        src = np.zeros(n)
        src[:len(s)] = s
        im = fftconvolve(src[None, :], rir.taps, axes=1)[:, :n]
        if not np.any(im[ref]):
            raise EmptyInputError("source image is silent at the reference mic")
        images.append(im)
    e_target = np.sum(images[0][ref] ** 2)
    if len(images) > 1:
        per_int = e_target / 10 ** (spec.sir_db / 10) / (len(images) - 1)
        for k in range(1, len(images)):
            images[k] = images[k] * np.sqrt(per_int / np.sum(images[k][ref] ** 2))
    noise = synth_noise(spec.noise_source, geom, n, sample_rate,
                        seed=spec.seed).samples
    speech = sum(images)
    e_speech = np.sum(speech[ref] ** 2)
    e_noise = np.sum(noise[ref] ** 2)
    if e_noise == 0:
        raise EmptyInputError("noise is silent: cannot realize the SNR")
    noise = noise * np.sqrt(e_speech / 10 ** (spec.snr_db / 10) / e_noise)
    gain = peak / max(np.max(np.abs(speech + noise)), 1e-12)
    images = [(im * gain).astype(np.float32) for im in images]
    noise = (noise * gain).astype(np.float32)
    mixture = _mix(images, noise)
    speech32 = _mix(images, np.zeros_like(noise))
    if len(images) > 1:
        others = _mix(images[1:], np.zeros_like(noise))
        sir = energy_ratio_db(images[0].astype(float), others.astype(float))
    else:
        sir = np.full(geom.n_mics, np.inf)
    snr = energy_ratio_db(speech32.astype(float), noise.astype(float))
    return SceneTruth(
        mixture=TimeSignal(mixture, sample_rate),
        spatial_images=[TimeSignal(im, sample_rate) for im in images],
        noise_image=TimeSignal(noise, sample_rate),
        true_doas=[s.doa for s in spec.speech_sources],
        achieved_sir=sir, achieved_snr=snr, geometry=geom, spec=spec)


def spec_to_json(spec):
    return json.dumps(spec.to_dict(), sort_keys=True)

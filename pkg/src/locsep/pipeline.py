"""Location-guided separation: DS beamforming -> mask -> covariances -> adaptive beamformer.

Also holds the dataset/manifest plumbing used by the command line.
"""

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List

import jsonschema
import numpy as np

from .audio import (DEFAULT_FRAME_SHIFT, DEFAULT_SAMPLE_RATE,
                    DEFAULT_WINDOW_LEN, TimeSignal, istft, read_wav, stft,
                    write_wav)
from .beamformers import KINDS, compute_weights, apply_beamformer
from .errors import ConfigurationError
from .evaluation import EvalRecord, doa_error, si_sdr
from .front import (csipd_features, ds_beamform, heuristic_mask,
                    load_external_mask, oracle_mask)
from .geometry import ArrayGeometry, linear_array
from .localization import localize, oracle_select
from .scene import (SYNTH_SPEECH, SceneConfig, SceneSpec, SceneTruth,
                    derive_seed, render_scene, sample_scene)
from .stats import batch_cov, recursive_cov

__all__ = ["PipelineConfig", "SeparationResult", "separate", "make_dataset",
           "load_manifest", "load_scene", "separate_manifest",
           "MANIFEST_VERSION", "MANIFEST_SCHEMA"]

MANIFEST_VERSION = 1
PATH_ROOT_ENV = "LOCSEP_DATA_ROOT"

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["version", "sample_rate", "geometry", "stft", "pipeline",
                 "seed", "scenes"],
    "properties": {
        "version": {"const": MANIFEST_VERSION},
        "sample_rate": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "geometry": {
            "type": "object",
            "required": ["mic_positions"],
            "properties": {
                "mic_positions": {"type": "array", "minItems": 2,
                                  "items": {"type": "array", "minItems": 3,
                                            "maxItems": 3,
                                            "items": {"type": "number"}}},
                "reference_index": {"type": "integer", "minimum": 0},
                "speed_of_sound": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "stft": {
            "type": "object",
            "required": ["window_len", "frame_shift"],
            "properties": {"window_len": {"type": "integer", "minimum": 2},
                           "frame_shift": {"type": "integer", "minimum": 1}},
        },
        "pipeline": {"type": "object"},
        "scenes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "mixture"],
                "properties": {
                    "id": {"type": "string"},
                    "mixture": {"type": "string"},
                    "images": {"type": "array", "items": {"type": "string"}},
                    "noise": {"type": "string"},
                    "truth": {"type": "string"},
                    "spec": {"type": "object"},
                },
            },
        },
    },
}

PIPELINE_LOADING = 0.1


@dataclass
class PipelineConfig:
    doa: str = "truth"  # "truth" | "gcc"
    mask: str = "heuristic"  # "oracle" | "heuristic" | "file:PATH"
    bf: str = "r1"
    mu: float = 1.0
    alpha: float = 0.95
    stats: str = "batch"  # "batch" | "recursive"
    mask_exponent: float = 2.0
    # heavier than the solver default: heuristic masks leak target into Σ_n
    loading: float = PIPELINE_LOADING
    window_len: int = DEFAULT_WINDOW_LEN
    frame_shift: int = DEFAULT_FRAME_SHIFT

    def __post_init__(self):
        if self.doa not in ("truth", "gcc"):
            raise ConfigurationError(f"doa mode must be truth or gcc, got {self.doa!r}")
        if self.bf not in KINDS:
            raise ConfigurationError(f"bf must be one of {KINDS}, got {self.bf!r}")
        if self.stats not in ("batch", "recursive"):
            raise ConfigurationError("stats must be batch or recursive")
        if not (self.mask in ("oracle", "heuristic") or self.mask.startswith("file:")):
            raise ConfigurationError(f"unknown mask provider {self.mask!r}")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @property
    def mask_kind(self):
        return "file" if self.mask.startswith("file:") else self.mask


@dataclass
class SeparationResult:
    estimates: List[TimeSignal]
    doas: List[float]
    masks: list
    weights: list
    features: list
    records: List[EvalRecord] = field(default_factory=list)


def _estimate_doas(mixture, geom, config, true_doas, n_sources):
    if config.doa == "truth":
        if true_doas is None:
            raise ConfigurationError("--doa truth needs ground-truth DOAs")
        return list(true_doas)
    _, peaks, _ = localize(mixture, geom, k=max(2, n_sources))
    if true_doas is not None:
        return [oracle_select(peaks, t) for t in true_doas]
    doas = list(peaks.doas[:n_sources])
    while len(doas) < n_sources:  # fewer peaks than sources
        doas.append(doas[-1] if doas else 90.0)
    return doas


def _masks(config, x, ds_specs, truth, scene_id=None):
    if config.mask == "oracle":
        if truth is None:
            raise ConfigurationError("--mask oracle needs simulated ground truth")
        return oracle_mask(truth, x)
    if config.mask == "heuristic":
        return heuristic_mask(ds_specs, config.mask_exponent)
    template = config.mask[len("file:"):]
    return [load_external_mask(template.format(scene=scene_id, source=j),
                               (x.n_frames, x.n_freqs), source_id=j)
            for j in range(len(ds_specs))]


def separate(mixture, geom, config, truth=None, true_doas=None, n_sources=2,
             scene_id="scene"):
    """Run the full pipeline on one multichannel mixture.

    ``truth`` (a SceneTruth) enables oracle masks and SI-SDR scoring;
    ``true_doas`` alone is enough for ``doa="truth"``.
    """
    if mixture.n_channels != geom.n_mics:
        raise ConfigurationError(
            f"mixture has {mixture.n_channels} channels, array has {geom.n_mics}")
    if truth is not None and true_doas is None:
        true_doas = truth.true_doas
    if true_doas is not None:
        n_sources = len(true_doas)
    ref = geom.reference_index
    doas = _estimate_doas(mixture, geom, config, true_doas, n_sources)
    x = stft(mixture, config.window_len, config.frame_shift)
    ds_specs = [ds_beamform(x, geom, d) for d in doas]
    features = [csipd_features(y, x.channel(ref)) for y in ds_specs]
    masks = _masks(config, x, ds_specs, truth, scene_id)
    estimates, weights = [], []
    for m in masks:
        if config.stats == "batch":
            pair = batch_cov(m, x)
        else:
            pair = recursive_cov(m, x, config.alpha)
        w = compute_weights(pair, config.bf, config.mu, config.loading, ref)
        weights.append(w)
        y = apply_beamformer(w, x)
        estimates.append(istft(y, mixture.n_samples))
    result = SeparationResult(estimates, doas, masks, weights, features)
    for j, est in enumerate(estimates):
        rec = EvalRecord(
            scene_id=scene_id, source=j, si_sdr_in=None, si_sdr_out=None,
            doa_true=None if true_doas is None else float(true_doas[j]),
            doa_est=float(doas[j]), delta_doa=None, sir_db=None, snr_db=None,
            bf_kind=config.bf, mask_kind=config.mask_kind, doa_mode=config.doa)
        if true_doas is not None and len(true_doas) > 1:
            others = [abs(true_doas[j] - t) for k, t in enumerate(true_doas) if k != j]
            rec.delta_doa = float(min(others))
        if truth is not None:
            target = truth.spatial_images[j].samples[ref].astype(float)
            rec.si_sdr_in = si_sdr(mixture.samples[ref], target)
            rec.si_sdr_out = si_sdr(est.samples[0], target)
            interf = sum(im.samples[ref].astype(float)
                         for k, im in enumerate(truth.spatial_images) if k != j)
            if np.ndim(interf):
                rec.sir_db = float(10 * np.log10(np.sum(target ** 2)
                                                 / np.sum(interf ** 2)))
            noise = truth.noise_image.samples[ref].astype(float)
            speech = sum(im.samples[ref].astype(float) for im in truth.spatial_images)
            rec.snr_db = float(10 * np.log10(np.sum(speech ** 2) / np.sum(noise ** 2)))
            rec.extra["doa_error"] = doa_error(true_doas[j], doas[j])
        result.records.append(rec)
    return result


# ------------------------------------------------------------- manifests

def _base_dir(manifest_path):
    return os.environ.get(PATH_ROOT_ENV) or os.path.dirname(os.path.abspath(manifest_path))


def _dump_json(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def make_dataset(config, out_dir, jobs=1):
    """Render ``config["n_scenes"]`` seeded scenes into ``out_dir``.

    Returns the manifest path. The config keys are ``n_scenes``, ``seed``,
    ``sample_rate``, ``scene`` (SceneConfig fields), ``synthetic_sources``
    (``count``/``duration``, used when the scene source pool is empty),
    ``geometry``, ``stft`` and ``pipeline``.
    """
    os.makedirs(out_dir, exist_ok=True)
    seed = int(config.get("seed", 0))
    n_scenes = int(config.get("n_scenes", 0))
    sr = int(config.get("sample_rate", DEFAULT_SAMPLE_RATE))
    geom = (ArrayGeometry.from_dict(config["geometry"]) if "geometry" in config
            else linear_array())
    scene_cfg = SceneConfig.from_dict(config.get("scene", {}))
    if not scene_cfg.source_pool:
        syn = config.get("synthetic_sources", {})
        count, dur = int(syn.get("count", 20)), float(syn.get("duration", 3.0))
        scene_cfg.source_pool = [
            f"{SYNTH_SPEECH}:{derive_seed(seed, f'source{k}') % 2 ** 31}:{dur}"
            for k in range(count)]
    stft_cfg = config.get("stft", {"window_len": DEFAULT_WINDOW_LEN,
                                   "frame_shift": DEFAULT_FRAME_SHIFT})
    pipe_cfg = asdict(PipelineConfig.from_dict(config.get("pipeline", {})))
    ids = [f"scene{k:04d}" for k in range(n_scenes)]
    tasks = [(sid, scene_cfg, derive_seed(seed, sid), geom, sr, out_dir)
             for sid in ids]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            entries = list(ex.map(_render_task, tasks))
    else:
        entries = [_render_task(t) for t in tasks]
    manifest = {
        "version": MANIFEST_VERSION, "sample_rate": sr, "seed": seed,
        "geometry": geom.to_dict(),
        "stft": {"window_len": int(stft_cfg["window_len"]),
                 "frame_shift": int(stft_cfg["frame_shift"])},
        "pipeline": pipe_cfg, "scenes": entries,
    }
    jsonschema.validate(manifest, MANIFEST_SCHEMA)
    path = os.path.join(out_dir, "manifest.json")
    _dump_json(path, manifest)
    return path


def _render_task(task):
    sid, scene_cfg, seed, geom, sr, out_dir = task
    spec = sample_scene(scene_cfg, seed)
    truth = render_scene(spec, geom, sr)
    if not truth.additivity_holds():
        raise RuntimeError(f"{sid}: mixture is not the sum of its images")
    sdir = os.path.join(out_dir, sid)
    os.makedirs(sdir, exist_ok=True)
    write_wav(os.path.join(sdir, "mixture.wav"), truth.mixture)
    images = []
    for j, im in enumerate(truth.spatial_images):
        name = f"image{j}.wav"
        write_wav(os.path.join(sdir, name), im)
        images.append(f"{sid}/{name}")
    write_wav(os.path.join(sdir, "noise.wav"), truth.noise_image)
    _dump_json(os.path.join(sdir, "truth.json"), truth.record())
    return {"id": sid, "mixture": f"{sid}/mixture.wav", "images": images,
            "noise": f"{sid}/noise.wav", "truth": f"{sid}/truth.json",
            "spec": spec.to_dict()}


def load_manifest(path):
    with open(path) as f:
        manifest = json.load(f)
    try:
        jsonschema.validate(manifest, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigurationError(f"{path}: invalid manifest: {e.message}") from e
    return manifest


def load_scene(manifest, manifest_path, entry):
    """Mixture, placed geometry and (if present) SceneTruth of one entry."""
    base = _base_dir(manifest_path)
    sr = manifest["sample_rate"]
    mixture = read_wav(os.path.join(base, entry["mixture"]), expected_rate=sr)
    geom = ArrayGeometry.from_dict(manifest["geometry"])
    truth = None
    if entry.get("truth"):
        with open(os.path.join(base, entry["truth"])) as f:
            rec = json.load(f)
        if "geometry" in rec:
            geom = ArrayGeometry.from_dict(rec["geometry"])
        truth = SceneTruth(
            mixture=mixture,
            spatial_images=[read_wav(os.path.join(base, p), sr)
                            for p in entry.get("images", [])],
            noise_image=read_wav(os.path.join(base, entry["noise"]), sr),
            true_doas=rec["true_doas"],
            achieved_sir=np.asarray(rec["achieved_sir_db_per_channel"]),
            achieved_snr=np.asarray(rec["achieved_snr_db_per_channel"]),
            geometry=geom,
            spec=SceneSpec.from_dict(entry["spec"]) if "spec" in entry else None)
        if not truth.spatial_images:
            truth = None
    return mixture, geom, truth, (rec["true_doas"] if entry.get("truth") else None)


def _separate_task(task):
    manifest, manifest_path, entry, config, out_dir = task
    mixture, geom, truth, true_doas = load_scene(manifest, manifest_path, entry)
    if config.doa == "truth" and true_doas is None:
        raise ConfigurationError(f"{entry['id']}: --doa truth needs a truth record")
    res = separate(mixture, geom, config, truth=truth, true_doas=true_doas,
                   scene_id=entry["id"])
    if out_dir is not None:
        sdir = os.path.join(out_dir, entry["id"])
        os.makedirs(sdir, exist_ok=True)
        for j, est in enumerate(res.estimates):
            write_wav(os.path.join(sdir, f"source{j}.wav"), est)
    return res.records


def separate_manifest(manifest_path, config, scene_ids=None, out_dir=None, jobs=1):
    """Separate every (or the selected) scene; returns EvalRecords in order."""
    manifest = load_manifest(manifest_path)
    entries = manifest["scenes"]
    if scene_ids is not None:
        known = {e["id"]: e for e in entries}
        missing = [s for s in scene_ids if s not in known]
        if missing:
            raise ConfigurationError(f"unknown scene ids: {missing}")
        entries = [known[s] for s in scene_ids]
    stft_cfg = manifest["stft"]
    config = replace(config, window_len=stft_cfg["window_len"],
                     frame_shift=stft_cfg["frame_shift"])
    tasks = [(manifest, manifest_path, e, config, out_dir) for e in entries]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            chunks = list(ex.map(_separate_task, tasks))
    else:
        chunks = [_separate_task(t) for t in tasks]
    return [r for chunk in chunks for r in chunk]

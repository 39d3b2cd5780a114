import json
import os

import numpy as np
import pytest

from locsep.audio import read_wav
from locsep.cli import main
from locsep.pipeline import (PipelineConfig, load_manifest, load_scene,
                             make_dataset, separate, separate_manifest)

SMALL = {"n_scenes": 2, "seed": 3,
         "synthetic_sources": {"count": 4, "duration": 1.0},
         "scene": {"rt60_range": [0.3, 0.4], "dim_range": [4, 6]}}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    out = root / "data"
    assert main(["make-dataset", "--config", str(cfg), "--out", str(out)]) == 0
    return root, str(out / "manifest.json")


def test_usage_errors_exit_2(capsys):
    assert main(["separate", "--bogus"]) == 2
    assert main(["nonsense"]) == 2
    assert main([]) == 2
    assert main(["separate", "--manifest", "m", "--out", "o", "--bf", "mvdr"]) == 2


def test_runtime_failure_exits_1(tmp_path, capsys):
    assert main(["eval", "--records", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "r")]) == 1
    assert "error" in capsys.readouterr().err


def test_empty_manifest(tmp_path):
    path = make_dataset({"n_scenes": 0, "seed": 1}, str(tmp_path / "empty"))
    m = load_manifest(path)
    assert m["scenes"] == [] and m["version"] == 1


def test_manifest_is_reproducible(dataset, tmp_path):
    root, manifest = dataset
    again = make_dataset(SMALL, str(tmp_path / "again"))
    with open(manifest, "rb") as a, open(again, "rb") as b:
        assert a.read() == b.read()
    base = os.path.dirname(manifest)
    for name in ("scene0000/mixture.wav", "scene0001/image1.wav", "scene0000/truth.json"):
        with open(os.path.join(base, name), "rb") as a, \
                open(os.path.join(tmp_path / "again", name), "rb") as b:
            assert a.read() == b.read()


def test_parallel_rendering_matches_serial(dataset, tmp_path):
    _, manifest = dataset
    par = make_dataset(SMALL, str(tmp_path / "par"), jobs=2)
    with open(manifest, "rb") as a, open(par, "rb") as b:
        assert a.read() == b.read()


def test_loaded_scene_is_additive(dataset):
    _, manifest = dataset
    m = load_manifest(manifest)
    for entry in m["scenes"]:
        mix, geom, truth, doas = load_scene(m, manifest, entry)
        assert truth.additivity_holds()
        assert len(doas) == 2 and geom.n_mics == 4


def test_gev_and_r1_share_masks(dataset):
    _, manifest = dataset
    m = load_manifest(manifest)
    mix, geom, truth, doas = load_scene(m, manifest, m["scenes"][0])
    res = {bf: separate(mix, geom, PipelineConfig(bf=bf), truth=truth,
                        true_doas=doas) for bf in ("gev", "r1")}
    for a, b in zip(res["gev"].masks, res["r1"].masks):
        assert np.array_equal(a.values, b.values)
    assert not np.array_equal(res["gev"].weights[0].w, res["r1"].weights[0].w)


def test_localize_prints_json(dataset, capsys):
    _, manifest = dataset
    assert main(["localize", "--manifest", manifest, "--scene", "scene0000",
                 "--spectrum"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["peaks"]) == 2 and len(out["selected"]) == 2
    assert len(out["spectrum"]) == 181


def test_separate_and_eval(dataset, tmp_path, capsys):
    _, manifest = dataset
    out = tmp_path / "sep"
    assert main(["separate", "--manifest", manifest, "--out", str(out),
                 "--mask", "oracle", "--bf", "r1", "--doa", "gcc"]) == 0
    est = read_wav(str(out / "scene0001" / "source1.wav"))
    assert est.n_channels == 1 and est.sample_rate == 16000
    records = out / "records.jsonl"
    lines = records.read_text().splitlines()
    assert len(lines) == 4
    assert json.loads(lines[0])["doa_mode"] == "gcc"
    assert main(["eval", "--records", str(records), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep.csv").read_text().startswith("axis,bucket,bf")
    assert "SI-SDR improvement" in (tmp_path / "rep.txt").read_text()


def test_separate_single_scene_and_unknown_scene(dataset, tmp_path):
    _, manifest = dataset
    assert main(["separate", "--manifest", manifest, "--scene", "scene0001",
                 "--out", str(tmp_path / "one")]) == 0
    assert not (tmp_path / "one" / "scene0000").exists()
    assert main(["separate", "--manifest", manifest, "--scene", "nope",
                 "--out", str(tmp_path / "x")]) == 1


def test_truth_required_for_oracle_paths(dataset, tmp_path):
    _, manifest = dataset
    m = load_manifest(manifest)
    for e in m["scenes"]:
        e.pop("truth"), e.pop("images"), e.pop("noise")
    stripped = tmp_path / "manifest.json"
    stripped.write_text(json.dumps(m))
    env = os.environ.copy()
    os.environ["LOCSEP_DATA_ROOT"] = os.path.dirname(manifest)
    try:
        assert main(["separate", "--manifest", str(stripped), "--out",
                     str(tmp_path / "o"), "--doa", "truth"]) == 1
        assert main(["separate", "--manifest", str(stripped), "--out",
                     str(tmp_path / "o"), "--doa", "gcc", "--mask", "oracle"]) == 1
        records = separate_manifest(str(stripped), PipelineConfig(doa="gcc"))
        assert all(r.si_sdr_in is None and r.doa_true is None for r in records)
    finally:
        os.environ.clear()
        os.environ.update(env)


def test_external_mask_files(dataset, tmp_path):
    from locsep.audio import stft
    from locsep.front import Mask, save_mask
    _, manifest = dataset
    m = load_manifest(manifest)
    mix, _, _, _ = load_scene(m, manifest, m["scenes"][0])
    spec = stft(mix)
    for j in range(2):
        save_mask(str(tmp_path / f"scene0000_{j}.mask"),
                  Mask(np.full((spec.n_frames, spec.n_freqs), 0.5)))
    template = str(tmp_path / "{scene}_{source}.mask")
    recs = separate_manifest(manifest, PipelineConfig(mask="file:" + template),
                             ["scene0000"])
    assert [r.mask_kind for r in recs] == ["file", "file"]


def test_bad_manifest_is_rejected(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"version": 1}))
    assert main(["separate", "--manifest", str(bad), "--out", str(tmp_path)]) == 1

"""Command line entry point: ``locsep {make-dataset,localize,separate,eval,pipeline}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import __version__
from .evaluation import bucket_report, read_records, write_records
from .localization import localize
from .pipeline import (PipelineConfig, load_manifest, load_scene,
                       make_dataset, separate_manifest)

log = logging.getLogger("locsep")


def _load_config(path):
    if path is None:
        return {}
    with open(path) as f:
        return json.load(f)


def _pipeline_config(manifest, args):
    base = PipelineConfig.from_dict(manifest.get("pipeline", {}))
    overrides = {k: getattr(args, k) for k in
                 ("doa", "mask", "bf", "mu", "alpha", "stats")
                 if getattr(args, k, None) is not None}
    return replace(base, **overrides)


def cmd_make_dataset(args):
    cfg = _load_config(args.config)
    if args.n_scenes is not None:
        cfg["n_scenes"] = args.n_scenes
    if args.seed is not None:
        cfg["seed"] = args.seed
    path = make_dataset(cfg, args.out, jobs=args.jobs)
    print(path)


def cmd_localize(args):
    manifest = load_manifest(args.manifest)
    entry = _entry(manifest, args.scene)
    mixture, geom, _, true_doas = load_scene(manifest, args.manifest, entry)
    pair = tuple(args.pair) if args.pair else None
    spec, peaks, selected = localize(mixture, geom, k=args.k, pair=pair,
                                     true_doas=true_doas)
    out = {"peaks": peaks.doas, "scores": peaks.scores, "short": peaks.short,
           "selected": selected}
    if args.spectrum:
        out["grid"] = spec.grid.tolist()
        out["spectrum"] = spec.scores.tolist()
    print(json.dumps(out, sort_keys=True))


def _entry(manifest, scene_id):
    for e in manifest["scenes"]:
        if e["id"] == scene_id:
            return e
    raise KeyError(f"scene {scene_id!r} not in manifest")


def cmd_separate(args):
    manifest = load_manifest(args.manifest)
    config = _pipeline_config(manifest, args)
    ids = None if args.scene == "all" else [args.scene]
    records = separate_manifest(args.manifest, config, ids, args.out, args.jobs)
    path = args.records or os.path.join(args.out, "records.jsonl")
    write_records(path, records)
    print(path)


def _write_report(records, prefix):
    report = bucket_report(records)
    with open(prefix + ".csv", "w") as f:
        f.write(report.to_csv())
    text = report.to_text()
    with open(prefix + ".txt", "w") as f:
        f.write(text)
    return text


def cmd_eval(args):
    records = read_records(args.records)
    print(_write_report(records, args.out))


def cmd_pipeline(args):
    if args.manifest is None and args.config is None:
        raise SystemExit("pipeline: give --config (to build a dataset) or --manifest")
    os.makedirs(args.out, exist_ok=True)
    manifest_path = args.manifest
    if manifest_path is None:
        manifest_path = make_dataset(_load_config(args.config),
                                     os.path.join(args.out, "dataset"), args.jobs)
    manifest = load_manifest(manifest_path)
    config = _pipeline_config(manifest, args)
    sep_dir = os.path.join(args.out, "separated")
    records = separate_manifest(manifest_path, config, None, sep_dir, args.jobs)
    write_records(os.path.join(args.out, "records.jsonl"), records)
    print(_write_report(records, os.path.join(args.out, "report")))


def _add_pipeline_flags(p):
    p.add_argument("--doa", choices=["truth", "gcc"])
    p.add_argument("--mask", help="oracle | heuristic | file:PATH "
                   "(PATH may contain {scene} and {source})")
    p.add_argument("--bf", choices=["gev", "sdw", "r1"])
    p.add_argument("--mu", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--stats", choices=["batch", "recursive"])
    p.add_argument("--jobs", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="locsep", description="Location-guided multichannel speech separation.",
        epilog="Exit codes: 0 success, 1 runtime failure, 2 usage error.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="render seeded scenes and a manifest")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-scenes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("localize", help="GCC-PHAT angular spectrum and peaks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--pair", type=int, nargs=2)
    p.add_argument("--spectrum", action="store_true")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("separate", help="run the separation pipeline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scene", default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--records")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("eval", help="bucketed SI-SDR report")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True, help="output prefix (.csv/.txt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="make-dataset, separate and eval")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse: 2 on usage errors, 0 for --help
        return e.code if isinstance(e.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SystemExit as e:
        if isinstance(e.code, str):
            print(e.code, file=sys.stderr)
            return 2
        raise
    except Exception as e:
        log.debug("failure", exc_info=True)
        print(f"locsep: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

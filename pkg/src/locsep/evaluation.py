"""Separation metrics and bucketed reports.

Reports group SI-SDR improvements by DOA difference and by per-source SIR,
with left-closed, right-open bucket boundaries.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .audio import TimeSignal
from .errors import ConfigurationError, EmptyInputError

__all__ = ["EvalRecord", "si_sdr", "doa_error", "bucket_report", "Report",
           "DOA_BUCKETS", "SIR_BUCKETS", "read_records", "write_records"]

SDR_CAP = 100.0
EMPTY = "—"

# (label, lower inclusive, upper exclusive)
DOA_BUCKETS = (("<10", -math.inf, 10.0), ("10-25", 10.0, 25.0),
               ("25-50", 25.0, 50.0), (">50", 50.0, math.inf))
SIR_BUCKETS = (("<-5", -math.inf, -5.0), ("-5-0", -5.0, 0.0),
               ("0-5", 0.0, 5.0), ("5-10", 5.0, 10.0), (">10", 10.0, math.inf))


@dataclass
class EvalRecord:
    scene_id: str
    source: int
    si_sdr_in: Optional[float]
    si_sdr_out: Optional[float]
    doa_true: Optional[float]
    doa_est: float
    delta_doa: Optional[float]
    sir_db: Optional[float]
    snr_db: Optional[float]
    bf_kind: str
    mask_kind: str
    doa_mode: str = "truth"
    extra: dict = field(default_factory=dict)

    @property
    def improvement(self):
        if self.si_sdr_in is None or self.si_sdr_out is None:
            return None
        return self.si_sdr_out - self.si_sdr_in

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _channel(x):
    if isinstance(x, TimeSignal):
        return x.samples[0].astype(float)
    return np.asarray(x, dtype=float).ravel()


def si_sdr(est, ref):
    """Scale-invariant SDR in dB, clipped to +-100 dB."""
    e, r = _channel(est), _channel(ref)
    if e.shape != r.shape:
        raise ConfigurationError(f"length mismatch {e.shape} vs {r.shape}")
    rr = np.dot(r, r)
    if rr == 0:
        raise EmptyInputError("reference signal is all zeros")
    target = (np.dot(e, r) / rr) * r
    noise = e - target
    tt, nn = np.dot(target, target), np.dot(noise, noise)
    if tt == 0:  # silent or orthogonal estimate
        return -SDR_CAP
    if nn <= tt * 10 ** (-SDR_CAP / 10):
        return SDR_CAP
    if tt <= nn * 10 ** (-SDR_CAP / 10):
        return -SDR_CAP
    return float(10 * np.log10(tt / nn))


def doa_error(true_doa, est_doa):
    return abs(float(true_doa) - float(est_doa))


def _bucket(value, buckets):
    for label, lo, hi in buckets:
        if lo <= value < hi:
            return label
    return None


@dataclass
class Report:
    # rows: {(axis, bucket, bf_kind): {"n", "mean", "median"}}
    cells: dict
    overall: dict  # bf_kind -> {"n", "mean", "median"}
    bf_kinds: list

    def mean(self, axis, bucket, bf_kind):
        c = self.cells.get((axis, bucket, bf_kind))
        return None if c is None else c["mean"]

    def to_dict(self):
        rows = [{"axis": a, "bucket": b, "bf": k, **v}
                for (a, b, k), v in sorted(self.cells.items())]
        return {"cells": rows, "overall": self.overall}

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["axis", "bucket", "bf", "n", "mean_improvement_db",
                     "median_improvement_db"])
        for axis, buckets in (("delta_doa", DOA_BUCKETS), ("sir", SIR_BUCKETS)):
            for label, _, _ in buckets:
                for k in self.bf_kinds:
                    c = self.cells.get((axis, label, k))
                    if c is None:
                        wr.writerow([axis, label, k, 0, "", ""])
                    else:
                        wr.writerow([axis, label, k, c["n"], f"{c['mean']:.4f}",
                                     f"{c['median']:.4f}"])
        for k in self.bf_kinds:
            c = self.overall[k]
            wr.writerow(["all", "average", k, c["n"], f"{c['mean']:.4f}",
                         f"{c['median']:.4f}"])
        return buf.getvalue()

    def to_text(self):
        lines = []
        for title, axis, buckets in (
                ("SI-SDR improvement (dB) by DOA difference (deg)", "delta_doa", DOA_BUCKETS),
                ("SI-SDR improvement (dB) by SIR (dB)", "sir", SIR_BUCKETS)):
            labels = [b[0] for b in buckets] + ["average"]
            lines.append(title)
            lines.append(f"{'bf':<8}" + "".join(f"{lab:>10}" for lab in labels))
            for k in self.bf_kinds:
                vals = []
                for lab, _, _ in buckets:
                    c = self.cells.get((axis, lab, k))
                    vals.append(EMPTY if c is None else f"{c['mean']:.2f}")
                vals.append(f"{self.overall[k]['mean']:.2f}")
                lines.append(f"{k:<8}" + "".join(f"{v:>10}" for v in vals))
            lines.append("")
        return "\n".join(lines)


def _summary(vals):
    a = np.asarray(vals, dtype=float)
    return {"n": int(a.size), "mean": float(a.mean()), "median": float(np.median(a))}


def bucket_report(records):
    """Mean/median SI-SDR improvement per (bucket x beamformer).

    Records without an improvement (no ground truth) are skipped.
    """
    groups, overall = {}, {}
    kinds = []
    for r in records:
        imp = r.improvement
        if imp is None:
            continue
        if r.bf_kind not in kinds:
            kinds.append(r.bf_kind)
        overall.setdefault(r.bf_kind, []).append(imp)
        if r.delta_doa is not None:
            lab = _bucket(r.delta_doa, DOA_BUCKETS)
            groups.setdefault(("delta_doa", lab, r.bf_kind), []).append(imp)
        if r.sir_db is not None:
            lab = _bucket(r.sir_db, SIR_BUCKETS)
            groups.setdefault(("sir", lab, r.bf_kind), []).append(imp)
    return Report({k: _summary(v) for k, v in groups.items()},
                  {k: _summary(v) for k, v in overall.items()}, kinds)


def write_records(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def read_records(path):
    with open(path) as f:
        return [EvalRecord.from_dict(json.loads(line)) for line in f if line.strip()]

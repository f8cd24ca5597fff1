"""Report artifacts: deterministic JSON/CSV writers, the run report schema,
and the checksum manifest.

Determinism rules: JSON is written with sorted keys and a trailing newline;
floats go through repr via json's default float handling; wall-clock numbers
live in their own file (timing.json) so every other artifact is byte-stable
for a fixed config and seed. The manifest hashes every emitted file except
itself and timing.json.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1

# volatile by nature; excluded from the manifest so checksums are reproducible
_UNMANIFESTED = ("manifest.json", "timing.json")


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _fmt(x) -> str:
    """Full-precision, locale-independent cell for floats."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@dataclass
class RunReport:
    seed: int
    stages: tuple[str, ...]
    sections: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "stages": list(self.stages),
            "sections": to_jsonable(self.sections),
        }
        if self.failed_stage is not None:
            out["failed_stage"] = self.failed_stage
            out["error"] = self.error
        if include_timing:
            out["timing"] = to_jsonable(self.timing)
        return out


def write_run_report(report: RunReport, out_dir) -> None:
    dump_json(report.to_dict(include_timing=False),
              os.path.join(out_dir, "run_report.json"))
    dump_json({"wall_clock_seconds": to_jsonable(report.timing)},
              os.path.join(out_dir, "timing.json"))


def write_profile_csv(profile_dict: dict, path) -> None:
    write_csv_rows(path, ["statistic", "value"],
                   [(k, _fmt(v)) for k, v in sorted(profile_dict.items())])


def write_cast_weights_csv(solution, path) -> None:
    rows = [(r, _fmt(solution.weights[r]), _fmt(solution.weight_variance[r]),
             solution.fs, solution.converged)
            for r in solution.rankers]
    write_csv_rows(path, ["ranker", "weight", "weight_variance",
                          "selected_count", "converged"], rows)


def write_rfe_curve_csv(trace, path) -> None:
    rows = [(len(st.remaining),
             "" if st.eliminated is None else st.eliminated,
             _fmt(st.cv_metric))
            for st in trace.steps]
    write_csv_rows(path, ["n_features", "eliminated_feature", "cv_metric"], rows)


def write_study_trace_jsonl(arm_results, path) -> None:
    with open(path, "w") as fh:
        for arm in arm_results:
            for rec in arm.trace.records:
                payload = json.loads(rec.to_json())
                payload["arm"] = arm.name
                fh.write(json.dumps(payload, sort_keys=True) + "\n")


def write_best_so_far_csv(arm_results, path) -> None:
    rows = []
    for arm in arm_results:
        for trial_id, best in arm.trace.best_so_far():
            rows.append((arm.name, trial_id,
                         "" if best == -np.inf else _fmt(best)))
    write_csv_rows(path, ["arm", "trial_id", "best_metric"], rows)


def write_importance_csv(entries, path) -> None:
    """entries: iterable of (feature_id, feature_label, importance)."""
    write_csv_rows(path, ["feature_id", "feature_label", "importance"],
                   [(i, lbl, _fmt(v)) for i, lbl, v in entries])


def write_partial_dependence_csv(grid, response, path) -> None:
    write_csv_rows(path, ["grid_value", "mean_probability"],
                   [(_fmt(g), _fmt(r)) for g, r in zip(grid, response)])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir) -> dict:
    """Hash every artifact under out_dir (recursively) except the manifest
    itself and the timing file; returns the manifest mapping."""
    entries = {}
    for root, _dirs, files in os.walk(out_dir):
        for name in sorted(files):
            rel = os.path.relpath(os.path.join(root, name), out_dir)
            if rel.replace(os.sep, "/") in _UNMANIFESTED:
                continue
            entries[rel.replace(os.sep, "/")] = sha256_file(os.path.join(root, name))
    dump_json({"files": entries}, os.path.join(out_dir, "manifest.json"))
    return entries

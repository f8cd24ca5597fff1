"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 stage failure.
Subcommands that take a config run the pipeline up to their stage; `report`
summarizes an existing run directory and re-verifies its checksum manifest.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys

import click

from .errors import ConfigError, DataError, StageError
from .pipeline.config import (PipelineConfig, STAGES, config_to_dict,
                              load_config)
from .pipeline.reports import sha256_file
from .pipeline.runner import run_pipeline

_EXIT_CODES = ((ConfigError, 2), (DataError, 3), (StageError, 4))


def _run(func):
    try:
        func()
    except tuple(t for t, _ in _EXIT_CODES) as exc:
        for cls, code in _EXIT_CODES:
            if isinstance(exc, cls):
                click.echo(f"error: {exc}", err=True)
                sys.exit(code)
    sys.exit(0)


def _common_options(f):
    f = click.option("--seed", type=int, default=None,
                     help="Override the config's root seed.")(f)
    f = click.option("--jobs", type=int, default=None,
                     help="Worker-count hint (stages are sequential).")(f)
    f = click.option("--out", type=click.Path(), default=None,
                     help="Override the output directory.")(f)
    return f


def _load(config_path, seed, jobs, out, upto: str | None) -> PipelineConfig:
    cfg = load_config(config_path) if config_path else PipelineConfig()
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if jobs is not None:
        overrides["jobs"] = jobs
    if out is not None:
        overrides["out"] = out
    if upto is not None:
        keep = STAGES[: STAGES.index(upto) + 1]
        overrides["stages"] = tuple(s for s in cfg.stages if s in keep)
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


@click.group()
def main():
    """Yield-enhancement AutoML: imputation, mass feature extraction,
    weighted-ensemble feature selection, anomaly screening, and an automated
    loss-ablation study with multi-fidelity tuning."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), required=True,
              help="JSON run configuration.")
@_common_options
def run(config_path, seed, jobs, out):
    """Run every enabled stage of the pipeline."""
    def body():
        cfg = _load(config_path, seed, jobs, out, upto=None)
        report = run_pipeline(cfg)
        click.echo(f"completed stages: {', '.join(report.stages)}")
        click.echo(f"artifacts in: {cfg.out}")
    _run(body)


def _stage_command(name: str, upto: str, help_text: str):
    @main.command(name=name, help=help_text)
    @click.option("--config", "config_path", type=click.Path(), default=None,
                  help="JSON run configuration (defaults apply when omitted).")
    @_common_options
    def cmd(config_path, seed, jobs, out):
        def body():
            cfg = _load(config_path, seed, jobs, out, upto=upto)
            report = run_pipeline(cfg)
            section = report.sections.get(upto, {})
            click.echo(json.dumps({upto: section}, sort_keys=True, default=str,
                                  indent=2))
        _run(body)
    return cmd


_stage_command("extract", "extract",
               "Run ingest → impute → extract and print the feature counts.")
_stage_command("select", "select",
               "Run through feature selection and print the chosen subset.")
_stage_command("detect", "anomaly",
               "Run through anomaly screening and print the level counts.")
_stage_command("classify", "classify",
               "Run through the ablation study and print per-arm results.")


@main.command()
@click.argument("data_path", type=click.Path())
@click.argument("labels_path", type=click.Path(), required=False)
@click.option("--format", "fmt", type=click.Choice(["secom", "csv"]),
              default="secom", show_default=True)
@_common_options
def profile(data_path, labels_path, fmt, seed, jobs, out):
    """Profile a raw dataset (rows, columns, failures, missing, constants)."""
    def body():
        from .data_model import load_csv, load_secom
        from .data_model import profile as profile_data
        if fmt == "secom":
            if not labels_path:
                raise ConfigError("secom format needs DATA_PATH and LABELS_PATH")
            d = load_secom(data_path, labels_path)
        else:
            d = load_csv(data_path)
        prof = profile_data(d)
        click.echo(json.dumps(prof.as_dict(), sort_keys=True, indent=2))
    _run(body)


@main.command()
@click.argument("run_dir", type=click.Path())
@_common_options
def report(run_dir, seed, jobs, out):
    """Summarize an existing run directory and verify its manifest."""
    def body():
        report_path = os.path.join(run_dir, "run_report.json")
        manifest_path = os.path.join(run_dir, "manifest.json")
        if not os.path.exists(report_path):
            raise DataError(f"no run report under {run_dir!r}")
        with open(report_path) as fh:
            payload = json.load(fh)
        click.echo(f"schema_version: {payload['schema_version']}")
        click.echo(f"seed: {payload['seed']}")
        click.echo(f"stages: {', '.join(payload['stages'])}")
        if payload.get("failed_stage"):
            click.echo(f"FAILED at {payload['failed_stage']}: {payload['error']}")
        for stage, section in sorted(payload.get("sections", {}).items()):
            keys = ", ".join(sorted(section)) if isinstance(section, dict) else ""
            click.echo(f"  [{stage}] {keys}")
        if os.path.exists(manifest_path):
            with open(manifest_path) as fh:
                manifest = json.load(fh)["files"]
            bad = [rel for rel, digest in manifest.items()
                   if sha256_file(os.path.join(run_dir, rel)) != digest]
            if bad:
                raise DataError(f"manifest mismatch for: {', '.join(sorted(bad))}")
            click.echo(f"manifest: {len(manifest)} files verified")
    _run(body)


if __name__ == "__main__":
    main()

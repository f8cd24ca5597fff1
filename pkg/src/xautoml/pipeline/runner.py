"""Stage orchestration: ingest → impute → extract → select → anomaly →
classify → report, with deterministic per-stage seeds, checkpoint artifacts
in the output directory, and a partial report on any stage failure.

Seed fan-out: each stage derives its own 32-bit seed as
sha256(f"{root_seed}:{stage label}")[:4], so adding or removing a stage never
shifts another stage's randomness.
"""

from __future__ import annotations

import os
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from .. import synthetic
from ..anomaly import (DetectorPortfolio, DetectorSpec, Thresholds,
                       abnormal_factor, adaptive_thresholds, classify_levels,
                       default_portfolio, fit_predict_portfolio,
                       write_report_csv, write_report_summary)
from ..cast import CastConfig, cast_search, rfe
from ..data_model import (Dataset, infer_process_definition, load_csv,
                          load_secom, profile)
from ..errors import ConfigError, DataError, StageError, XautomlError
from ..feature_factory import (FeatureConfig, FeatureMatrix,
                               expected_feature_count, extract_all)
from ..imputation import ImputerSpec, fit_impute
from ..learners.gam import GamModel
from ..learners.gbt import feature_importance, partial_dependence
from . import reports
from .ablation import AblationPlan, fit_arm, run_ablation
from .config import PipelineConfig, STAGES, config_to_dict
from ..seeding import derive_seed

_PD_TOP_FEATURES = 5


@dataclass
class PipelineState:
    """Everything the stages hand to each other in memory."""
    raw: Dataset | None = None
    imputed: Dataset | None = None
    fm: FeatureMatrix | None = None
    cast_solution: object = None
    rfe_trace: object = None
    selected: tuple[int, ...] | None = None
    anomaly_report: object = None
    keep_rows: np.ndarray | None = None
    arm_results: tuple | None = None
    winner_name: str | None = None


def run_pipeline(cfg: PipelineConfig) -> reports.RunReport:
    """Execute the enabled stages in canonical order and write all report
    artifacts to cfg.out. Any stage failure still writes a partial report
    before the error propagates."""
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)
    # echo the effective config, minus the output path so artifact bytes do
    # not depend on where the run is written
    echo = {k: v for k, v in config_to_dict(cfg).items() if k != "out"}
    reports.dump_json(echo, os.path.join(out_dir, "config.json"))

    state = PipelineState()
    report = reports.RunReport(seed=cfg.seed, stages=tuple(
        s for s in STAGES if cfg.enabled(s)))
    handlers = {
        "ingest": _stage_ingest,
        "impute": _stage_impute,
        "extract": _stage_extract,
        "select": _stage_select,
        "anomaly": _stage_anomaly,
        "classify": _stage_classify,
        "report": _stage_report,
    }
    for stage in report.stages:
        start = time.perf_counter()
        try:
            handlers[stage](cfg, state, report, out_dir)
        except Exception as exc:
            report.failed_stage = stage
            report.error = f"{type(exc).__name__}: {exc}"
            report.timing[stage] = time.perf_counter() - start
            reports.write_run_report(report, out_dir)
            reports.write_manifest(out_dir)
            if isinstance(exc, (ConfigError, DataError)):
                raise
            if isinstance(exc, StageError):
                raise
            raise StageError(stage, "".join(
                traceback.format_exception_only(type(exc), exc)).strip())
        report.timing[stage] = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _stage_ingest(cfg, state, report, out_dir):
    kind = cfg.data.kind
    if kind == "mini":
        state.raw = synthetic.make_mini_dataset(
            seed=derive_seed(cfg.seed, "mini-data"))
    elif kind == "csv":
        state.raw = load_csv(cfg.data.values_path)
    else:
        state.raw = load_secom(cfg.data.values_path, cfg.data.labels_path)
    prof = profile(state.raw)
    reports.write_profile_csv(prof.as_dict(), os.path.join(out_dir, "profile.csv"))
    report.sections["ingest"] = {"data_kind": kind, "profile": prof.as_dict()}


def _stage_impute(cfg, state, report, out_dir):
    spec = ImputerSpec(method=cfg.imputer.method,
                       k_neighbors=cfg.imputer.k_neighbors)
    result = fit_impute(state.raw, spec)
    state.imputed = result.dataset
    np.save(os.path.join(out_dir, "imputed.npy"), result.dataset.values)
    report.sections["impute"] = {
        "imputer_id": spec.imputer_id,
        "dropped_columns": list(result.dropped_column_ids),
        "warnings": list(result.warnings),
    }


def _stage_extract(cfg, state, report, out_dir):
    f = cfg.features
    fcfg = FeatureConfig(
        window=f.window, filter_width=f.filter_width,
        llt_s_values=tuple(float(s) for s in f.llt_s_values),
        llt_dt=f.llt_dt, pca_threshold=f.pca_threshold,
        include_raw_series=f.include_raw_series,
        include_function_series=f.include_function_series,
        include_raw_summaries=f.include_raw_summaries,
    )
    proc = infer_process_definition(state.raw)
    fm = extract_all(state.imputed, fcfg, proc)
    state.fm = fm
    fm.save(os.path.join(out_dir, "features.npy"),
            os.path.join(out_dir, "features_meta.json"))
    report.sections["extract"] = {
        "n_features": fm.n_features,
        "n_series_features": fm.n_series,
        "n_scalar_features": fm.n_features - fm.n_series,
        "expected_count": expected_feature_count(state.imputed, fcfg, proc),
        "n_groups": len(fm.groups),
    }


def _stage_select(cfg, state, report, out_dir):
    c = cfg.cast
    inner = _inner_spec(c)
    cast_cfg = CastConfig(
        rankers=tuple(c.rankers), m=c.m, iterations=c.iterations,
        fs_range=(min(c.fs_range[0], state.fm.n_features),
                  min(c.fs_range[1], state.fm.n_features)),
        cv_folds=c.cv_folds, metric=c.metric, select_k=c.select_k,
        inner_spec=inner, seed=derive_seed(cfg.seed, "cast"),
    )
    labels = state.imputed.labels
    solution = cast_search(state.fm, labels, cast_cfg)
    state.cast_solution = solution
    reports.write_cast_weights_csv(solution,
                                   os.path.join(out_dir, "cast_weights.csv"))
    selected = solution.selected_features
    if c.run_rfe and len(selected) >= 2:
        trace = rfe(state.fm, labels, selected, inner_spec=inner,
                    cv_folds=c.cv_folds, seed=derive_seed(cfg.seed, "rfe"),
                    metric=c.metric)
        state.rfe_trace = trace
        reports.write_rfe_curve_csv(trace, os.path.join(out_dir, "rfe_curve.csv"))
        selected = trace.best_subset
    state.selected = tuple(int(j) for j in selected)
    report.sections["select"] = {
        "weights": solution.weights,
        "selected_count_searched": solution.fs,
        "search_metric": solution.best_metric,
        "converged": solution.converged,
        "rfe_applied": state.rfe_trace is not None,
        "selected_features": list(state.selected),
        "selected_labels": state.fm.labels_for(state.selected),
    }


def _inner_spec(c):
    from ..learners.gbt import GbtSpec
    return GbtSpec(n_rounds=c.inner_rounds, max_depth=c.inner_depth)


def _selected_matrix(cfg, state) -> tuple[np.ndarray, tuple[int, ...]]:
    ids = state.selected if state.selected is not None else tuple(
        range(state.fm.n_features))
    return state.fm.take(list(ids)), ids


def _stage_anomaly(cfg, state, report, out_dir):
    a = cfg.anomaly
    X_sel, _ids = _selected_matrix(cfg, state)
    labels = state.imputed.labels
    seed = derive_seed(cfg.seed, "anomaly")
    if a.portfolio == "default":
        portfolio = default_portfolio(seed=seed)
    else:
        portfolio = DetectorPortfolio(tuple(
            DetectorSpec(str(e[0]), tuple(float(p) for p in e[1:]))
            for e in a.portfolio), seed=seed)
    tally = fit_predict_portfolio(X_sel, portfolio)
    a_f = abnormal_factor(tally, labels)
    notes: tuple[str, ...] = ()
    if a.adaptive:
        th, notes = adaptive_thresholds(a_f, labels, a.target_quantile)
    else:
        th = Thresholds(t_normal=a.t_normal, t_failure=a.t_failure)
    rep = classify_levels(a_f, labels, tally, th, assign_grades=a.grades)
    state.anomaly_report = rep
    write_report_csv(rep, os.path.join(out_dir, "anomaly.csv"))
    write_report_summary(rep, os.path.join(out_dir, "anomaly_summary.json"))
    if a.exclude:
        state.keep_rows = np.setdiff1d(np.arange(labels.shape[0]),
                                       np.array(rep.excluded_rows, dtype=int))
    report.sections["anomaly"] = {
        **rep.summary(),
        "adaptive": a.adaptive,
        "adaptive_notes": list(notes),
        "rows_excluded_from_training": bool(a.exclude),
    }


def _stage_classify(cfg, state, report, out_dir):
    cl = cfg.classify
    X_sel, ids = _selected_matrix(cfg, state)
    labels = state.imputed.labels
    rows = (state.keep_rows if state.keep_rows is not None
            else np.arange(labels.shape[0]))
    X_cls, y_cls = X_sel[rows], labels[rows]
    plan = AblationPlan(
        arms=tuple(cl.arms), optimizer=cl.optimizer, n_trials=cl.n_trials,
        R=cl.R, eta=cl.eta, n_passes=cl.n_passes, cv_folds=cl.cv_folds,
        metric=cl.metric, seed=derive_seed(cfg.seed, "classify"),
        rounds_range=tuple(cl.rounds_range),
    )
    results = run_ablation(plan, X_cls, y_cls)
    state.arm_results = results
    winner = max(results, key=lambda r: r.best_metric)
    state.winner_name = winner.name

    reports.write_study_trace_jsonl(results,
                                    os.path.join(out_dir, "study_trace.jsonl"))
    reports.write_best_so_far_csv(results,
                                  os.path.join(out_dir, "best_so_far.csv"))

    fidelity = cl.optimizer in ("hyperband", "bohb")
    model = fit_arm(winner.name, winner.best_config, X_cls, y_cls,
                    int(plan.R) if fidelity else None)
    _export_explanations(model, X_cls, ids, state.fm, out_dir)

    report.sections["classify"] = {
        "arms": [{
            "name": r.name,
            "best_metric": r.best_metric,
            "best_config": r.best_config,
            "delta_vs_baseline": r.delta_vs_baseline,
            "n_trials": len(r.trace.records),
            "total_budget": r.trace.total_budget(),
        } for r in results],
        "winner": winner.name,
        "n_training_rows": int(rows.shape[0]),
    }


def _export_explanations(model, X_cls, ids, fm, out_dir):
    """importance.csv over the model's feature columns (mapped back to
    global feature ids) and partial-dependence curves for the top ones."""
    if isinstance(model, GamModel):
        imp = {j: v for j, v in enumerate(model.shape_total_variation())}
    else:
        imp = feature_importance(model)
    order = sorted(range(len(ids)), key=lambda j: (-imp.get(j, 0.0), j))
    entries = [(int(ids[j]), fm.labels_for([ids[j]])[0], imp.get(j, 0.0))
               for j in order]
    reports.write_importance_csv(entries, os.path.join(out_dir, "importance.csv"))

    pd_dir = os.path.join(out_dir, "partial_dependence")
    os.makedirs(pd_dir, exist_ok=True)
    for j in order[:_PD_TOP_FEATURES]:
        grid, response = partial_dependence(model, X_cls, j)
        reports.write_partial_dependence_csv(
            grid, response, os.path.join(pd_dir, f"pd_{int(ids[j]):05d}.csv"))


def _stage_report(cfg, state, report, out_dir):
    reports.write_run_report(report, out_dir)
    reports.write_manifest(out_dir)

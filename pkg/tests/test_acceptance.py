"""End-to-end acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v`` for one pass/fail line per
criterion (add ``-s`` to also see the timed PASS summaries). Criteria 1-2
profile the public semiconductor benchmark when SECOM_DATA_DIR points at a
directory holding secom.data and secom_labels.data; otherwise they run on the
bundled deterministic twin with the identical published profile.
"""

import math
import os
import time

import numpy as np
import pytest

from xautoml import synthetic
from xautoml.anomaly import (Thresholds, VoteTally, abnormal_factor,
                             classify_levels)
from xautoml.cast import CastConfig, cast_search, rfe
from xautoml.data_model import (infer_process_definition, load_secom, profile)
from xautoml.feature_factory import (FeatureConfig, apply_function,
                                     expected_feature_count, extract_all)
from xautoml.hpo.hyperband import hyperband_schedule
from xautoml.hpo.space import Dimension, SearchSpace
from xautoml.hpo.study import (StudyTrace, TrialRecord, first_hit_iteration,
                               hp_importance, run_study)
from xautoml.imputation import ImputerSpec, fit_impute
from xautoml.learners.gbt import GbtSpec, fit_gbt
from xautoml.learners.losses import (FocalLossParams, LossSpec,
                                     loss_value_grad_hess)
from xautoml.pipeline.ablation import AblationPlan, run_ablation
from xautoml.pipeline.config import config_from_dict
from xautoml.pipeline.reports import sha256_file
from xautoml.pipeline.runner import run_pipeline
from xautoml.synthetic import make_imbalanced


def _finish(num: int, desc: str, start: float, budget: float) -> None:
    elapsed = time.perf_counter() - start
    assert elapsed < budget, (
        f"criterion {num}: took {elapsed:.1f}s, budget {budget:.0f}s")
    print(f"\nACCEPTANCE {num:02d} {desc}: PASS ({elapsed:.1f}s)")


def _benchmark_dataset():
    data_dir = os.environ.get("SECOM_DATA_DIR")
    if data_dir:
        return load_secom(os.path.join(data_dir, "secom.data"),
                          os.path.join(data_dir, "secom_labels.data"))
    return synthetic.make_benchmark_twin()


def test_acceptance_01_benchmark_profile_is_exact():
    start = time.perf_counter()
    prof = profile(_benchmark_dataset()).as_dict()
    assert prof["n_rows"] == 1567
    assert prof["n_cols"] == 590
    assert prof["n_failures"] == 104
    assert prof["n_missing_cells"] == 41951
    assert prof["n_constant_cols"] == 116
    _finish(1, "benchmark profile 1567/590/104/41951/116 exact", start, 10.0)


def test_acceptance_02_mass_feature_extraction_matches_closed_form():
    start = time.perf_counter()
    raw = _benchmark_dataset()
    imputed = fit_impute(raw, ImputerSpec(method="mean")).dataset
    proc = infer_process_definition(raw)
    cfg = FeatureConfig()
    fm = extract_all(imputed, cfg, proc)
    expected = expected_feature_count(imputed, cfg, proc)
    assert fm.n_features == expected
    assert fm.n_features > 10_000
    _finish(2, f"extracted {fm.n_features} features == closed form, >10k",
            start, 300.0)


def test_acceptance_03_focal_loss_reduction_and_derivatives():
    start = time.perf_counter()
    ce = LossSpec(name="cross_entropy")
    fl0 = LossSpec(name="focal", focal=FocalLossParams(alpha=1.0, gamma=0.0))
    z = np.linspace(-8.0, 8.0, 100)
    for label in (0.0, 1.0):
        y = np.full_like(z, label)
        v_ce, g_ce, h_ce = loss_value_grad_hess(ce, y, z)
        v_fl, g_fl, h_fl = loss_value_grad_hess(fl0, y, z)
        assert np.max(np.abs(v_ce - v_fl)) < 1e-12
        assert np.max(np.abs(g_ce - g_fl)) < 1e-12
        assert np.max(np.abs(h_ce - h_fl)) < 1e-12

    rng = np.random.default_rng(17)
    eps = 1e-5
    max_g = max_h = 0.0
    for _ in range(1000):
        y = float(rng.integers(0, 2))
        zz = float(rng.uniform(-6, 6))
        spec = LossSpec(name="focal", focal=FocalLossParams(
            alpha=float(rng.uniform(0.05, 1.0)),
            gamma=float(rng.uniform(0.0, 5.0))))

        def vg(at):
            v, g, _ = loss_value_grad_hess(spec, np.array([y]), np.array([at]),
                                           hess_floor=None)
            return v[0], g[0]

        _, g, h = loss_value_grad_hess(spec, np.array([y]), np.array([zz]),
                                       hess_floor=None)
        vp, gp = vg(zz + eps)
        vm, gm = vg(zz - eps)
        fd_g = (vp - vm) / (2 * eps)
        fd_h = (gp - gm) / (2 * eps)
        max_g = max(max_g, abs(g[0] - fd_g) / max(abs(fd_g), 1e-8))
        max_h = max(max_h, abs(h[0] - fd_h) / max(abs(fd_h), 1e-8))
    assert max_g < 1e-4
    assert max_h < 1e-4
    _finish(3, "focal(alpha=1,gamma=0) == CE @1e-12; derivatives @1e-4",
            start, 5.0)


def test_acceptance_04_tuned_focal_beats_ce_on_imbalanced_synthetic():
    start = time.perf_counter()
    wins = 0
    for s in range(10):
        X, y = make_imbalanced(n_rows=2000, n_cols=20, n_informative=5,
                               pos_frac=1 / 15, seed=s)
        plan = AblationPlan(arms=("gbt_ce", "gbt_fl"), optimizer="tpe",
                            n_trials=50, cv_folds=2, metric="f1", seed=s,
                            rounds_range=(30, 120))
        res = run_ablation(plan, X, y)
        wins += res[1].best_metric >= res[0].best_metric
    assert wins >= 7, f"focal won only {wins}/10 seeds"
    _finish(4, f"tuned focal F1 >= CE on {wins}/10 seeds (need 7)", start,
            900.0)


def test_acceptance_05_hyperband_schedule_and_survivors():
    start = time.perf_counter()
    sched = hyperband_schedule(81.0, 3)
    table = [(b.n_configs, b.initial_budget) for b in sched.brackets]
    assert table == [(81, 1.0), (34, 3.0), (15, 9.0), (8, 27.0), (5, 81.0)]

    space = SearchSpace((Dimension("x", "uniform", 0.0, 1.0),))
    trace = run_study(lambda c, b, s: c["x"], space, "hyperband", seed=123,
                      R=81.0, eta=3)
    idx = 0
    for bracket in sched.brackets:
        prev: list[float] | None = None
        for n_rung, budget in bracket.rungs:
            recs = trace.records[idx: idx + n_rung]
            idx += n_rung
            assert len(recs) == n_rung
            assert all(r.budget == budget for r in recs)
            metrics = [r.metric for r in recs]
            if prev is not None:
                top = sorted(prev, reverse=True)[:n_rung]
                assert sorted(metrics, reverse=True) == top
            prev = metrics
    assert idx == len(trace.records)
    _finish(5, "hyperband (R=81, eta=3) bracket table and top-1/eta survivors",
            start, 1.0)


def test_acceptance_06_bohb_reaches_target_before_random():
    start = time.perf_counter()
    space = SearchSpace((Dimension("x", "uniform", 0.0, 1.0),
                         Dimension("y", "uniform", 0.0, 1.0)))
    threshold = -1e-3     # within 1e-3 of the noiseless optimum at 0
    bohb_hits, random_hits = [], []
    for s in range(20):
        def objective(config, budget, _seed, noise_seed=s):
            return synthetic.quadratic_objective(config, budget,
                                                 noise_seed=noise_seed)

        bohb = run_study(objective, space, "bohb", seed=s, R=81.0, eta=3,
                         n_passes=3)
        bohb_hits.append(first_hit_iteration(bohb, threshold))
        n_random = int(bohb.total_budget() // 81.0)   # equal total budget
        rand = run_study(objective, space, "random", seed=1000 + s,
                         n_trials=n_random, R=81.0)
        random_hits.append(first_hit_iteration(rand, threshold))
    med_b, med_r = np.median(bohb_hits), np.median(random_hits)
    assert med_b < med_r, f"median iterations bohb={med_b} random={med_r}"
    _finish(6, f"BOHB median first-hit {med_b} < random {med_r} "
               "at equal budget", start, 300.0)


def test_acceptance_07_abnormal_factor_and_level_boundaries():
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    L = 12
    p = rng.integers(0, L + 1, size=1000)
    y = np.where(rng.uniform(size=1000) < 0.5, 1, -1)
    p[:20] = L          # force a block of N == 0 rows through the clamp
    tally = VoteTally(votes_p=p, votes_n=L - p, n_detectors=L)
    a = abnormal_factor(tally, y)
    for i in range(1000):
        n = L - p[i]
        direct = y[i] * (p[i] / n if n > 0 else float(L))
        assert a[i] == direct
    empty = VoteTally(votes_p=np.zeros(5, dtype=int),
                      votes_n=np.zeros(5, dtype=int), n_detectors=0)
    assert np.all(abnormal_factor(empty, np.ones(5)) == 0.0)

    eps = 1e-9
    labels = np.array([-1, -1, 1, 1, 1])
    factors = np.array([-5.0 - eps, -5.0, 0.1 - eps, 0.1, 1.0])
    boundary = VoteTally(votes_p=np.array([2, 2, 11, 11, 6]),
                         votes_n=np.array([10, 10, 1, 1, 6]), n_detectors=L)
    rep = classify_levels(factors, labels, boundary, Thresholds())
    assert rep.level == ("anomalous", "normal", "anomalous", "normal",
                         "undetermined")
    _finish(7, "abnormal factor == direct recomputation (1000 tallies) "
               "and boundary levels", start, 1.0)


def test_acceptance_08_selection_recovers_informative_features():
    start = time.perf_counter()
    recovered = []
    for s in range(5):
        X, y = make_imbalanced(n_rows=600, n_cols=55, n_informative=5,
                               pos_frac=0.2, seed=s)
        cfg = CastConfig(m=20, iterations=10, fs_range=(5, 12), cv_folds=3,
                         metric="f1",
                         inner_spec=GbtSpec(n_rounds=40, max_depth=3), seed=s)
        sol = cast_search(X, y, cfg)
        recovered.append(len(set(sol.selected_features) & set(range(5))))
    assert np.median(recovered) >= 4, f"recovered per seed: {recovered}"

    rng = np.random.default_rng(4)
    Xr = rng.normal(size=(300, 3))
    yr = np.where(Xr[:, 0] + 0.3 * rng.normal(size=300) > 0, 1, -1)
    trace = rfe(Xr, yr, [0, 1, 2],
                inner_spec=GbtSpec(n_rounds=30, max_depth=2), cv_folds=2,
                seed=0, permutations=2)
    assert trace.steps[-1].remaining == (0,)
    _finish(8, f"ensemble selection recovered median "
               f"{np.median(recovered):.0f}/5; RFE keeps the informative "
               "feature last", start, 600.0)


def _tree_digests(root) -> dict[str, str]:
    out = {}
    for r, _dirs, files in os.walk(root):
        for name in files:
            rel = os.path.relpath(os.path.join(r, name), root).replace(
                os.sep, "/")
            if rel == "timing.json":
                continue
            out[rel] = sha256_file(os.path.join(r, name))
    return out


def test_acceptance_09_same_seed_runs_are_byte_identical(tmp_path):
    start = time.perf_counter()

    def cfg_for(out):
        return config_from_dict({
            "seed": 3,
            "out": str(out),
            "data": {"kind": "mini"},
            "cast": {"m": 40, "iterations": 3, "fs_range": [3, 6],
                     "cv_folds": 2, "inner_rounds": 15, "inner_depth": 2,
                     "run_rfe": True},
            "classify": {"arms": ["gbt_ce", "gbt_fl"], "optimizer": "random",
                         "n_trials": 3, "cv_folds": 2,
                         "rounds_range": [10, 15]},
        })

    run_pipeline(cfg_for(tmp_path / "a"))
    run_pipeline(cfg_for(tmp_path / "b"))
    da, db = _tree_digests(tmp_path / "a"), _tree_digests(tmp_path / "b")
    assert da.keys() == db.keys()
    diff = sorted(k for k in da if da[k] != db[k])
    assert not diff, f"artifacts differ between same-seed runs: {diff}"
    # every stage left its artifact in the compared set
    for stage_file in ("profile.csv", "imputed.npy", "features.npy",
                       "cast_weights.csv", "anomaly.csv", "study_trace.jsonl",
                       "run_report.json", "manifest.json"):
        assert stage_file in da
    _finish(9, f"two seed-3 runs byte-identical across {len(da)} artifacts",
            start, 300.0)


def test_acceptance_10_numeric_sanity_of_core_transforms():
    start = time.perf_counter()
    rng = np.random.default_rng(31)

    # spectrum preserves energy
    x = rng.normal(size=257)
    x = x - x.mean()
    mags = apply_function(x, "fft")
    energy_spec = (mags[0] ** 2 + 2 * np.sum(mags[1:] ** 2)) / x.size
    assert energy_spec == pytest.approx(float(np.sum(x ** 2)), rel=1e-9)

    # discrete exponential transform matches the continuous 1/(s+1) law
    cfg = FeatureConfig(llt_s_values=(0.5, 1.0, 2.0), llt_dt=0.01)
    t = np.arange(1000) * cfg.llt_dt
    decay = np.exp(-t)
    vals = apply_function(decay, "llt", config=cfg)
    for s, v in vals.items():
        assert v == pytest.approx(1.0 / (s + 1.0), rel=1e-2)

    # boosting training loss never increases
    X, y = make_imbalanced(n_rows=400, n_cols=8, n_informative=3,
                           pos_frac=0.25, seed=5)
    model = fit_gbt(X, (y == 1).astype(float),
                    GbtSpec(n_rounds=60, max_depth=3))
    assert np.all(np.diff(model.train_curve) <= 1e-12)

    # hyperparameter importances form a unit simplex
    tr = StudyTrace(optimizer="random", seed=0)
    for i in range(60):
        a, b = rng.uniform(size=2)
        tr.records.append(TrialRecord(
            trial_id=i, config={"a": float(a), "b": float(b)}, budget=1.0,
            metric=float(a ** 2 + 0.1 * b), seed=i, status="completed"))
    imp = hp_importance(tr)
    assert abs(sum(imp.values()) - 1.0) < 1e-9
    _finish(10, "energy identity 1e-9; decay transform 1e-2; monotone train "
                "loss; importances sum to 1", start, 120.0)

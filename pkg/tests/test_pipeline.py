import dataclasses
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from xautoml import cli, synthetic
from xautoml.errors import ConfigError, DataError, StageError
from xautoml.pipeline.ablation import (AblationPlan, arm_space, build_spec,
                                       run_ablation)
from xautoml.pipeline.config import (AnomalySettings, CastSettings,
                                     ClassifySettings, DataConfig,
                                     PipelineConfig, config_from_dict,
                                     config_to_dict, load_config)
from xautoml.pipeline.reports import sha256_file
from xautoml.pipeline.runner import run_pipeline
from xautoml.synthetic import make_imbalanced


class TestConfig:
    def test_defaults_are_valid(self):
        cfg = PipelineConfig()
        assert cfg.stages == ("ingest", "impute", "extract", "select",
                              "anomaly", "classify", "report")

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="telemetry"):
            config_from_dict({"telemetry": True})

    def test_unknown_nested_key_names_section(self):
        with pytest.raises(ConfigError, match="cast"):
            config_from_dict({"cast": {"n_rankerz": 3}})

    def test_prerequisite_violation(self):
        with pytest.raises(ConfigError, match="impute"):
            config_from_dict({"stages": ["ingest", "extract"]})
        with pytest.raises(ConfigError, match="extract"):
            config_from_dict({"stages": ["ingest", "impute", "select"]})

    def test_stage_subsets_allowed(self):
        cfg = config_from_dict({"stages": ["ingest", "impute"]})
        assert cfg.enabled("impute") and not cfg.enabled("extract")

    def test_unknown_stage_and_duplicates(self):
        with pytest.raises(ConfigError):
            config_from_dict({"stages": ["ingest", "deploy"]})
        with pytest.raises(ConfigError):
            config_from_dict({"stages": ["ingest", "ingest"]})

    def test_data_kind_validation(self):
        with pytest.raises(ConfigError):
            DataConfig(kind="parquet")
        with pytest.raises(ConfigError):
            DataConfig(kind="csv")
        with pytest.raises(ConfigError):
            DataConfig(kind="secom", values_path="x")

    def test_lists_become_tuples(self):
        cfg = config_from_dict({"stages": ["ingest"],
                                "classify": {"arms": ["gam", "gbt_ce"]}})
        assert cfg.stages == ("ingest",)
        assert cfg.classify.arms == ("gam", "gbt_ce")

    def test_classify_settings_validation(self):
        with pytest.raises(ConfigError):
            ClassifySettings(arms=("gbt_ce",))
        with pytest.raises(ConfigError):
            ClassifySettings(arms=("gbt_ce", "gbt_ce"))
        with pytest.raises(ConfigError):
            ClassifySettings(optimizer="grid")
        with pytest.raises(ConfigError):
            ClassifySettings(metric="auc")

    def test_anomaly_portfolio_validation(self):
        AnomalySettings(portfolio=(("kmeans", 2), ("lof", 10)))
        with pytest.raises(ConfigError):
            AnomalySettings(portfolio="fancy")
        with pytest.raises(ConfigError):
            AnomalySettings(portfolio=(("dbscan", 0.5),))

    def test_round_trip(self):
        cfg = config_from_dict({"seed": 9, "cast": {"iterations": 7},
                                "features": {"window": 3}})
        again = config_from_dict(config_to_dict(cfg))
        assert again == cfg

    def test_load_config_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(bad)

    def test_load_config_ok(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"seed": 5, "stages": ["ingest"]}))
        cfg = load_config(p)
        assert cfg.seed == 5


@pytest.fixture(scope="module")
def small_data():
    return make_imbalanced(n_rows=150, n_cols=5, n_informative=2,
                           pos_frac=0.3, seed=6)


class TestAblation:
    def test_identity_arms_have_zero_delta(self, small_data):
        X, y = small_data
        plan = AblationPlan(arms=("gbt_ce", "gbt_ce"), optimizer="random",
                            n_trials=4, cv_folds=2, seed=1,
                            rounds_range=(10, 20))
        res = run_ablation(plan, X, y)
        assert res[0].best_metric == res[1].best_metric
        assert res[1].delta_vs_baseline == 0.0
        assert res[0].best_config == res[1].best_config

    def test_deltas_reference_first_arm(self, small_data):
        X, y = small_data
        plan = AblationPlan(arms=("gbt_ce", "gbt_fl"), optimizer="random",
                            n_trials=3, cv_folds=2, seed=2,
                            rounds_range=(10, 20))
        res = run_ablation(plan, X, y)
        assert [r.name for r in res] == ["gbt_ce", "gbt_fl"]
        assert res[0].delta_vs_baseline == 0.0
        assert res[1].delta_vs_baseline == pytest.approx(
            res[1].best_metric - res[0].best_metric)

    def test_arm_space_dimensions(self):
        seq = arm_space("gbt_ce", 0.2, (30, 120), include_rounds=True)
        names = [d.name for d in seq.dimensions]
        assert "n_rounds" in names
        fid = arm_space("gbt_ce", 0.2, (30, 120), include_rounds=False)
        assert "n_rounds" not in [d.name for d in fid.dimensions]
        gam = arm_space("gam", 0.2, (30, 120), include_rounds=True)
        assert "n_cycles" in [d.name for d in gam.dimensions]

    def test_focal_alpha_anchored_at_minority_fraction(self):
        space = arm_space("gbt_fl", 0.2, (30, 120), include_rounds=True)
        alpha = next(d for d in space.dimensions if d.name == "alpha")
        assert alpha.low == pytest.approx(0.2)
        assert alpha.high == pytest.approx(0.75)
        # an extreme minority fraction cannot invert the interval
        squashed = arm_space("gbt_fl", 0.9, (30, 120), include_rounds=True)
        alpha = next(d for d in squashed.dimensions if d.name == "alpha")
        assert alpha.low < alpha.high

    def test_build_spec_focal_and_override(self):
        cfg = {"learning_rate": 0.1, "max_depth": 3,
               "min_child_weight": 1.0, "subsample": 0.8,
               "alpha": 0.3, "gamma": 2.0}
        spec = build_spec("gbt_fl", cfg, n_rounds=17)
        assert spec.loss.name == "focal"
        assert spec.loss.focal.alpha == 0.3
        assert spec.n_rounds == 17
        gam = build_spec("gam", {"learning_rate": 0.2, "n_bins": 16,
                                 "reg_lambda": 1.0}, n_rounds=6)
        assert gam.n_cycles == 6

    def test_plan_validation(self):
        with pytest.raises(ConfigError):
            AblationPlan(arms=("gbt_ce",))
        with pytest.raises(ConfigError):
            AblationPlan(arms=("gbt_ce", "svm"))
        with pytest.raises(ConfigError):
            AblationPlan(rounds_range=(0, 10))

    def test_single_class_raises_stage_error(self):
        X = np.random.default_rng(0).normal(size=(30, 3))
        plan = AblationPlan(arms=("gbt_ce", "gbt_fl"), optimizer="random",
                            n_trials=2, cv_folds=2)
        with pytest.raises(StageError):
            run_ablation(plan, X, np.ones(30))

    def test_misaligned_inputs(self):
        X = np.zeros((10, 2))
        plan = AblationPlan(arms=("gbt_ce", "gbt_fl"))
        with pytest.raises(ConfigError):
            run_ablation(plan, X, np.ones(9))


def _light_config(out_dir, **over):
    payload = {
        "seed": 3,
        "out": str(out_dir),
        "data": {"kind": "mini"},
        "cast": {"m": 40, "iterations": 3, "fs_range": [3, 6], "cv_folds": 2,
                 "inner_rounds": 15, "inner_depth": 2, "run_rfe": True},
        "classify": {"arms": ["gbt_ce", "gbt_fl"], "optimizer": "random",
                     "n_trials": 3, "cv_folds": 2, "rounds_range": [10, 15]},
    }
    payload.update(over)
    return config_from_dict(payload)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = _light_config(out)
    report = run_pipeline(cfg)
    return cfg, report, out


class TestRunner:
    def test_all_sections_present(self, full_run):
        _, report, _ = full_run
        assert set(report.sections) == {"ingest", "impute", "extract",
                                        "select", "anomaly", "classify"}
        assert report.failed_stage is None

    def test_expected_artifacts_exist(self, full_run):
        _, _, out = full_run
        for name in ("config.json", "profile.csv", "imputed.npy",
                     "features.npy", "features_meta.json", "cast_weights.csv",
                     "rfe_curve.csv", "anomaly.csv", "anomaly_summary.json",
                     "study_trace.jsonl", "best_so_far.csv", "importance.csv",
                     "run_report.json", "timing.json", "manifest.json"):
            assert (out / name).exists(), name
        pd_files = sorted(os.listdir(out / "partial_dependence"))
        assert 1 <= len(pd_files) <= 5
        assert all(f.startswith("pd_") for f in pd_files)

    def test_feature_count_matches_expectation(self, full_run):
        _, report, _ = full_run
        sec = report.sections["extract"]
        assert sec["n_features"] == sec["expected_count"]

    def test_rfe_curve_is_well_formed(self, full_run):
        _, report, out = full_run
        lines = (out / "rfe_curve.csv").read_text().strip().splitlines()
        rows = [ln.split(",") for ln in lines[1:]]
        sizes = [int(r[0]) for r in rows]
        assert sizes == list(range(sizes[0], 0, -1))
        assert rows[-1][1] == ""            # terminal step eliminates nothing
        assert all(r[1] != "" for r in rows[:-1])
        assert report.sections["select"]["rfe_applied"]

    def test_study_trace_lines_tagged_with_arm(self, full_run):
        _, _, out = full_run
        lines = (out / "study_trace.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2 * 3           # two arms, three trials each
        for ln in lines:
            rec = json.loads(ln)
            assert rec["arm"] in ("gbt_ce", "gbt_fl")
            assert rec["status"] in ("completed", "failed")

    def test_classify_section_consistent(self, full_run):
        _, report, _ = full_run
        sec = report.sections["classify"]
        best = max(sec["arms"], key=lambda a: a["best_metric"])
        assert sec["winner"] == best["name"]
        assert sec["arms"][0]["delta_vs_baseline"] == 0.0

    def test_manifest_verifies(self, full_run):
        _, _, out = full_run
        manifest = json.loads((out / "manifest.json").read_text())["files"]
        assert "manifest.json" not in manifest
        assert "timing.json" not in manifest
        assert "run_report.json" in manifest
        for rel, digest in manifest.items():
            assert sha256_file(out / rel) == digest

    def test_run_report_excludes_timing(self, full_run):
        _, _, out = full_run
        payload = json.loads((out / "run_report.json").read_text())
        assert "timing" not in payload
        timing = json.loads((out / "timing.json").read_text())
        # the report stage writes the timing file, so its own duration is
        # not yet known at that point
        assert set(timing["wall_clock_seconds"]) == \
            set(payload["stages"]) - {"report"}

    def test_config_echo_omits_out_dir(self, full_run):
        _, _, out = full_run
        echo = json.loads((out / "config.json").read_text())
        assert "out" not in echo
        assert echo["seed"] == 3

    def test_truncated_stage_list(self, tmp_path):
        cfg = _light_config(tmp_path / "short",
                            stages=["ingest", "impute"])
        report = run_pipeline(cfg)
        assert set(report.sections) == {"ingest", "impute"}
        assert not (tmp_path / "short" / "features.npy").exists()

    def test_failure_writes_partial_report(self, tmp_path):
        out = tmp_path / "broken"
        cfg = _light_config(out, data={"kind": "csv",
                                       "values_path": str(tmp_path / "no.csv")})
        with pytest.raises(DataError):
            run_pipeline(cfg)
        payload = json.loads((out / "run_report.json").read_text())
        assert payload["failed_stage"] == "ingest"
        assert payload["error"]
        assert (out / "manifest.json").exists()

    def test_single_class_failure_is_stage_error(self, tmp_path):
        d = synthetic.make_mini_dataset(seed=1)
        flat = dataclasses.replace(d, labels=np.full(d.n_rows, -1))
        csv_path = tmp_path / "flat.csv"
        synthetic.write_csv(flat, csv_path)
        out = tmp_path / "flatrun"
        cfg = _light_config(
            out,
            stages=["ingest", "impute", "extract", "classify"],
            data={"kind": "csv", "values_path": str(csv_path)})
        with pytest.raises(StageError):
            run_pipeline(cfg)
        payload = json.loads((out / "run_report.json").read_text())
        assert payload["failed_stage"] == "classify"


class TestCli:
    def test_run_and_report_round_trip(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "cli_run"
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "stages": ["ingest", "impute", "report"],
            "data": {"kind": "mini"},
            "out": str(out),
        }))
        res = runner.invoke(cli.main, ["run", "--config", str(cfg_path)])
        assert res.exit_code == 0, res.output
        assert "completed stages" in res.output

        res = runner.invoke(cli.main, ["report", str(out)])
        assert res.exit_code == 0, res.output
        assert "files verified" in res.output

        # corrupt one artifact: the manifest check must now fail
        with open(out / "profile.csv", "a") as fh:
            fh.write("tampered\n")
        res = runner.invoke(cli.main, ["report", str(out)])
        assert res.exit_code == 3
        assert "profile.csv" in res.output

    def test_extract_prints_feature_counts(self, tmp_path):
        runner = CliRunner()
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"data": {"kind": "mini"}, "seed": 1}))
        res = runner.invoke(cli.main, [
            "extract", "--config", str(cfg_path),
            "--out", str(tmp_path / "ex")])
        assert res.exit_code == 0, res.output
        payload = json.loads(res.output)
        assert payload["extract"]["n_features"] == \
            payload["extract"]["expected_count"]

    def test_seed_override(self, tmp_path):
        runner = CliRunner()
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "stages": ["ingest", "report"], "data": {"kind": "mini"},
        }))
        out = tmp_path / "seeded"
        res = runner.invoke(cli.main, ["run", "--config", str(cfg_path),
                                       "--seed", "42", "--out", str(out)])
        assert res.exit_code == 0, res.output
        payload = json.loads((out / "run_report.json").read_text())
        assert payload["seed"] == 42

    def test_config_error_exit_code(self, tmp_path):
        runner = CliRunner()
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"unknown_key": 1}))
        res = runner.invoke(cli.main, ["run", "--config", str(cfg_path)])
        assert res.exit_code == 2

    def test_data_error_exit_code(self, tmp_path):
        runner = CliRunner()
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "stages": ["ingest"],
            "data": {"kind": "csv", "values_path": str(tmp_path / "gone.csv")},
            "out": str(tmp_path / "run"),
        }))
        res = runner.invoke(cli.main, ["run", "--config", str(cfg_path)])
        assert res.exit_code == 3

    def test_profile_csv_format(self, tmp_path):
        d = synthetic.make_mini_dataset(seed=2)
        p = tmp_path / "data.csv"
        synthetic.write_csv(d, p)
        runner = CliRunner()
        res = runner.invoke(cli.main, ["profile", str(p), "--format", "csv"])
        assert res.exit_code == 0, res.output
        payload = json.loads(res.output)
        assert payload["n_rows"] == 200
        assert payload["n_cols"] == 12

    def test_profile_secom_requires_labels(self, tmp_path):
        p = tmp_path / "data.txt"
        p.write_text("1 2\n")
        runner = CliRunner()
        res = runner.invoke(cli.main, ["profile", str(p)])
        assert res.exit_code == 2

    def test_report_missing_dir(self, tmp_path):
        runner = CliRunner()
        res = runner.invoke(cli.main, ["report", str(tmp_path / "nope")])
        assert res.exit_code == 3

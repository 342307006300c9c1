import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from urbanrisk import cli, pipeline
from urbanrisk.errors import ConfigurationError, ParseError
from urbanrisk.pipeline import PipelineStageError, build_report, run_pipeline
from urbanrisk.runconfig import load_run_config, write_default_config

EXPECTED_ARTIFACTS = [
    "MANIFEST",
    "agreement_forest.csv", "agreement_ols.csv", "agreement_rlm.csv",
    "case_density.csv",
    "choropleth_forest.geojson", "choropleth_ols.geojson", "choropleth_rlm.geojson",
    "cv_results.csv", "diagnostics.csv", "forest_eval.csv", "grid_results.csv",
    "indicators_raw.csv", "indicators_standardized.csv",
    "observed_validation.csv", "ols_stats.csv", "ols_summary.csv",
    "pca_explained.csv", "pca_loadings.csv", "pca_top_neighborhoods.csv",
    "predictions_forest.csv", "predictions_ols.csv", "predictions_rlm.csv",
    "ranking_forest.csv", "ranking_ols.csv", "ranking_rlm.csv",
    "rejects_cases.csv", "rlm_stats.csv", "rlm_summary.csv",
    "scores.csv", "selected_components.csv", "standardization.csv",
    "target.csv",
]


@pytest.fixture(scope="module")
def completed_run(synth_city):
    report = run_pipeline(synth_city["config"])
    return {"report": report, "outdir": synth_city["config"].output_dir}


class TestRunPipeline:
    def test_all_artifacts_emitted(self, completed_run):
        outdir = Path(completed_run["outdir"])
        for name in EXPECTED_ARTIFACTS:
            assert (outdir / name).exists(), name

    def test_manifest_complete_with_valid_hashes(self, completed_run):
        outdir = Path(completed_run["outdir"])
        lines = (outdir / "MANIFEST").read_text().splitlines()
        assert lines[0] == "status: complete"
        assert len(lines) > 20
        for line in lines[1:]:
            digest, size, name = line.split(maxsplit=2)
            data = (outdir / name).read_bytes()
            assert hashlib.sha256(data).hexdigest() == digest
            assert int(size) == len(data)

    def test_three_rankings_and_agreements(self, completed_run):
        outdir = Path(completed_run["outdir"])
        for model in ("ols", "rlm", "forest"):
            rows = pipeline.read_table(outdir / f"ranking_{model}.csv")
            assert len(rows) == 60
            scores = [float(r["normalized_score"]) for r in rows]
            assert max(scores) == 1.0 and min(scores) == 0.0
            agreement = pipeline.read_table(outdir / f"agreement_{model}.csv")
            metrics = {r["metric"] for r in agreement}
            assert {"spearman_rho", "concordant_pair_pct"} <= metrics

    def test_report_regenerates_identically(self, completed_run):
        rebuilt = build_report(completed_run["outdir"])
        assert rebuilt == completed_run["report"]

    def test_rerun_is_byte_identical(self, synth_city, completed_run, tmp_path):
        config = dataclasses.replace(synth_city["config"], output_dir=tmp_path / "out2")
        run_pipeline(config)
        first = Path(completed_run["outdir"])
        second = tmp_path / "out2"
        for name in EXPECTED_ARTIFACTS:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_report_numbers_parse(self, completed_run):
        report = completed_run["report"]
        assert 0 < float(report.ols_stats["r_squared"]) < 1
        assert len(report.ols_summary) == 6
        assert len(report.rlm_summary) == 6
        assert len(report.diagnostics) == 4
        assert report.sign_agreement[1] == 6
        rendered = pipeline.render_report(report)
        assert "OLS coefficients" in rendered
        assert "Rank agreement" in rendered

    def test_stage_failure_marks_manifest_incomplete(self, synth_city, tmp_path):
        broken_cases = tmp_path / "cases.csv"
        broken_cases.write_text("date,neighborhood\nnot-a-date,ZONE 001\n")
        config = dataclasses.replace(
            synth_city["config"],
            cases_path=broken_cases,
            output_dir=tmp_path / "out",
        )
        with pytest.raises(PipelineStageError, match="ingest") as excinfo:
            run_pipeline(config)
        assert isinstance(excinfo.value.__cause__, ParseError)
        manifest = (tmp_path / "out" / "MANIFEST").read_text()
        assert manifest.startswith("status: incomplete (failed at ingest")


class TestRunConfig:
    def test_load_synth_config(self, synth_city):
        config = synth_city["config"]
        assert config.components == [1, 2, 4, 5, 6]
        assert config.cv_folds == 10
        assert config.validation_year == 2024
        assert config.census_path.name == "census.csv"
        assert len(config.grid()) == 4

    def test_overrides(self, synth_city):
        config = load_run_config(
            synth_city["root"] / "run.ini",
            overrides=["model.seed=7", "pca.components=1,2", "forest.max_depth=none"],
        )
        assert config.seed == 7
        assert config.components == [1, 2]
        assert config.forest.max_depth is None

    def test_unknown_component_rejected_before_computation(self, synth_city):
        with pytest.raises(ConfigurationError, match="7"):
            load_run_config(
                synth_city["root"] / "run.ini", overrides=["pca.components=1,7"]
            )

    def test_unknown_key_rejected(self, synth_city):
        with pytest.raises(ConfigurationError, match="unknown"):
            load_run_config(
                synth_city["root"] / "run.ini", overrides=["model.bogus=1"]
            )

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[wat]\nx = 1\n")
        with pytest.raises(ConfigurationError, match="section"):
            load_run_config(path)

    def test_missing_required_paths(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[paths]\ncensus = c.csv\n")
        with pytest.raises(ConfigurationError, match="paths"):
            load_run_config(path)

    def test_both_selection_modes_rejected(self, synth_city):
        with pytest.raises(ConfigurationError, match="not both"):
            load_run_config(
                synth_city["root"] / "run.ini",
                overrides=["pca.variance_threshold=0.7"],
            )

    def test_default_template_parses(self, tmp_path):
        path = tmp_path / "run.ini"
        write_default_config(path)
        config = load_run_config(path)
        assert config.forest.n_trees == 200
        assert config.forest.max_depth == 8
        assert config.test_split == 0.25

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_run_config(tmp_path / "absent.ini")


class TestReadBack:
    def test_indicator_table_round_trip(self, completed_run):
        table = pipeline.read_indicator_table(completed_run["outdir"])
        assert table.standardized
        assert table.n == 60
        assert np.max(np.abs(table.values.mean(axis=0))) < 1e-9

    def test_scores_and_selection(self, completed_run):
        scores = pipeline.read_scores(completed_run["outdir"])
        assert scores.component_ids == (1, 2, 3, 4, 5, 6)
        assert pipeline.read_selected(completed_run["outdir"]) == [1, 2, 4, 5, 6]

    def test_target_and_observed(self, completed_run):
        target = pipeline.read_target(completed_run["outdir"])
        observed = pipeline.read_observed(completed_run["outdir"])
        assert set(target) == set(observed)
        assert all(v >= 0 for v in target.values())

    def test_ranking_round_trip(self, completed_run):
        built = pipeline.read_ranking(completed_run["outdir"], "ols")
        rows = pipeline.read_table(
            Path(completed_run["outdir"]) / "ranking_ols.csv"
        )
        assert [e.neighborhood_id for e in built.entries] == [
            r["neighborhood"] for r in rows
        ]
        assert [e.rank for e in built.entries] == [int(r["rank"]) for r in rows]


class TestCli:
    def run_cli(self, *argv):
        return cli.main(list(argv))

    def test_synth_and_stagewise_pipeline(self, tmp_path, capsys):
        root = tmp_path / "city"
        assert self.run_cli("synth", "--out", str(root), "--n", "40", "--seed", "3") == 0
        config = str(root / "run.ini")
        for command in ("ingest", "pca", "fit-ols", "fit-rlm", "fit-rf",
                        "rank", "validate", "choropleth"):
            code = self.run_cli(command, "--config", config)
            assert code == 0, command
        out = capsys.readouterr().out
        assert "OLS R²" in out
        outdir = root / "out"
        for name in ("indicators_raw.csv", "scores.csv", "ols_summary.csv",
                     "rlm_summary.csv", "forest_eval.csv", "ranking_ols.csv",
                     "agreement_ols.csv", "choropleth_ols.geojson"):
            assert (outdir / name).exists(), name

    def test_grid_search_subcommand(self, tmp_path, capsys):
        root = tmp_path / "city"
        self.run_cli("synth", "--out", str(root), "--n", "30", "--seed", "5")
        config = str(root / "run.ini")
        assert self.run_cli("ingest", "--config", config) == 0
        assert self.run_cli("pca", "--config", config) == 0
        assert self.run_cli(
            "grid-search", "--config", config, "--grid.trees", "10,20",
            "--grid.max_depth", "2", "--model.cv_folds", "3",
        ) == 0
        assert "searched 2 configurations" in capsys.readouterr().out

    def test_run_subcommand_with_override(self, tmp_path, capsys):
        root = tmp_path / "city"
        self.run_cli("synth", "--out", str(root), "--n", "30", "--seed", "8")
        code = self.run_cli(
            "run", "--config", str(root / "run.ini"),
            "--grid.trees", "10", "--grid.max_depth", "4",
            "--forest.trees", "10", "--model.cv_folds", "3",
        )
        assert code == 0
        assert "Rank agreement" in capsys.readouterr().out

    def test_configuration_error_exit_code(self, synth_city, capsys):
        code = self.run_cli(
            "run", "--config", str(synth_city["root"] / "run.ini"),
            "--pca.components", "9",
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_data_error_exit_code(self, tmp_path, capsys):
        config = tmp_path / "run.ini"
        config.write_text(
            "[paths]\ncensus = missing.csv\ncases = missing.csv\noutput = out\n"
        )
        code = self.run_cli("ingest", "--config", str(config))
        assert code == 3

    def test_missing_intermediates_reported(self, tmp_path, capsys):
        root = tmp_path / "city"
        self.run_cli("synth", "--out", str(root), "--n", "30", "--seed", "9")
        code = self.run_cli("fit-ols", "--config", str(root / "run.ini"))
        assert code == 3
        assert "earlier" in capsys.readouterr().err


def test_synth_determinism(tmp_path):
    from urbanrisk import synth

    a = synth.generate(tmp_path / "a", n=25, seed=4)
    b = synth.generate(tmp_path / "b", n=25, seed=4)
    assert np.array_equal(a.true_density, b.true_density)
    for name in ("census.csv", "cases.csv", "truth.csv", "city.geojson"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_truth_layout(tmp_path):
    from urbanrisk import synth

    city = synth.generate(tmp_path, n=20, seed=6)
    rows = pipeline.read_table(tmp_path / "truth.csv")
    assert [r["neighborhood"] for r in rows] == city.neighborhood_ids
    values = np.array([float(r["true_density"]) for r in rows])
    assert np.array_equal(values, city.true_density)
    geo = json.loads((tmp_path / "city.geojson").read_text())
    assert len(geo["features"]) == 20

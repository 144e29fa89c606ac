"""End-to-end tests for the command-line interface."""

from __future__ import annotations

import json

import pytest
import yaml
from click.testing import CliRunner

from evidencepipe.cli import main
from evidencepipe.simharness import CorpusSpec, DocSpec, FieldPlant, generate_corpus


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def tiny_corpus(tmp_path, schema_set):
    corpus_dir = tmp_path / "corpus"
    spec = CorpusSpec(
        docs=tuple(
            DocSpec(
                name=f"doc-{i}.pdf",
                pages=8,
                plants=(
                    FieldPlant("meta_design", "year", 2010 + i),
                    FieldPlant(
                        "population_indications", "doac_molecules", "apixaban", page=2
                    ),
                ),
            )
            for i in range(2)
        ),
        seed=5,
    )
    generate_corpus(spec, corpus_dir, schema_set)
    return corpus_dir


def invoke_run(runner, corpus_dir, out_dir, *extra):
    return runner.invoke(
        main,
        [
            "run",
            "--corpus", str(corpus_dir),
            "--out", str(out_dir),
            "--rps", "1000",
            "--keyword-table", str(corpus_dir / "keyword_rules.tsv"),
            *extra,
        ],
    )


class TestRunCommand:
    def test_processes_corpus_and_prints_report(self, runner, tiny_corpus, tmp_path):
        out_dir = tmp_path / "out"
        result = invoke_run(runner, tiny_corpus, out_dir)
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["docs_processed"] == 2
        assert report["requests_issued"] == 10  # 1 chunk x 5 payloads x 2 docs
        assert report["failed_units"] == 0
        assert (out_dir / "studies.csv").exists()
        assert (out_dir / "run_report.json").exists()
        assert (out_dir / "aggregates" / "manifest.json").exists()

    def test_rerun_skips_processed_documents(self, runner, tiny_corpus, tmp_path):
        out_dir = tmp_path / "out"
        assert invoke_run(runner, tiny_corpus, out_dir).exit_code == 0
        result = invoke_run(runner, tiny_corpus, out_dir)
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["requests_issued"] == 0
        assert report["docs_skipped"] == 2

    def test_http_backend_requires_environment(
        self, runner, tiny_corpus, tmp_path, monkeypatch
    ):
        monkeypatch.delenv("EXTRACTOR_API_URL", raising=False)
        monkeypatch.delenv("EXTRACTOR_API_KEY", raising=False)
        result = invoke_run(runner, tiny_corpus, tmp_path / "out", "--backend", "http")
        assert result.exit_code != 0
        assert result.exception is not None

    def test_missing_corpus_directory_fails_fast(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["run", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "out")],
        )
        assert result.exit_code != 0


class TestAggregateCommand:
    def test_regenerates_tables_and_prints_coverage(
        self, runner, tiny_corpus, tmp_path
    ):
        out_dir = tmp_path / "out"
        assert invoke_run(runner, tiny_corpus, out_dir).exit_code == 0
        result = runner.invoke(main, ["aggregate", "--out", str(out_dir)])
        assert result.exit_code == 0, result.output
        coverage = json.loads(result.output)
        assert coverage["meta_design.year"] == 2
        assert coverage["population_indications.doac_molecules"] == 2
        assert coverage["diagnostic_performance.sensitivity_pct"] == 0

    def test_strata_pair_emits_cross_table(self, runner, tiny_corpus, tmp_path):
        out_dir = tmp_path / "out"
        assert invoke_run(runner, tiny_corpus, out_dir).exit_code == 0
        result = runner.invoke(
            main,
            [
                "aggregate",
                "--out", str(out_dir),
                "--strata",
                "population_indications.doac_molecules,meta_design.year",
            ],
        )
        assert result.exit_code == 0, result.output
        expected = (
            out_dir
            / "aggregates"
            / "strata.population_indications.doac_molecules__meta_design.year.csv"
        )
        assert expected.exists()

    def test_single_column_strata_is_rejected(self, runner, tiny_corpus, tmp_path):
        out_dir = tmp_path / "out"
        assert invoke_run(runner, tiny_corpus, out_dir).exit_code == 0
        result = runner.invoke(
            main,
            ["aggregate", "--out", str(out_dir), "--strata", "meta_design.year"],
        )
        assert result.exit_code != 0

    def test_aggregate_without_run_fails(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(main, ["aggregate", "--out", str(empty)])
        assert result.exit_code != 0


class TestWilsonCommand:
    @pytest.mark.parametrize(
        "successes,trials,expected",
        [(50, 50, "92.9 100.0"), (0, 50, "0.0 7.1")],
    )
    def test_reference_values(self, runner, successes, trials, expected):
        result = runner.invoke(main, ["wilson", str(successes), str(trials)])
        assert result.exit_code == 0
        assert result.output.strip() == expected

    def test_custom_quantile(self, runner):
        narrow = runner.invoke(main, ["wilson", "25", "50", "--z", "1.0"])
        wide = runner.invoke(main, ["wilson", "25", "50", "--z", "2.58"])
        assert narrow.exit_code == 0 and wide.exit_code == 0
        n_low, n_high = map(float, narrow.output.split())
        w_low, w_high = map(float, wide.output.split())
        assert w_high - w_low > n_high - n_low


class TestScenarioCommand:
    def scenario_file(self, tmp_path, assertions):
        scenario = {
            "name": "cli-check",
            "seed": 2,
            "corpus": {"docs": [{"count": 1, "pages": 8, "plants": True}]},
            "config": {"rps": 100.0},
            "assertions": assertions,
        }
        path = tmp_path / "scenario.yaml"
        path.write_text(yaml.safe_dump(scenario), encoding="utf-8")
        return path

    def test_passing_scenario_exits_zero(self, runner, tmp_path):
        path = self.scenario_file(tmp_path, {"docs_processed": 1, "requests_issued": 5})
        result = runner.invoke(
            main, ["scenario", str(path), "--workdir", str(tmp_path / "work")]
        )
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["requests_issued"] == 5
        assert "all assertions passed" in result.stderr

    def test_failing_scenario_exits_nonzero(self, runner, tmp_path):
        path = self.scenario_file(tmp_path, {"requests_issued": 999})
        result = runner.invoke(
            main, ["scenario", str(path), "--workdir", str(tmp_path / "work")]
        )
        assert result.exit_code == 1


class TestHelp:
    def test_group_lists_all_commands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for command in ("run", "aggregate", "wilson", "scenario"):
            assert command in result.output

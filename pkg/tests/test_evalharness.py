import json
import pytest

from chartpot import (
    InputComposition,
    MockTransport,
    Strategy,
    build_report,
    read_runs,
    render_tables,
    run_batch,
)
from chartpot.cli import main as cli_main
from chartpot.client import completion_body
from chartpot.evalharness import OrphanRun, load_config
from chartpot.pipeline import ConfigError

from tests.conftest import scripted_model


def _run(base_config, fixture_manifest, mock_script, fake_clock, out):
    transport = MockTransport(mock_script)
    return run_batch(
        fixture_manifest,
        base_config,
        str(out),
        transport=transport,
        clock=fake_clock,
        sleep=lambda s: None,
    )


class TestRunBatch:
    def test_writes_one_record_per_chart(
        self, base_config, fixture_manifest, mock_script, fake_clock, tmp_path
    ):
        out = tmp_path / "runs.jsonl"
        counts = _run(base_config, fixture_manifest, mock_script, fake_clock, out)
        assert counts["written"] == 5
        assert len(read_runs(str(out))) == 5

    def test_rerun_resumes(self, base_config, fixture_manifest, mock_script, fake_clock, tmp_path):
        out = tmp_path / "runs.jsonl"
        _run(base_config, fixture_manifest, mock_script, fake_clock, out)
        counts = _run(base_config, fixture_manifest, mock_script, fake_clock, out)
        assert counts["written"] == 0
        assert counts["skipped"] == 5
        assert len(read_runs(str(out))) == 5

    def test_failures_counted_and_histogrammed(
        self, base_config, image_key_map, fixture_manifest, fake_clock, tmp_path
    ):
        good = scripted_model(image_key_map)

        def script(url, body):
            text = json.dumps(body)
            if "Convert the chart into a python dictionary" in text:
                # break exactly chart c2's dictionary
                reply = good(url, body)
                if "'2015': 65" in json.dumps(reply):
                    return completion_body(" {'adoption': {'2015': 65,")
                return reply
            return good(url, body)

        out = tmp_path / "runs.jsonl"
        transport = MockTransport(script)
        counts = run_batch(fixture_manifest, base_config, str(out),
                           transport=transport, clock=fake_clock, sleep=lambda s: None)
        assert counts["written"] == 5
        assert counts["failures"] == 1
        report = build_report(str(out), fixture_manifest)
        assert report.failure_histogram == {("DictParse", "Truncated"): 1}

    def test_limit(self, base_config, fixture_manifest, mock_script, fake_clock, tmp_path):
        out = tmp_path / "runs.jsonl"
        transport = MockTransport(mock_script)
        counts = run_batch(fixture_manifest, base_config, str(out), transport=transport,
                           clock=fake_clock, sleep=lambda s: None, limit=2)
        assert counts["written"] == 2


class TestBuildReport:
    def _write_runs(self, tmp_path, fixture_manifest, summaries):
        from chartpot.core import (
            InputComposition,
            RunRecord,
            StageOutput,
            Strategy,
            load_manifest,
            persist_run,
        )

        out = tmp_path / "runs.jsonl"
        with open(out, "w", encoding="utf-8") as sink:
            for rec in load_manifest(fixture_manifest):
                run = RunRecord(
                    chart_id=rec.id,
                    strategy=Strategy.POT,
                    input_composition=InputComposition.DICT_STATS_TITLE,
                    stage_outputs={"Summarize": StageOutput(status="ok")},
                    summary=summaries(rec),
                    timings_ms={"Summarize": 2.0},
                )
                persist_run(run, sink)
        return str(out)

    def test_candidate_equals_gold_gives_100_everywhere(self, tmp_path, fixture_manifest):
        runs = self._write_runs(tmp_path, fixture_manifest, lambda rec: rec.gold_summary)
        report = build_report(runs, fixture_manifest)
        for (label, col), metrics in report.rows.items():
            if metrics.n:
                assert metrics.bleu == pytest.approx(100.0, abs=1e-9), col
                assert metrics.rouge1_f1 == pytest.approx(1.0)

    def test_group_counts_additive(self, tmp_path, fixture_manifest):
        runs = self._write_runs(tmp_path, fixture_manifest, lambda rec: rec.gold_summary)
        report = build_report(runs, fixture_manifest)
        label = report.groups[0]
        per_type = sum(
            report.rows[(label, col)].n
            for col in ("Area", "Bar", "Line", "Pie", "Scatter")
        )
        assert per_type == report.rows[(label, "All")].n == 5

    def test_orphan_run_rejected(self, tmp_path, fixture_manifest):
        from chartpot.core import InputComposition, RunRecord, Strategy, persist_run

        out = tmp_path / "runs.jsonl"
        with open(out, "w", encoding="utf-8") as sink:
            persist_run(
                RunRecord(chart_id="nope", strategy=Strategy.DIRECT,
                          input_composition=InputComposition.TITLE),
                sink,
            )
        with pytest.raises(OrphanRun):
            build_report(str(out), fixture_manifest)


class TestRenderTables:
    def _report(self, tmp_path, fixture_manifest, base_config, mock_script, fake_clock):
        out = tmp_path / "runs.jsonl"
        _run(base_config, fixture_manifest, mock_script, fake_clock, out)
        return build_report(str(out), fixture_manifest)

    def test_markdown_column_order(self, tmp_path, fixture_manifest, base_config,
                                   mock_script, fake_clock):
        report = self._report(tmp_path, fixture_manifest, base_config, mock_script, fake_clock)
        table = render_tables(report, "markdown")
        header = table.splitlines()[0]
        assert header == "| Method | Metric | Area | Bar | Line | Pie | Scatter | All |"

    def test_tsv_single_header(self, tmp_path, fixture_manifest, base_config,
                               mock_script, fake_clock):
        report = self._report(tmp_path, fixture_manifest, base_config, mock_script, fake_clock)
        tsv = render_tables(report, "tsv")
        lines = tsv.strip().splitlines()
        assert lines[0].split("\t") == [
            "Method", "Metric", "Area", "Bar", "Line", "Pie", "Scatter", "All",
        ]
        assert all("\t" in line for line in lines[1:])

    def test_empty_report_header_only(self):
        from chartpot.evalharness import EvalReport

        tsv = render_tables(EvalReport(), "tsv")
        assert tsv.strip().splitlines() == [
            "Method\tMetric\tArea\tBar\tLine\tPie\tScatter\tAll"
        ]

    def test_determinism(self, tmp_path, fixture_manifest, base_config,
                         mock_script, fake_clock):
        report = self._report(tmp_path, fixture_manifest, base_config, mock_script, fake_clock)
        report2 = build_report(str(tmp_path / "runs.jsonl"), fixture_manifest)
        assert render_tables(report, "markdown") == render_tables(report2, "markdown")


VALID_CONFIG = {
    "vlm": {"base_url": "http://localhost:9", "model_id": "vlm", "supports_images": True},
    "coder": {"base_url": "http://localhost:9", "model_id": "coder"},
    "strategy": "PoT",
    "composition": "DictStatsTitle",
    "decode": {"temperature": 0.2, "repetition_penalty": 1.2},
}


class TestConfig:
    def test_valid_config_loads(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(VALID_CONFIG))
        cfg = load_config(str(path))
        assert cfg.strategy is Strategy.POT
        assert cfg.decode.temperature == 0.2
        assert cfg.decode.repetition_penalty == 1.2

    def test_pot_without_coder_rejected(self, tmp_path):
        bad = {k: v for k, v in VALID_CONFIG.items() if k != "coder"}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_bad_strategy_rejected(self, tmp_path):
        bad = dict(VALID_CONFIG, strategy="Wishful")
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestCli:
    def test_validate_config_ok(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(VALID_CONFIG))
        assert cli_main(["validate-config", "--config", str(path)]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_validate_config_error_exit_2(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        assert cli_main(["validate-config", "--config", str(path)]) == 2

    def test_report_cli(self, tmp_path, fixture_manifest, base_config,
                        mock_script, fake_clock, capsys):
        out = tmp_path / "runs.jsonl"
        _run(base_config, fixture_manifest, mock_script, fake_clock, out)
        code = cli_main([
            "report", "--runs", str(out), "--manifest", fixture_manifest,
            "--format", "markdown",
        ])
        assert code == 0
        assert "| Method | Metric |" in capsys.readouterr().out


class TestCliRunEndToEnd:
    def test_run_over_loopback_http(self, tmp_path, fixture_manifest,
                                    chat_completions_server, capsys):
        config = {
            "vlm": {"base_url": chat_completions_server, "model_id": "vlm",
                    "supports_images": True},
            "coder": {"base_url": chat_completions_server, "model_id": "coder"},
            "strategy": "PoT",
            "composition": "DictStatsTitle",
            "workers": 2,
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "runs.jsonl"
        code = cli_main([
            "run", "--manifest", fixture_manifest, "--config", str(cfg_path),
            "--out", str(out),
        ])
        assert code == 0
        assert "written=5" in capsys.readouterr().out
        runs = read_runs(str(out))
        assert len(runs) == 5
        assert all(r.summary for r in runs)

    def test_run_exit_code_1_on_partial_failures(self, tmp_path, fixture_manifest,
                                                 chat_completions_server):
        # text-only VLM cannot take chart images: every chart fails, exit 1
        config = {
            "vlm": {"base_url": chat_completions_server, "model_id": "vlm",
                    "supports_images": False},
            "coder": {"base_url": chat_completions_server, "model_id": "coder"},
            "strategy": "PoT",
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "runs.jsonl"
        code = cli_main([
            "run", "--manifest", fixture_manifest, "--config", str(cfg_path),
            "--out", str(out),
        ])
        assert code == 1
        assert all(r.failure is not None for r in read_runs(str(out)))

"""CLI flows: corpus generation, simulation, structuring, evaluation, and
byte-level determinism across repeated runs."""

import json

import pytest
from click.testing import CliRunner

from docstruct.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def _run(runner, *args):
    result = runner.invoke(main, list(args), catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestSynthSimulateStructure:
    def test_full_chain_and_determinism(self, runner, tmp_path):
        paths = {}
        for tag in ("a", "b"):
            truth = tmp_path / f"truth_{tag}.jsonl"
            props = tmp_path / f"props_{tag}.jsonl"
            layouts = tmp_path / f"layouts_{tag}.jsonl"
            _run(runner, "synth", "--out", str(truth), "--n-docs", "5", "--seed", "42")
            _run(
                runner, "simulate", "--truth", str(truth), "--out", str(props),
                "--seed", "7", "--fragmentation-rate", "0.6", "--score-spread", "0.2",
            )
            _run(runner, "structure", "--proposals", str(props), "--out", str(layouts))
            paths[tag] = (truth.read_bytes(), props.read_bytes(), layouts.read_bytes())
        assert paths["a"] == paths["b"]

    def test_structure_no_combine_differs(self, runner, tmp_path):
        truth = tmp_path / "truth.jsonl"
        props = tmp_path / "props.jsonl"
        _run(runner, "synth", "--out", str(truth), "--n-docs", "3", "--seed", "1")
        _run(
            runner, "simulate", "--truth", str(truth), "--out", str(props),
            "--seed", "3", "--fragmentation-rate", "1.0",
        )
        combined = tmp_path / "combined.jsonl"
        plain = tmp_path / "plain.jsonl"
        _run(runner, "structure", "--proposals", str(props), "--out", str(combined))
        _run(runner, "structure", "--proposals", str(props), "--out", str(plain), "--no-combine")
        assert combined.read_bytes() != plain.read_bytes()

    def test_synth_config_file(self, runner, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({"n_tables": [0, 0], "n_handwriting": [0, 0]}))
        truth = tmp_path / "truth.jsonl"
        _run(runner, "synth", "--out", str(truth), "--n-docs", "2", "--seed", "0",
             "--config", str(cfg))
        for line in truth.read_text().splitlines():
            doc = json.loads(line)
            assert all(r["class"] == "text_block" for r in doc["regions"])


class TestEval:
    def test_zero_noise_scores_perfect(self, runner, tmp_path):
        truth = tmp_path / "truth.jsonl"
        props = tmp_path / "props.jsonl"
        layouts = tmp_path / "layouts.jsonl"
        report = tmp_path / "report.json"
        _run(runner, "synth", "--out", str(truth), "--n-docs", "4", "--seed", "11")
        _run(runner, "simulate", "--truth", str(truth), "--out", str(props), "--seed", "0")
        _run(runner, "structure", "--proposals", str(props), "--out", str(layouts))
        _run(runner, "eval", "--layouts", str(layouts), "--truth", str(truth),
             "--out", str(report))
        data = json.loads(report.read_text())
        for cls, counts in data["classes"].items():
            assert counts["precision"] == 1.0, cls
            assert counts["recall"] == 1.0, cls

    def test_report_to_stdout(self, runner, tmp_path):
        truth = tmp_path / "truth.jsonl"
        props = tmp_path / "props.jsonl"
        layouts = tmp_path / "layouts.jsonl"
        _run(runner, "synth", "--out", str(truth), "--n-docs", "2", "--seed", "5")
        _run(runner, "simulate", "--truth", str(truth), "--out", str(props), "--seed", "1")
        _run(runner, "structure", "--proposals", str(props), "--out", str(layouts))
        result = _run(runner, "eval", "--layouts", str(layouts), "--truth", str(truth))
        data = json.loads(result.output.strip().splitlines()[-1])
        assert "micro" in data


class TestTrainIncr:
    def test_metrics_emitted(self, runner, tmp_path):
        out = tmp_path / "metrics.json"
        result = runner.invoke(
            main, ["train-incr", "--seed", "0", "--out", str(out)], catch_exceptions=False
        )
        assert result.exit_code == 0
        data = json.loads(out.read_text())
        assert "incremental_old_error" in data
        assert isinstance(data["history"], list)

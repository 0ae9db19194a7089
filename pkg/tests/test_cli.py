"""CLI wiring: subcommands, exit codes, determinism, atomic writes."""

import json
import os
from pathlib import Path

import pytest

from conftest import make_problem
from orflow.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, atomic_write, main
from orflow.datasets import dump_corpus
from orflow.model import Benchmark, Split


@pytest.fixture
def corpus_path(tmp_path):
    problems = [
        make_problem(
            pid=f"nl4opt-{i}",
            benchmark=Benchmark.NL4OPT,
            description=f"problem {i}",
            truth=10.0,
            split=Split.SFT,
        )
        for i in range(2)
    ]
    path = tmp_path / "corpus.jsonl"
    path.write_text(dump_corpus(problems))
    return path


def write_script(path, entries):
    path.write_text(json.dumps([{"response": e} for e in entries]))
    return str(path)


def reasoner_script(tmp_path):
    # two problems, each: clean one-shot correct answer
    return write_script(
        tmp_path / "reasoner.json",
        ["The optimum is $\\boxed{10}$."] * 2,
    )


def intervener_script(tmp_path):
    return write_script(
        tmp_path / "intervener.json", ["VERDICT: NO INTERVENTION"] * 2
    )


class TestSplitCommand:
    def plan_file(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text(json.dumps({"NL4Opt": {"sft": 1, "rl": 0, "test": 1}}))
        return str(path)

    def test_writes_three_files(self, tmp_path, corpus_path):
        out = tmp_path / "splits"
        code = main([
            "split", "--corpus", str(corpus_path), "--out", str(out),
            "--seed", "7", "--plan", self.plan_file(tmp_path),
        ])
        assert code == EXIT_OK
        assert {p.name for p in out.iterdir()} == {"sft.jsonl", "rl.jsonl", "test.jsonl"}

    def test_rerun_is_byte_identical(self, tmp_path, corpus_path):
        out = tmp_path / "splits"
        args = [
            "split", "--corpus", str(corpus_path), "--out", str(out),
            "--seed", "7", "--plan", self.plan_file(tmp_path),
        ]
        main(args)
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        main(args)
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second

    def test_count_mismatch_is_runtime_error(self, tmp_path, corpus_path):
        path = tmp_path / "plan.json"
        path.write_text(json.dumps({"NL4Opt": {"sft": 9, "rl": 0, "test": 1}}))
        code = main([
            "split", "--corpus", str(corpus_path),
            "--out", str(tmp_path / "s"), "--plan", str(path),
        ])
        assert code == EXIT_RUNTIME


class TestCurateCommand:
    def test_mocked_curation_produces_outputs(self, tmp_path, corpus_path):
        out = tmp_path / "curated"
        code = main([
            "curate", "--corpus", str(corpus_path), "--out", str(out),
            "--mock-reasoner", reasoner_script(tmp_path),
            "--mock-intervener", intervener_script(tmp_path),
        ])
        assert code == EXIT_OK
        names = {p.name for p in out.iterdir()}
        assert {"outcomes.jsonl", "golden.jsonl", "flagged.jsonl", "funnel.json"} <= names
        funnel = json.loads((out / "funnel.json").read_text())
        assert funnel["attempted"] == 2
        assert funnel["emitted"] == 2

    def test_rerun_is_byte_identical(self, tmp_path, corpus_path):
        out = tmp_path / "curated"
        args = [
            "curate", "--corpus", str(corpus_path), "--out", str(out),
            "--mock-reasoner", reasoner_script(tmp_path),
            "--mock-intervener", intervener_script(tmp_path),
        ]
        main(args)
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        main(args)
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second

    def test_unreachable_endpoint_without_mocks_fails(self, tmp_path, corpus_path, monkeypatch):
        for var in list(os.environ):
            if var.startswith("ORFLOW_"):
                monkeypatch.delenv(var)
        code = main([
            "curate", "--corpus", str(corpus_path), "--out", str(tmp_path / "x"),
        ])
        assert code == EXIT_RUNTIME


class TestEmitSftCommand:
    def test_emits_records_and_funnel(self, tmp_path, corpus_path):
        out = tmp_path / "curated"
        main([
            "curate", "--corpus", str(corpus_path), "--out", str(out),
            "--mock-reasoner", reasoner_script(tmp_path),
            "--mock-intervener", intervener_script(tmp_path),
        ])
        sft_out = tmp_path / "sft.jsonl"
        code = main([
            "emit-sft", "--in", str(out / "outcomes.jsonl"),
            "--out", str(sft_out), "--corpus", str(corpus_path),
        ])
        assert code == EXIT_OK
        records = [json.loads(l) for l in sft_out.read_text().splitlines()]
        assert len(records) == 2
        assert all("assistant_text" in r and "mask_spans" in r for r in records)
        assert (tmp_path / "sft.funnel.json").exists()


class TestEvaluateCommand:
    def test_mocked_evaluation(self, tmp_path):
        problems = [
            make_problem(
                pid=f"t{i}", description=f"q {i}", truth=10.0, split=Split.TEST
            )
            for i in range(2)
        ]
        corpus = tmp_path / "test_corpus.jsonl"
        corpus.write_text(dump_corpus(problems))
        script = write_script(
            tmp_path / "eval.json",
            ["$\\boxed{10}$", "$\\boxed{3}$"] * 2,
        )
        out = tmp_path / "report.json"
        code = main([
            "evaluate", "--corpus", str(corpus), "--out", str(out),
            "--samples", "2", "--mock-reasoner", script,
        ])
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert report["per_benchmark"]["NL4Opt"] == 0.5
        assert report["samples_per_problem"] == 2


class TestAnnotateAndAgreement:
    def test_annotate_then_agreement(self, tmp_path, corpus_path):
        curated = tmp_path / "curated"
        main([
            "curate", "--corpus", str(corpus_path), "--out", str(curated),
            "--mock-reasoner", reasoner_script(tmp_path),
            "--mock-intervener", intervener_script(tmp_path),
        ])
        annotator = write_script(
            tmp_path / "annotator.json",
            ["FLAW: Trigger 4 at step 0: jumped straight to the answer", "NO FLAWS"],
        )
        reports = tmp_path / "reports.jsonl"
        code = main([
            "annotate", "--in", str(curated / "golden.jsonl"),
            "--out", str(reports), "--corpus", str(corpus_path),
            "--mock-annotator", annotator,
        ])
        assert code == EXIT_OK
        assert reports.exists()
        assert (tmp_path / "reports.distribution.json").exists()

        code = main([
            "agreement", "--llm", str(reports), "--human", str(reports),
        ])
        assert code == EXIT_OK


class TestReportCommand:
    def test_renders_eval_report(self, tmp_path, capsys):
        path = tmp_path / "eval.json"
        path.write_text(json.dumps({
            "per_benchmark": {"NL4Opt": 0.5, "OptMath": 1.0},
            "macro_avg": 0.75,
            "epsilon": 1e-4,
            "samples_per_problem": 8,
        }))
        assert main(["report", "--in", str(path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "Macro AVG" in out and "75.0" in out

    def test_renders_funnel(self, tmp_path, capsys):
        path = tmp_path / "funnel.json"
        path.write_text(json.dumps({
            "attempted": 4, "correct": 3, "flawless": 2, "emitted": 2,
            "mean_interventions": 1.5, "mean_response_tokens": 800.0,
            "token_modification_fraction": 0.02,
        }))
        assert main(["report", "--in", str(path)]) == EXIT_OK
        assert "0.026" in capsys.readouterr().out


class TestExitCodes:
    def test_unknown_subcommand_is_usage(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_missing_required_flag_is_usage(self):
        assert main(["split", "--out", "x"]) == EXIT_USAGE

    def test_bad_config_file_is_config_error(self, tmp_path, corpus_path):
        config = tmp_path / "config.json"
        config.write_text("{broken")
        code = main([
            "--config", str(config),
            "split", "--corpus", str(corpus_path), "--out", str(tmp_path / "o"),
        ])
        assert code == EXIT_CONFIG

    def test_missing_corpus_is_runtime(self, tmp_path):
        assert main([
            "split", "--corpus", str(tmp_path / "nope.jsonl"),
            "--out", str(tmp_path / "o"),
        ]) == EXIT_RUNTIME


class TestConfigPrecedence:
    def test_flag_beats_env_beats_config(self, tmp_path, monkeypatch):
        problems = [
            make_problem(pid=f"q{i}", description=f"p {i}", truth=1.0)
            for i in range(12)
        ]
        corpus = tmp_path / "big_corpus.jsonl"
        corpus.write_text(dump_corpus(problems))
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"seed": 3}))
        plan = tmp_path / "plan.json"
        plan.write_text(json.dumps({"NL4Opt": {"sft": 6, "rl": 0, "test": 6}}))

        def run(out, extra):
            main([
                "--config", str(config),
                "split", "--corpus", str(corpus),
                "--out", str(tmp_path / out), "--plan", str(plan), *extra,
            ])
            return (tmp_path / out / "sft.jsonl").read_bytes()

        from_config = run("a", [])
        monkeypatch.setenv("ORFLOW_SEED", "9")
        from_env = run("b", [])
        from_flag = run("c", ["--seed", "3"])
        assert from_env != from_config      # env overrides config
        assert from_flag == from_config     # flag overrides env, back to seed 3

    def test_bad_env_value_is_config_error(self, tmp_path, monkeypatch, corpus_path):
        monkeypatch.setenv("ORFLOW_SEED", "not-a-number")
        code = main([
            "split", "--corpus", str(corpus_path), "--out", str(tmp_path / "o"),
        ])
        assert code == EXIT_CONFIG


class TestAtomicWrite:
    def test_writes_and_leaves_no_temp_files(self, tmp_path):
        target = tmp_path / "deep" / "file.txt"
        atomic_write(target, "content")
        assert target.read_text() == "content"
        assert [p.name for p in target.parent.iterdir()] == ["file.txt"]

    def test_failed_write_leaves_existing_file_intact(self, tmp_path):
        target = tmp_path / "file.txt"
        atomic_write(target, "original")

        class Boom:
            def __radd__(self, other):
                raise RuntimeError("boom")

        with pytest.raises(TypeError):
            atomic_write(target, Boom())  # not str/bytes: write fails
        assert target.read_text() == "original"
        assert [p.name for p in target.parent.iterdir()] == ["file.txt"]

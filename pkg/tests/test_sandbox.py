"""Fence extraction, output formatting, budgets, and the runner protocol."""

import json
import sys
import textwrap
import time

import pytest

from orflow.sandbox import (
    BudgetExhausted,
    CodeBlock,
    ExecutionLimits,
    ExecutionSession,
    ExitStatus,
    RunnerPool,
    RunnerUnavailable,
    SandboxResult,
    TRUNCATION_NOTICE,
    UnterminatedFence,
    extract_code_block,
    first_complete_block,
    format_output_block,
)


class TestExtractCodeBlock:
    def test_tail_block(self):
        block = extract_code_block("Let me solve.\n```python\nprint(1)\n```")
        assert block.code == "print(1)"
        assert block.language == "python"

    def test_no_fences_is_none(self):
        assert extract_code_block("no code at all") is None

    def test_unterminated_fence_raises(self):
        with pytest.raises(UnterminatedFence):
            extract_code_block("```python\nx=1")

    def test_block_followed_by_prose_is_not_tail(self):
        text = "```python\nx=1\n```\nand therefore the answer is 5"
        assert extract_code_block(text) is None

    def test_trailing_whitespace_after_close_is_still_tail(self):
        block = extract_code_block("a\n```python\nx=1\n```\n\n")
        assert block.code == "x=1"

    def test_non_python_tail_is_none(self):
        assert extract_code_block("a\n```latex\nx\n```\n") is None

    def test_py_alias_is_executable(self):
        assert extract_code_block("a\n```py\nx=1\n```\n").code == "x=1"

    def test_last_of_several_blocks_wins(self):
        text = "```python\na=1\n```\nmid\n```python\nb=2\n```\n"
        assert extract_code_block(text).code == "b=2"

    def test_span_reconstructs_reasoning(self):
        text = "Reasoning first.\n```python\ncode\n```\n"
        block = extract_code_block(text)
        assert text[: block.start] == "Reasoning first.\n"
        assert text[block.end :] == ""

    def test_first_complete_block_for_overgeneration(self):
        text = "t\n```python\na=1\n```\nmore\n```python\nb=2\n```\n"
        assert first_complete_block(text).code == "a=1"


class TestFormatOutputBlock:
    def test_plain_stdout(self):
        r = SandboxResult(stdout="4\n", stderr="", exit=ExitStatus.OK)
        assert format_output_block(r) == "```output\n4\n```"

    def test_timeout_notice(self):
        r = SandboxResult(
            stdout="", stderr="", exit=ExitStatus.TIMEOUT, wall_time_used=2.0
        )
        block = format_output_block(r)
        lines = block.split("\n")
        assert lines[1] == "[execution timed out after 2s]"

    def test_truncation_notice_is_last(self):
        r = SandboxResult(stdout="data", stderr="", exit=ExitStatus.OK, truncated=True)
        block = format_output_block(r)
        assert block.endswith(TRUNCATION_NOTICE + "\n```")

    def test_stderr_lines_are_prefixed(self):
        r = SandboxResult(
            stdout="", stderr="Traceback\nNameError: name 'h' is not defined\n",
            exit=ExitStatus.NONZERO, exit_code=1,
        )
        block = format_output_block(r)
        assert "stderr: NameError: name 'h' is not defined" in block
        assert "[process exited with code 1]" in block

    def test_empty_result_still_renders_a_block(self):
        r = SandboxResult(stdout="", stderr="", exit=ExitStatus.OK)
        assert format_output_block(r) == "```output\n[no output]\n```"


class TestExecutionSession:
    def test_budget_refuses_fifth_execution(self):
        class CountingRunner:
            calls = 0

            def run(self, code, limits):
                self.calls += 1
                return SandboxResult(stdout="", stderr="", exit=ExitStatus.OK)

        runner = CountingRunner()
        session = ExecutionSession(runner, ExecutionLimits())
        for _ in range(4):
            session.execute("x")
        with pytest.raises(BudgetExhausted):
            session.execute("x")
        assert runner.calls == 4  # the refused attempt never executed

    def test_prefilled_usage_counts_against_budget(self):
        session = ExecutionSession(None, ExecutionLimits(), already_used=4)
        with pytest.raises(BudgetExhausted):
            session.execute("x")

    def test_limits_must_be_positive(self):
        with pytest.raises(ValueError):
            ExecutionLimits(wall_time=0)
        with pytest.raises(ValueError):
            ExecutionLimits(output_cap=-1)


def make_shim_script(tmp_path, body):
    path = tmp_path / "shim.py"
    path.write_text(textwrap.dedent(body))
    return [sys.executable, str(path)]


ECHO_SHIM = """
    import json, sys
    for line in sys.stdin:
        req = json.loads(line)
        print(json.dumps({
            "stdout": "echo:" + req["code"],
            "stderr": "",
            "exit": "ok",
            "wall_time_used": 0.01,
            "truncated": False,
        }), flush=True)
"""

SILENT_SHIM = """
    import sys, time
    for line in sys.stdin:
        time.sleep(60)
"""


class TestRunnerPool:
    def test_round_trip_over_wire_protocol(self, tmp_path):
        with RunnerPool(make_shim_script(tmp_path, ECHO_SHIM)) as pool:
            result = pool.run("print(1)", ExecutionLimits(wall_time=5))
            assert result.stdout == "echo:print(1)"
            assert result.exit is ExitStatus.OK
            # the shim is reused across requests
            again = pool.run("x=2", ExecutionLimits(wall_time=5))
            assert again.stdout == "echo:x=2"

    def test_wedged_runner_hits_supervision_deadline(self, tmp_path):
        with RunnerPool(make_shim_script(tmp_path, SILENT_SHIM)) as pool:
            start = time.monotonic()
            result = pool.run("x", ExecutionLimits(wall_time=0.5))
            elapsed = time.monotonic() - start
            assert result.exit is ExitStatus.RUNNER_ERROR
            assert elapsed < 0.5 + 2.0 + 1.0  # wall_time + grace + slack

    def test_unlaunchable_runner(self):
        pool = RunnerPool(["/nonexistent/runner-binary"])
        with pytest.raises(RunnerUnavailable):
            pool.run("x", ExecutionLimits())

    def test_nonzero_exit_parses_from_wire(self):
        from orflow.sandbox import result_from_wire

        result = result_from_wire(
            {"stdout": "", "stderr": "", "exit": "nonzero:3",
             "wall_time_used": 0.1, "truncated": False}
        )
        assert result.exit is ExitStatus.NONZERO
        assert result.exit_code == 3

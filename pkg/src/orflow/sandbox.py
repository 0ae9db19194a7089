"""Orchestrator side of the code-interpreter environment.

Extracts fenced code blocks from generated text, dispatches them to a
runner process over a newline-delimited JSON protocol, formats execution
output back into transcript fences, and enforces the per-trajectory
execution budget.

Runner wire protocol (shared with the sandbox-runner package), one JSON
object per line, UTF-8:

    request:  {"code": str, "wall_time": float, "memory": int, "output_cap": int}
    response: {"stdout": str, "stderr": str, "exit": str,
               "wall_time_used": float, "truncated": bool}

where "exit" is one of "ok", "timeout", "memory_killed", "runner_error",
or "nonzero:<code>".
"""

from __future__ import annotations

import importlib.util
import json
import os
import queue
import re
import shlex
import subprocess
import sys
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol, Sequence, runtime_checkable

SUPERVISION_GRACE = 2.0  # seconds past wall_time before a runner is declared wedged

RUNNER_CMD_ENV = "ORFLOW_RUNNER_CMD"


class SandboxError(Exception):
    pass


class UnterminatedFence(SandboxError):
    """A code fence opened but generation ended before it closed."""


class BudgetExhausted(SandboxError):
    """The per-trajectory execution cap would be exceeded."""


class RunnerUnavailable(SandboxError):
    pass


class ExitStatus(str, Enum):
    OK = "ok"
    NONZERO = "nonzero"
    TIMEOUT = "timeout"
    MEMORY_KILLED = "memory_killed"
    RUNNER_ERROR = "runner_error"


@dataclass(frozen=True)
class ExecutionLimits:
    wall_time: float = 30.0
    memory: int = 1 << 30          # 1 GiB
    output_cap: int = 8192         # 8 KiB
    max_executions_per_trajectory: int = 4

    def __post_init__(self):
        for name in ("wall_time", "memory", "output_cap", "max_executions_per_trajectory"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class SandboxResult:
    stdout: str
    stderr: str
    exit: ExitStatus
    exit_code: Optional[int] = None
    wall_time_used: float = 0.0
    truncated: bool = False

    def __post_init__(self):
        if self.exit is ExitStatus.NONZERO and self.exit_code is None:
            raise ValueError("nonzero exit requires exit_code")


def result_from_wire(data: dict) -> SandboxResult:
    exit_field = data["exit"]
    exit_code = None
    if exit_field.startswith("nonzero:"):
        status = ExitStatus.NONZERO
        exit_code = int(exit_field.split(":", 1)[1])
    else:
        status = ExitStatus(exit_field)
    return SandboxResult(
        stdout=data["stdout"],
        stderr=data["stderr"],
        exit=status,
        exit_code=exit_code,
        wall_time_used=float(data["wall_time_used"]),
        truncated=bool(data["truncated"]),
    )


# --- fenced code blocks -------------------------------------------------------

_FENCE_LINE = re.compile(r"^```([^\n`]*)\s*$")
_EXECUTABLE_LANGS = {"python", "py"}


@dataclass(frozen=True)
class CodeBlock:
    code: str
    start: int  # offset of the opening fence line
    end: int    # offset just past the closing fence (and its newline, if any)
    language: str


def _scan_blocks(text: str) -> tuple[list[CodeBlock], Optional[int]]:
    """All complete fenced blocks plus the offset of an unclosed opener."""
    blocks: list[CodeBlock] = []
    open_at: Optional[int] = None
    open_lang = ""
    content_start = 0
    pos = 0
    for line in text.splitlines(keepends=True):
        stripped = line.rstrip("\n").rstrip()
        match = _FENCE_LINE.match(stripped)
        if match:
            if open_at is None:
                open_at = pos
                open_lang = match.group(1).strip().lower()
                content_start = pos + len(line)
            elif stripped == "```":
                blocks.append(
                    CodeBlock(
                        code=text[content_start:pos].rstrip("\n"),
                        start=open_at,
                        end=pos + len(line),
                        language=open_lang,
                    )
                )
                open_at = None
        pos += len(line)
    return blocks, open_at


def extract_code_block(generated: str) -> Optional[CodeBlock]:
    """The executable code block terminating `generated`, if any.

    Returns the last complete python-fenced block when only whitespace
    follows it; returns None when generation ended in prose or with a
    non-executable fence; raises UnterminatedFence when a fence opened but
    never closed (generation was cut mid-block).
    """
    blocks, open_at = _scan_blocks(generated)
    if open_at is not None:
        raise UnterminatedFence(
            f"code fence opened at offset {open_at} was never closed"
        )
    if not blocks:
        return None
    tail = blocks[-1]
    if generated[tail.end:].strip():
        return None
    if tail.language not in _EXECUTABLE_LANGS:
        return None
    return tail


def first_complete_block(generated: str) -> Optional[CodeBlock]:
    """The earliest complete executable block, for endpoints without stop
    support where the engine over-generates and discards the excess."""
    blocks, _ = _scan_blocks(generated)
    for block in blocks:
        if block.language in _EXECUTABLE_LANGS:
            return block
    return None


def contains_executable_block(generated: str) -> bool:
    return first_complete_block(generated) is not None


# --- output formatting --------------------------------------------------------

TRUNCATION_NOTICE = "[output truncated]"


def format_output_block(r: SandboxResult) -> str:
    """Render an execution result as the transcript's output fence."""
    parts: list[str] = []
    if r.stdout:
        parts.append(r.stdout.rstrip("\n"))
    if r.stderr:
        parts.append(
            "\n".join("stderr: " + line for line in r.stderr.rstrip("\n").split("\n"))
        )
    if r.exit is ExitStatus.TIMEOUT:
        parts.append(f"[execution timed out after {r.wall_time_used:g}s]")
    elif r.exit is ExitStatus.MEMORY_KILLED:
        parts.append("[execution killed: memory limit exceeded]")
    elif r.exit is ExitStatus.RUNNER_ERROR:
        parts.append("[runner error]")
    elif r.exit is ExitStatus.NONZERO:
        parts.append(f"[process exited with code {r.exit_code}]")
    if r.truncated:
        parts.append(TRUNCATION_NOTICE)
    body = "\n".join(parts) if parts else "[no output]"
    return "```output\n" + body + "\n```"


# --- runners -------------------------------------------------------------------

@runtime_checkable
class CodeRunner(Protocol):
    """Anything that can execute one code payload under limits."""

    def run(self, code: str, limits: ExecutionLimits) -> SandboxResult: ...


class _Shim:
    """One long-lived runner subprocess plus its reader thread."""

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        try:
            self.proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise RunnerUnavailable(f"cannot launch runner {self.command}: {exc}") from None
        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, payload: dict, deadline: float) -> dict:
        assert self.proc.stdin is not None
        try:
            self.proc.stdin.write(json.dumps(payload) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise RunnerUnavailable(f"runner pipe broken: {exc}") from None
        try:
            line = self._lines.get(timeout=deadline)
        except queue.Empty:
            raise TimeoutError() from None
        if line is None:
            raise RunnerUnavailable("runner exited mid-request")
        return json.loads(line)

    def kill(self):
        try:
            self.proc.kill()
            self.proc.wait(timeout=5)
        except Exception:
            pass


def default_runner_command() -> list[str]:
    """Resolve the runner launch command.

    Order: the ORFLOW_RUNNER_CMD environment variable (shell-split), then an
    installed `sandbox_runner` module run with the current interpreter.
    """
    env_cmd = os.environ.get(RUNNER_CMD_ENV)
    if env_cmd:
        return shlex.split(env_cmd)
    if importlib.util.find_spec("sandbox_runner") is not None:
        return [sys.executable, "-m", "sandbox_runner"]
    raise RunnerUnavailable(
        "no runner configured: install the sandbox-runner package or set "
        f"{RUNNER_CMD_ENV}"
    )


class RunnerPool:
    """A pool of runner shims sized to worker parallelism.

    Each `run` call checks a shim out for the duration of one execution, so
    a trajectory's sequential executions may be served by any shim; state
    never leaks because the shim runs every request in a fresh child
    process.
    """

    def __init__(self, command: Optional[Sequence[str]] = None, size: int = 1):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        # Resolved lazily so flows that never execute code need no runner.
        self._command = list(command) if command else None
        self.size = size
        self._idle: list[_Shim] = []
        self._spawned = 0
        self._cond = threading.Condition()
        self._closed = False

    @property
    def command(self) -> list[str]:
        if self._command is None:
            self._command = default_runner_command()
        return self._command

    def _checkout(self) -> _Shim:
        with self._cond:
            while True:
                if self._closed:
                    raise RunnerUnavailable("pool is closed")
                if self._idle:
                    return self._idle.pop()
                if self._spawned < self.size:
                    self._spawned += 1
                    break
                self._cond.wait()
        try:
            return _Shim(self.command)
        except BaseException:
            with self._cond:
                self._spawned -= 1
                self._cond.notify()
            raise

    def _checkin(self, shim: Optional[_Shim]):
        with self._cond:
            if shim is not None and not self._closed:
                self._idle.append(shim)
            else:
                self._spawned -= 1
                if shim is not None:
                    shim.kill()
            self._cond.notify()

    def run(self, code: str, limits: ExecutionLimits) -> SandboxResult:
        payload = {
            "code": code,
            "wall_time": limits.wall_time,
            "memory": limits.memory,
            "output_cap": limits.output_cap,
        }
        shim = self._checkout()
        try:
            data = shim.request(payload, deadline=limits.wall_time + SUPERVISION_GRACE)
            result = result_from_wire(data)
        except TimeoutError:
            # The shim failed to answer inside wall_time + grace: treat it as
            # wedged, replace it, and report the breach.
            shim.kill()
            self._checkin(None)
            return SandboxResult(
                stdout="",
                stderr="runner did not respond within the supervision deadline",
                exit=ExitStatus.RUNNER_ERROR,
                wall_time_used=limits.wall_time + SUPERVISION_GRACE,
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            shim.kill()
            self._checkin(None)
            return SandboxResult(
                stdout="",
                stderr=f"runner protocol error: {exc}",
                exit=ExitStatus.RUNNER_ERROR,
            )
        except RunnerUnavailable:
            shim.kill()
            self._checkin(None)
            raise
        self._checkin(shim)
        return result

    def close(self):
        with self._cond:
            self._closed = True
            idle, self._idle = self._idle, []
            self._cond.notify_all()
        for shim in idle:
            shim.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ExecutionSession:
    """Per-trajectory execution budget guard around a runner."""

    def __init__(self, runner: CodeRunner, limits: ExecutionLimits, already_used: int = 0):
        self.runner = runner
        self.limits = limits
        self.used = already_used

    @property
    def remaining(self) -> int:
        return self.limits.max_executions_per_trajectory - self.used

    def execute(self, code: str) -> SandboxResult:
        if self.used >= self.limits.max_executions_per_trajectory:
            raise BudgetExhausted(
                f"execution budget of {self.limits.max_executions_per_trajectory} exhausted"
            )
        result = self.runner.run(code, self.limits)
        self.used += 1
        return result

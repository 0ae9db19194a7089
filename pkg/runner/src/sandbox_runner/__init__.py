"""Execution shim for model-generated solver code.

A long-lived loop reads one JSON request per line on stdin and answers one
JSON response per line on stdout:

    request:  {"code": str, "wall_time": float, "memory": int, "output_cap": int}
    response: {"stdout": str, "stderr": str, "exit": str,
               "wall_time_used": float, "truncated": bool}

"exit" is "ok", "timeout", "memory_killed", "runner_error", or
"nonzero:<code>". Every request runs in a fresh child process under
wall-clock, CPU, and address-space limits, so no state (variables, imports,
files in the scratch directory) survives between requests. Internal shim
failures are reported as runner_error responses; the loop itself never
dies on a bad request.

If the real `pulp` distribution is not importable, a bundled scipy-backed
compatibility module is appended to the child's import path so PuLP-style
solver scripts still run. The SANDBOX_RUNNER_SOLVER_PATH environment
variable prepends extra import paths for solver-library overrides.
"""

from __future__ import annotations

import importlib.util
import json
import os
import resource
import signal
import subprocess
import sys
import tempfile
import time
from importlib import metadata
from pathlib import Path

__version__ = "0.1.0"

VENDOR_PATH = Path(__file__).resolve().parent / "_vendor"
SOLVER_PATH_ENV = "SANDBOX_RUNNER_SOLVER_PATH"

DEFAULT_WALL_TIME = 30.0
DEFAULT_MEMORY = 1 << 30
DEFAULT_OUTPUT_CAP = 8192


def _real_pulp_installed() -> bool:
    """Whether a real pulp distribution exists in the interpreter's
    site-packages (which the child inherits); sys.path edits in this
    process must not influence the answer."""
    for name in ("pulp", "PuLP"):
        try:
            metadata.distribution(name)
            return True
        except metadata.PackageNotFoundError:
            pass
    return False


def _child_env() -> dict:
    env = os.environ.copy()
    parts = []
    override = env.get(SOLVER_PATH_ENV)
    if override:
        parts.append(override)
    if env.get("PYTHONPATH"):
        parts.append(env["PYTHONPATH"])
    if not _real_pulp_installed():
        parts.append(str(VENDOR_PATH))
    if parts:
        env["PYTHONPATH"] = os.pathsep.join(parts)
    return env


def _limiter(memory: int, wall_time: float):
    cpu_seconds = max(1, int(wall_time) + 1)

    def apply_limits():
        resource.setrlimit(resource.RLIMIT_AS, (memory, memory))
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds + 1))

    return apply_limits


def _cap_output(stdout: bytes, stderr: bytes, cap: int) -> tuple[bytes, bytes, bool]:
    if len(stdout) + len(stderr) <= cap:
        return stdout, stderr, False
    if len(stdout) >= cap:
        return stdout[:cap], b"", True
    return stdout, stderr[: cap - len(stdout)], True


def _classify(returncode: int, timed_out: bool, stderr: bytes) -> str:
    if timed_out:
        return "timeout"
    if returncode == 0:
        return "ok"
    if returncode < 0:
        sig = -returncode
        if sig == signal.SIGXCPU:
            return "timeout"
        if sig == signal.SIGKILL:
            return "memory_killed"
        return f"nonzero:{returncode}"
    if b"MemoryError" in stderr[-2048:]:
        return "memory_killed"
    return f"nonzero:{returncode}"


def run_request(request: dict) -> dict:
    code = request.get("code")
    if not isinstance(code, str):
        raise ValueError("request must carry a string 'code' field")
    wall_time = float(request.get("wall_time", DEFAULT_WALL_TIME))
    memory = int(request.get("memory", DEFAULT_MEMORY))
    output_cap = int(request.get("output_cap", DEFAULT_OUTPUT_CAP))
    if min(wall_time, memory, output_cap) <= 0:
        raise ValueError("limits must be strictly positive")

    with tempfile.TemporaryDirectory(prefix="sandbox-run-") as scratch:
        script = Path(scratch) / "snippet.py"
        script.write_text(code, encoding="utf-8")
        start = time.monotonic()
        child = subprocess.Popen(
            [sys.executable, str(script)],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            stdin=subprocess.DEVNULL,
            cwd=scratch,
            env=_child_env(),
            preexec_fn=_limiter(memory, wall_time),
            start_new_session=True,
        )
        timed_out = False
        try:
            stdout, stderr = child.communicate(timeout=wall_time)
        except subprocess.TimeoutExpired:
            timed_out = True
            try:
                os.killpg(child.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            stdout, stderr = child.communicate()
        wall_time_used = time.monotonic() - start

    stdout, stderr, truncated = _cap_output(stdout, stderr, output_cap)
    return {
        "stdout": stdout.decode("utf-8", errors="replace"),
        "stderr": stderr.decode("utf-8", errors="replace"),
        "exit": _classify(child.returncode, timed_out, stderr),
        "wall_time_used": round(wall_time_used, 3),
        "truncated": truncated,
    }


def _error_response(message: str) -> dict:
    return {
        "stdout": "",
        "stderr": message,
        "exit": "runner_error",
        "wall_time_used": 0.0,
        "truncated": False,
    }


def manifest() -> dict:
    """What this runner environment provides to solver code."""
    libraries = {}
    if _real_pulp_installed():
        libraries["pulp"] = "installed"
    else:
        libraries["pulp"] = "bundled scipy-backed compatibility module"
    for name in ("scipy", "numpy"):
        spec = importlib.util.find_spec(name)
        libraries[name] = "installed" if spec else "missing"
    return {
        "runner_version": __version__,
        "python": sys.version.split()[0],
        "solver_libraries": libraries,
        "solver_path_env": SOLVER_PATH_ENV,
    }


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--manifest" in argv:
        json.dump(manifest(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            response = run_request(json.loads(line))
        except Exception as exc:  # never kill the loop on a bad request
            response = _error_response(f"{type(exc).__name__}: {exc}")
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()
    return 0

"""Command-line pipeline: split, curate, emit-sft, evaluate, annotate,
agreement, report.

Configuration precedence is CLI flag > environment variable > config file >
built-in default. Endpoint URLs and API credentials are read only from the
environment (ORFLOW_<ROLE>_BASE_URL / _API_KEY / _MODEL); the config file
holds everything else. All outputs are written atomically (temp file in the
target directory, then rename), so an interrupted run never leaves a
truncated file behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from .annotator import aggregate_distribution, annotator_agreement, classify_flaws
from .calm import CalmConfig, calm_loop
from .client import (
    EndpointConfig,
    HttpChatClient,
    Role,
    SamplingConfig,
    ScriptedClient,
    load_script,
)
from .datasets import (
    SplitCounts,
    SplitPlan,
    split_corpus,
    dump_corpus,
    emit_sft_dataset,
    load_corpus,
    render_funnel,
    FunnelMetrics,
)
from .engine import FlowBudgets
from .grading import EvalConfig, EvalReport, evaluate_suite, render_eval_table
from .model import (
    Benchmark,
    CalmStatus,
    MalformedRecord,
    RecordError,
    Split,
    deserialize_trajectory,
    flaw_report_from_dict,
    flaw_report_to_dict,
    outcome_from_dict,
    outcome_to_dict,
    serialize_trajectory,
)
from .sandbox import ExecutionLimits, RunnerPool

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3


class ConfigError(Exception):
    pass


def atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, temp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as handle:
            handle.write(data)
        os.replace(temp, path)
    except BaseException:
        try:
            os.unlink(temp)
        except OSError:
            pass
        raise


def _setting(args_value, env_key: str, config: dict, config_key: str, default, cast):
    """Resolve one setting: CLI flag > environment > config file > default."""
    if args_value is not None:
        return args_value
    env_value = os.environ.get(f"ORFLOW_{env_key}")
    if env_value is not None:
        try:
            return cast(env_value)
        except ValueError as exc:
            raise ConfigError(f"bad ORFLOW_{env_key}: {exc}") from None
    if config_key in config:
        return cast(config[config_key])
    return default


def _load_config(path: Optional[str]) -> dict:
    if not path:
        path = os.environ.get("ORFLOW_CONFIG")
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return data


def _sampling_from(config: dict, key: str, default: SamplingConfig) -> SamplingConfig:
    block = config.get(key)
    if block is None:
        return default
    try:
        return SamplingConfig(
            temperature=block.get("temperature", default.temperature),
            top_p=block.get("top_p", default.top_p),
            max_tokens=block.get("max_tokens", default.max_tokens),
            stop_sequences=tuple(block.get("stop_sequences", default.stop_sequences)),
            seed=block.get("seed", default.seed),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"bad sampling block {key!r}: {exc}") from None


def _budgets_from(config: dict) -> FlowBudgets:
    block = config.get("budgets") or {}
    limits_block = block.get("limits") or {}
    try:
        max_executions = int(block.get("max_executions", 4))
        limits = ExecutionLimits(
            wall_time=float(limits_block.get("wall_time", 30.0)),
            memory=int(limits_block.get("memory", 1 << 30)),
            output_cap=int(limits_block.get("output_cap", 8192)),
            max_executions_per_trajectory=max(1, max_executions),
        )
        return FlowBudgets(
            max_executions=max_executions,
            max_response_tokens=int(block.get("max_response_tokens", 16384)),
            limits=limits,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad budgets block: {exc}") from None


def _template_from(config: dict, key: str) -> Optional[str]:
    block = config.get("prompts") or {}
    path = block.get(key)
    if not path:
        return None
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read prompt template {key!r}: {exc}") from None


def _client_for(role: Role, mock_path: Optional[str], config: dict):
    if mock_path:
        return ScriptedClient(load_script(mock_path))
    endpoints_block = config.get("endpoints") or {}
    role_block = endpoints_block.get(role.value) or {}
    endpoint = EndpointConfig.from_env(
        role,
        model=role_block.get("model"),
        requests_per_minute=role_block.get("requests_per_minute"),
    )
    return HttpChatClient({role: endpoint})


def _runner_from(args, config: dict) -> RunnerPool:
    command = None
    if getattr(args, "runner_cmd", None):
        command = args.runner_cmd.split()
    elif config.get("runner_command"):
        command = list(config["runner_command"])
    size = _setting(getattr(args, "workers", None), "WORKERS", config, "workers", 1, int)
    return RunnerPool(command=command, size=max(1, size))


def _read_jsonl(path: str):
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if line.strip():
                yield lineno, line


# --- subcommands ----------------------------------------------------------------

def cmd_split(args, config) -> int:
    problems = load_corpus(args.corpus)
    if args.plan:
        with open(args.plan, encoding="utf-8") as handle:
            raw = json.load(handle)
        counts = {
            Benchmark(name): SplitCounts(*[entry[k] for k in ("sft", "rl", "test")])
            for name, entry in raw.items()
        }
    else:
        counts = None
    seed = _setting(args.seed, "SEED", config, "seed", 0, int)
    plan = (
        SplitPlan(counts=counts, seed=seed) if counts else SplitPlan.default(seed=seed)
    )
    result = split_corpus(problems, plan)
    out = Path(args.out)
    atomic_write(out / "sft.jsonl", dump_corpus(result.sft))
    atomic_write(out / "rl.jsonl", dump_corpus(result.rl))
    atomic_write(out / "test.jsonl", dump_corpus(result.test))
    print(
        f"split {len(problems)} problems -> "
        f"{len(result.sft)} SFT / {len(result.rl)} RL / {len(result.test)} Test "
        f"(seed {seed})"
    )
    return EXIT_OK


def cmd_curate(args, config) -> int:
    problems = load_corpus(args.corpus)
    if args.split != "all":
        wanted = Split(args.split)
        problems = [p for p in problems if p.split is wanted]
    if args.limit:
        problems = problems[: args.limit]
    cfg = CalmConfig(
        max_interventions=_setting(
            args.max_interventions, "MAX_INTERVENTIONS", config, "max_interventions", 5, int
        ),
        reasoner_sampling=_sampling_from(
            config, "reasoner_sampling", SamplingConfig(temperature=0.6, top_p=0.95)
        ),
        intervener_sampling=_sampling_from(
            config,
            "intervener_sampling",
            SamplingConfig(temperature=1.0, top_p=0.95, max_tokens=4096),
        ),
        budgets=_budgets_from(config),
        epsilon=_setting(args.epsilon, "EPSILON", config, "epsilon", 1e-4, float),
    )
    reasoner = _client_for(Role.REASONER, args.mock_reasoner, config)
    intervener = _client_for(Role.INTERVENER, args.mock_intervener, config)
    out = Path(args.out)
    workers = max(1, _setting(args.workers, "WORKERS", config, "workers", 1, int))

    def run_one(problem):
        return calm_loop(
            problem,
            reasoner,
            intervener,
            cfg,
            runner=pool,
            reasoner_template=_template_from(config, "reasoner"),
            intervener_template=_template_from(config, "intervener"),
        )

    # Loops for different problems are independent; outputs are assembled in
    # corpus order so completion order never shows. Mocked runs should keep
    # --workers 1: concurrent loops would race for script entries.
    results: dict[str, object] = {}
    with _runner_from(args, config) as pool:
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as executor:
                futures = {p.id: executor.submit(run_one, p) for p in problems}
            for pid, future in futures.items():
                try:
                    results[pid] = future.result()
                except Exception as exc:
                    results[pid] = exc
        else:
            for problem in problems:
                try:
                    results[problem.id] = run_one(problem)
                except Exception as exc:
                    results[problem.id] = exc
    outcomes = []
    failures = 0
    for problem in problems:
        result = results[problem.id]
        if isinstance(result, Exception):
            failures += 1
            print(f"curation failed for {problem.id}: {result}", file=sys.stderr)
            continue
        outcomes.append(result)
    atomic_write(
        out / "outcomes.jsonl",
        "".join(
            json.dumps(outcome_to_dict(o), ensure_ascii=False) + "\n" for o in outcomes
        ),
    )
    golden = [o for o in outcomes if o.status is CalmStatus.GOLDEN_ACCEPTED]
    flagged = [o for o in outcomes if o.status is CalmStatus.CORRECT_BUT_FLAGGED]
    atomic_write(
        out / "golden.jsonl",
        b"".join(serialize_trajectory(o.trajectory) for o in golden),
    )
    atomic_write(
        out / "flagged.jsonl",
        b"".join(serialize_trajectory(o.trajectory) for o in flagged),
    )
    _, funnel = emit_sft_dataset(
        outcomes,
        {p.id: p for p in problems},
        prompt_template=_template_from(config, "reasoner"),
    )
    atomic_write(out / "funnel.json", json.dumps(funnel.to_dict(), indent=2) + "\n")
    print(render_funnel(funnel), end="")
    if failures:
        print(f"{failures} problem(s) failed; partial outputs flagged", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_emit_sft(args, config) -> int:
    outcomes = []
    for lineno, line in _read_jsonl(args.infile):
        outcomes.append(outcome_from_dict(json.loads(line), path=f"line {lineno}"))
    problems = {p.id: p for p in load_corpus(args.corpus)}
    records, funnel = emit_sft_dataset(
        outcomes, problems, prompt_template=_template_from(config, "reasoner")
    )
    atomic_write(
        Path(args.out),
        "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records),
    )
    funnel_path = Path(args.funnel) if args.funnel else Path(args.out).with_suffix(
        ".funnel.json"
    )
    atomic_write(funnel_path, json.dumps(funnel.to_dict(), indent=2) + "\n")
    print(render_funnel(funnel), end="")
    return EXIT_OK


def cmd_evaluate(args, config) -> int:
    problems = load_corpus(args.corpus)
    test = [p for p in problems if p.split in (Split.TEST, Split.UNASSIGNED)]
    cfg = EvalConfig(
        samples_per_problem=_setting(
            args.samples, "SAMPLES", config, "samples_per_problem", 8, int
        ),
        epsilon=_setting(args.epsilon, "EPSILON", config, "epsilon", 1e-4, float),
        sampling=_sampling_from(
            config, "eval_sampling", SamplingConfig(temperature=0.6, top_p=0.95)
        ),
        budgets=_budgets_from(config),
    )
    reasoner = _client_for(Role.REASONER, args.mock_reasoner, config)
    benchmarks = (
        [Benchmark(b) for b in args.benchmarks.split(",")] if args.benchmarks else None
    )
    with _runner_from(args, config) as pool:
        report = evaluate_suite(
            test,
            reasoner,
            cfg,
            runner=pool,
            prompt_template=_template_from(config, "reasoner"),
            workers=_setting(args.workers, "WORKERS", config, "workers", 1, int),
            benchmarks=benchmarks,
        )
    atomic_write(Path(args.out), json.dumps(report.to_dict(), indent=2) + "\n")
    print(render_eval_table(report), end="")
    return EXIT_OK


def cmd_annotate(args, config) -> int:
    problems = {p.id: p for p in load_corpus(args.corpus)}
    annotator = _client_for(Role.ANNOTATOR, args.mock_annotator, config)
    reports = []
    for lineno, line in _read_jsonl(args.infile):
        trajectory = deserialize_trajectory(line)
        problem = problems.get(trajectory.problem_id)
        if problem is None:
            raise MalformedRecord(
                f"line {lineno}.problem_id",
                f"no corpus problem {trajectory.problem_id!r}",
            )
        reports.append(
            classify_flaws(
                trajectory,
                problem,
                annotator,
                template=_template_from(config, "classifier"),
            )
        )
    atomic_write(
        Path(args.out),
        "".join(
            json.dumps(flaw_report_to_dict(r), ensure_ascii=False) + "\n"
            for r in reports
        ),
    )
    distribution = aggregate_distribution(reports, problems)
    dist_path = Path(args.out).with_suffix(".distribution.json")
    atomic_write(dist_path, json.dumps(distribution.to_dict(), indent=2) + "\n")
    print(f"annotated {len(reports)} trajectories -> {args.out}")
    return EXIT_OK


def cmd_agreement(args, config) -> int:
    def read_reports(path):
        return [
            flaw_report_from_dict(json.loads(line), path=f"line {lineno}")
            for lineno, line in _read_jsonl(path)
        ]

    accuracy = annotator_agreement(read_reports(args.llm), read_reports(args.human))
    print(
        f"agreement: {accuracy:.4f} "
        "(matched instances / human-labeled instances, trigger-level match)"
    )
    if args.out:
        atomic_write(Path(args.out), json.dumps({"agreement": accuracy}) + "\n")
    return EXIT_OK


def cmd_report(args, config) -> int:
    with open(args.infile, encoding="utf-8") as handle:
        data = json.load(handle)
    if "per_benchmark" in data:
        report = EvalReport(
            per_benchmark={
                Benchmark(k): v for k, v in data["per_benchmark"].items()
            },
            macro_avg=data["macro_avg"],
            per_problem=(),
            epsilon=data.get("epsilon", 1e-4),
            samples_per_problem=data.get("samples_per_problem", 8),
        )
        print(render_eval_table(report), end="")
    elif "attempted" in data:
        funnel = FunnelMetrics(
            attempted=data["attempted"],
            correct=data["correct"],
            flawless=data["flawless"],
            emitted=data["emitted"],
            mean_interventions=data["mean_interventions"],
            mean_response_tokens=data["mean_response_tokens"],
            token_modification_fraction=data["token_modification_fraction"],
            reference_fraction=data.get("reference_fraction", 0.026),
        )
        print(render_funnel(funnel), end="")
    else:
        raise ConfigError("unrecognized report file (neither eval nor funnel)")
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orflow",
        description="Reflective reasoning-flow curation and evaluation pipeline",
    )
    parser.add_argument("--config", help="JSON config file (or ORFLOW_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="partition a corpus into SFT/RL/Test")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--plan", help="JSON file of per-benchmark {sft, rl, test} counts")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("curate", help="run the correction loop over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="SFT", help="corpus split to curate, or 'all'")
    p.add_argument("--limit", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-interventions", type=int, dest="max_interventions")
    p.add_argument("--workers", type=int)
    p.add_argument("--runner-cmd", dest="runner_cmd")
    p.add_argument("--mock-reasoner", dest="mock_reasoner")
    p.add_argument("--mock-intervener", dest="mock_intervener")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("emit-sft", help="filter outcomes into SFT records")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--funnel")
    p.set_defaults(func=cmd_emit_sft)

    p = sub.add_parser("evaluate", help="pass@1 evaluation over the test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--benchmarks", help="comma-separated benchmark names")
    p.add_argument("--workers", type=int)
    p.add_argument("--runner-cmd", dest="runner_cmd")
    p.add_argument("--mock-reasoner", dest="mock_reasoner")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("annotate", help="classify trajectories against the triggers")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mock-annotator", dest="mock_annotator")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("agreement", help="score model reports against human labels")
    p.add_argument("--llm", required=True)
    p.add_argument("--human", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("report", help="render an eval or funnel JSON as text")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        config = _load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RecordError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

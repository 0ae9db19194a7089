"""Reflective reasoning-flow orchestration, curation, and grading for
optimization modeling.

The package is organized around the pipeline's stages:

- `model`     — domain types, invariants, transcript rendering, records
- `client`    — chat-completion endpoints and the deterministic scripted mock
- `sandbox`   — code-block extraction, the runner wire protocol, budgets
- `engine`    — the generate / execute / splice reasoning flow
- `calm`      — the Reasoner-Intervener correction loop and golden filtering
- `grading`   — binary reward, pass@1 protocol, benchmark reports
- `datasets`  — corpus splits, SFT emission with output masking, funnel stats
- `annotator` — static flaw classification, distributions, agreement
- `cli`       — the `orflow` command wiring it all together
"""

from .calm import CalmConfig, calm_loop, evaluate_trajectory, splice_hint, token_modification_fraction
from .client import ChatMessage, Completion, HttpChatClient, SamplingConfig, ScriptedClient
from .datasets import SplitPlan, emit_sft_dataset, load_corpus, split_corpus
from .engine import FlowBudgets, ReflectiveEngine, extract_final_answer, run_reflective_flow
from .grading import EvalConfig, evaluate_suite, grade, grade_trajectory, pass_at_1
from .model import (
    Benchmark,
    CalmOutcome,
    CalmStatus,
    FlawReport,
    GradingResult,
    Hint,
    Problem,
    Split,
    Step,
    Trajectory,
    TriggerType,
    deserialize_trajectory,
    render_transcript,
    serialize_trajectory,
)
from .sandbox import ExecutionLimits, RunnerPool, SandboxResult, extract_code_block, format_output_block

__version__ = "0.1.0"

"""Deterministic corpus splitting with the published per-benchmark counts."""

from orflow import Benchmark, Problem
from orflow.datasets import DEFAULT_SPLIT_COUNTS, SplitPlan, split_corpus

corpus = [
    Problem(
        id=f"{benchmark.value}#{i:04d}",
        benchmark=benchmark,
        description=f"{benchmark.value} problem {i}",
        ground_truth=float(i),
    )
    for benchmark, counts in DEFAULT_SPLIT_COUNTS.items()
    for i in range(counts.total)
]
print(f"synthetic corpus: {len(corpus)} problems\n")

result = split_corpus(corpus, SplitPlan.default(seed=7))

print(f"{'benchmark':<14} {'SFT':>5} {'RL':>5} {'Test':>5}")
for benchmark in Benchmark:
    sft = sum(1 for p in result.sft if p.benchmark is benchmark)
    rl = sum(1 for p in result.rl if p.benchmark is benchmark)
    test = sum(1 for p in result.test if p.benchmark is benchmark)
    print(f"{benchmark.value:<14} {sft:>5} {rl:>5} {test:>5}")

total = len(result.sft) + len(result.rl) + len(result.test)
print(f"\npartitions disjoint and exhaustive: {total} == {len(corpus)}")

again = split_corpus(list(reversed(corpus)), SplitPlan.default(seed=7))
print("same seed, shuffled input, identical assignment:",
      [p.id for p in again.sft] == [p.id for p in result.sft])

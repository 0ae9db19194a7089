"""Flaw classification parsing, distribution aggregation, and agreement."""

import pytest

from conftest import make_problem
from orflow.annotator import (
    KeyMismatch,
    UnknownTrajectory,
    UnparseableReport,
    aggregate_distribution,
    annotator_agreement,
    classify_flaws,
)
from orflow.client import ScriptedClient
from orflow.model import (
    Benchmark,
    FlawCategory,
    FlawInstance,
    FlawReport,
    Step,
    Trajectory,
    TriggerType,
)
from test_calm import simple_trajectory


class TestClassifyFlaws:
    def test_single_instance(self):
        annotator = ScriptedClient(
            ["FLAW: Trigger 1 at step 0: solved the assignment by hand"]
        )
        report = classify_flaws(simple_trajectory(), make_problem(), annotator)
        assert len(report.instances) == 1
        instance = report.instances[0]
        assert instance.trigger is TriggerType.PREMATURE_NL_SOLVING
        assert instance.trigger.category is FlawCategory.CODE_UTILIZATION_DISTRUST
        assert instance.step_index == 0

    def test_no_flaws_is_a_valid_empty_report(self):
        annotator = ScriptedClient(["NO FLAWS"])
        report = classify_flaws(simple_trajectory(), make_problem(), annotator)
        assert report.instances == ()

    def test_multiple_instances_parse_in_order(self):
        annotator = ScriptedClient(
            ["FLAW: Trigger 2 at step 0: fragmented\nFLAW: Trigger 7 at step 1: boxed in prose"]
        )
        report = classify_flaws(simple_trajectory(), make_problem(), annotator)
        assert [int(i.trigger) for i in report.instances] == [2, 7]

    def test_unparseable_after_retry(self):
        annotator = ScriptedClient(["nothing structured", "still nothing"])
        with pytest.raises(UnparseableReport):
            classify_flaws(simple_trajectory(), make_problem(), annotator)

    def test_out_of_range_step_rejected(self):
        annotator = ScriptedClient(["FLAW: Trigger 1 at step 9: nope"])
        with pytest.raises(UnparseableReport):
            classify_flaws(simple_trajectory(), make_problem(), annotator)

    def test_report_keyed_by_problem_id_by_default(self):
        annotator = ScriptedClient(["NO FLAWS"])
        report = classify_flaws(simple_trajectory(), make_problem(pid="p1"), annotator)
        assert report.trajectory_id == "p1"


def report(trajectory_id, *triggers):
    return FlawReport(
        trajectory_id=trajectory_id,
        instances=tuple(
            FlawInstance(trigger=TriggerType(t), step_index=0, rationale="r")
            for t in triggers
        ),
    )


class TestAggregateDistribution:
    def problems(self, n, benchmark=Benchmark.NL4OPT):
        return {
            f"{benchmark.value}-{i}": make_problem(
                pid=f"{benchmark.value}-{i}", benchmark=benchmark
            )
            for i in range(n)
        }

    def test_trigger_frequency_is_mean_instances_per_problem(self):
        problems = self.problems(2)
        reports = [report("NL4Opt-0", 1), report("NL4Opt-1")]
        dist = aggregate_distribution(reports, problems)
        assert dist.per_benchmark_trigger[Benchmark.NL4OPT][TriggerType(1)] == 0.5

    def test_trigger_seven_excluded_from_both_categories(self):
        problems = self.problems(1)
        dist = aggregate_distribution([report("NL4Opt-0", 7)], problems)
        cats = dist.per_benchmark_category[Benchmark.NL4OPT]
        assert cats[FlawCategory.CODE_UTILIZATION_DISTRUST] == 0.0
        assert cats[FlawCategory.LACK_OF_OR_EXPERTISE] == 0.0
        assert cats[FlawCategory.PROCEDURAL] == 1.0

    def test_one_problem_with_both_categories(self):
        problems = self.problems(1)
        dist = aggregate_distribution([report("NL4Opt-0", 1, 4)], problems)
        cats = dist.per_benchmark_category[Benchmark.NL4OPT]
        assert cats[FlawCategory.CODE_UTILIZATION_DISTRUST] == 1.0
        assert cats[FlawCategory.LACK_OF_OR_EXPERTISE] == 1.0

    def test_category_is_sum_of_constituent_triggers(self):
        problems = self.problems(4)
        reports = [
            report("NL4Opt-0", 1, 2, 2),
            report("NL4Opt-1", 3),
            report("NL4Opt-2", 1, 5),
            report("NL4Opt-3"),
        ]
        dist = aggregate_distribution(reports, problems)
        trig = dist.per_benchmark_trigger[Benchmark.NL4OPT]
        cats = dist.per_benchmark_category[Benchmark.NL4OPT]
        expected = trig[TriggerType(1)] + trig[TriggerType(2)] + trig[TriggerType(3)]
        assert cats[FlawCategory.CODE_UTILIZATION_DISTRUST] == pytest.approx(expected)

    def test_macro_average_is_unweighted_over_benchmarks(self):
        problems = dict(self.problems(1))
        problems.update(self.problems(2, Benchmark.OPTMATH))
        reports = [
            report("NL4Opt-0", 1),        # NL4Opt: trigger-1 freq 1.0
            report("OptMath-0", 1, 1),    # OptMath: trigger-1 freq 1.0 over 2 reports
            report("OptMath-1"),
        ]
        dist = aggregate_distribution(reports, problems)
        assert dist.macro_trigger[TriggerType(1)] == pytest.approx(1.0)
        # invariance to benchmark ordering
        again = aggregate_distribution(list(reversed(reports)), problems)
        assert again.macro_trigger == dist.macro_trigger

    def test_unknown_trajectory(self):
        with pytest.raises(UnknownTrajectory):
            aggregate_distribution([report("ghost", 1)], self.problems(1))


class TestAgreement:
    def test_identical_reports_are_perfect(self):
        reports = [report("a", 1, 5), report("b", 3)]
        assert annotator_agreement(reports, reports) == 1.0

    def test_half_match(self):
        human = [report("a", 1, 5)]
        llm = [report("a", 1)]
        assert annotator_agreement(llm, human) == 0.5

    def test_disjoint_triggers_score_zero(self):
        assert annotator_agreement([report("a", 2)], [report("a", 5)]) == 0.0

    def test_step_positions_are_ignored(self):
        human = [
            FlawReport("a", (FlawInstance(TriggerType(4), 0, "x"),))
        ]
        llm = [
            FlawReport("a", (FlawInstance(TriggerType(4), 3, "y"),))
        ]
        assert annotator_agreement(llm, human) == 1.0

    def test_denominator_is_human_instances(self):
        human = [report("a", 1)]
        llm = [report("a", 1, 2, 3)]  # over-reporting does not inflate accuracy
        assert annotator_agreement(llm, human) == 1.0

    def test_key_mismatch(self):
        with pytest.raises(KeyMismatch):
            annotator_agreement([report("a", 1)], [report("b", 1)])

    def test_empty_instances_agree_vacuously(self):
        assert annotator_agreement([report("a")], [report("a")]) == 1.0

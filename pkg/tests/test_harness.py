import math

import pytest

from src.harness.run_report import IterationRecord, RunReport, SummaryError, summarize, write_report
from src.harness.scenario import run_scenario1, run_scenario2
from src.parser.config_parser import ConfigError, parse_config
from src.parser.import_csv import IterationCSVImporter
from src.slo.slo_core import cumulative_fulfillment


def _report(name, values):
    """values: {(rep, phase, iteration): phi_sigma} for a single 'cv' service."""
    report = RunReport(name, {}, "", [], 0, [])
    report.iterations.extend(IterationRecord(rep, phase, iteration, "cv", "lsa", value)
                             for (rep, phase, iteration), value in values.items())
    return report


def _vpa_fixed_point_config():
    return parse_config({
        "name": "vpa-fixed-point",
        "device": {"c_phy": 10},
        "services": [{"id": "cv", "agent": "vpa", "initial": {"pixel": 800, "cores": 4},
                      "slos": [{"variable": "pixel", "relation": ">", "threshold": 800, "weight": 0.8},
                               {"variable": "cores", "relation": "<", "threshold": 10, "weight": 0.4},
                               {"variable": "fps", "relation": ">", "threshold": 33, "weight": 1.2}],
                      "ground_truth": {"sigma": 0.0}}],
        "phases": [{"t_pixel": 800, "t_fps": 33, "max_cores": 9, "duration": 100}],
        "seeds": [1],
    })


def test_scenario1_shape(small_scenario1):
    report = run_scenario1(small_scenario1)
    assert len(report.iterations) == 2 * 2 * 5 * 1
    assert report.services == ["cv"]
    assert report.agents == {"cv": "lsa"}
    assert sorted(report.metrics) == [1, 2]
    assert len(report.metrics[1]) == 60 + 100
    assert set(report.phase_means()) == {("cv", "lsa", 1), ("cv", "lsa", 2)}
    for r in report.iterations:
        assert 0 <= r.phi_sigma <= 2.4 + 1e-12


def test_warm_up_takes_no_agent_actions(small_scenario1):
    report = run_scenario1(small_scenario1)
    warmup = small_scenario1.timing.warmup_ticks
    assert all(a.tick >= warmup for a in report.actions)
    assert all(entry.tick >= warmup for entry in report.audit.records)
    assert min(r.tick for r in report.iterations) == warmup


def test_phase_core_cap_is_enforced(small_scenario1):
    report = run_scenario1(small_scenario1)
    phase2_start = small_scenario1.timing.warmup_ticks + small_scenario1.phases[0].duration
    for sample in report.core_trace:
        assert sample.total <= sample.capacity
        if sample.tick > phase2_start:
            assert sample.capacity == 2
            assert sample.total <= 2


def test_runs_are_reproducible(small_scenario1, tmp_path):
    first = run_scenario1(small_scenario1)
    second = run_scenario1(small_scenario1)
    assert first.iterations == second.iterations
    assert first.actions == second.actions
    write_report(first, tmp_path / "a")
    write_report(second, tmp_path / "b")
    for name in ("iterations.csv", "summary.csv", "metrics_rep1.jsonl", "metrics_rep2.csv", "audit.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_vpa_settles_at_fixed_point():
    report = run_scenario1(_vpa_fixed_point_config())
    last = report.metrics[1][-1]
    assert (last.pixel, last.cores) == (800, 6)
    assert last.fps == pytest.approx(33.0)
    assert all(a.action in {"CoresUp", "NoOp"} for a in report.actions)


def test_lgbn_agent_runs(small_scenario1):
    config = small_scenario1.with_overrides(agent="lgbn")
    report = run_scenario1(config)
    assert report.agents == {"cv": "lgbn"}
    assert {a.agent for a in report.actions} <= {"lgbn", "harness"}


def test_scenario2_conserves_cores_and_records_swaps(small_scenario2):
    report = run_scenario2(small_scenario2)
    assert len(report.iterations) == 2 * 5 * 2
    for sample in report.core_trace:
        assert sample.total <= sample.capacity == 8
        assert all(cores >= 1 for _, cores in sample.allocations)
    assert report.exhaustion_ticks == {1: 60, 2: 60}
    for swap in report.swaps:
        assert swap.estimated_gain > small_scenario2.gso.min_gain
        assert swap.realized_gain is not None


def test_scenario2_control_run_never_swaps(small_scenario2):
    report = run_scenario2(small_scenario2.with_overrides(gso_enabled=False))
    assert report.swaps == []
    assert not any(a.agent == "gso" for a in report.actions)


def test_scenario2_unreachable_min_gain_matches_control_run(small_scenario2):
    document = small_scenario2.model_dump()
    document["gso"]["min_gain"] = math.inf
    inert = run_scenario2(parse_config(document))
    control = run_scenario2(small_scenario2.with_overrides(gso_enabled=False))

    assert inert.swaps == []
    assert inert.actions == control.actions
    assert inert.core_trace == control.core_trace
    assert [r.to_row() for r in inert.iterations] == [r.to_row() for r in control.iterations]
    slos = {s.id: s.to_spec().slos for s in small_scenario2.services}
    for rep in range(1, len(small_scenario2.seeds) + 1):
        assert len(inert.metrics[rep]) == len(control.metrics[rep]) > 0
        for ours, theirs in zip(inert.metrics[rep], control.metrics[rep]):
            assert ours == theirs
            phi = cumulative_fulfillment(slos[ours.service_id], ours.metrics())
            assert phi == cumulative_fulfillment(slos[theirs.service_id], theirs.metrics())


def test_scenario2_needs_two_services(small_scenario1):
    with pytest.raises(ConfigError):
        run_scenario2(small_scenario1)


def test_summarize_single_report():
    report = _report("one", {(1, 1, 1): 1.5, (1, 1, 2): 2.0, (1, 2, 1): 0.5, (1, 2, 2): 1.0})
    table = summarize([report])
    assert table.columns == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert table.rows == [("lsa", "cv")]
    assert table.means[("lsa", "cv")] == [1.5, 2.0, 0.5, 1.0]
    assert table.stds[("lsa", "cv")] == [0.0] * 4


def test_summarize_identical_and_repeated_reports():
    values = {(rep, 1, i): 0.1 * rep + i for rep in range(1, 6) for i in range(1, 4)}
    table = summarize([_report("a", values), _report("b", values)])
    assert len(table.columns) == 3
    assert table.means[("lsa", "cv")] == pytest.approx([1.3, 2.3, 3.3])
    twin = summarize([_report("a", {(1, 1, 1): 2.0}), _report("b", {(1, 1, 1): 2.0})])
    assert twin.stds[("lsa", "cv")] == [0.0]


def test_summarize_rejects_mismatched_shapes():
    with pytest.raises(SummaryError):
        summarize([])
    with pytest.raises(SummaryError):
        summarize([_report("a", {(1, 1, 1): 1.0}), _report("b", {(1, 1, 1): 1.0, (1, 1, 2): 1.0})])


def test_iterations_csv_imports_back(small_scenario1, tmp_path):
    report = run_scenario1(small_scenario1)
    out = write_report(report, tmp_path / "run")
    imported = IterationCSVImporter().import_iterations_csv(out / "iterations.csv")
    assert imported.scenario == "run"
    assert [r.to_row() for r in imported.iterations] == [r.to_row() for r in report.iterations]
    assert summarize([imported]).means == summarize([report]).means


def test_importer_rejects_foreign_csv(tmp_path):
    path = tmp_path / "foreign.csv"
    path.write_text("date,amount\n2024-01-01,12.5\n")
    importer = IterationCSVImporter()
    valid, message = importer.validate_csv_structure(path)
    assert not valid and "Missing required columns" in message
    with pytest.raises(ValueError):
        importer.import_iterations_csv(path)

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from src.agents.audit import AuditLog
from src.lgbn.lgbn import MetricSnapshot
from src.simulation.physical_sim import write_metrics_csv, write_metrics_jsonl

ITERATION_COLUMNS = ("rep", "phase", "iteration", "service", "agent", "phi_sigma")
SWAP_COLUMNS = ("rep", "tick", "from", "to", "estimated_gain", "realized_gain")


class SummaryError(ValueError):
    """Raised when reports cannot be aggregated together."""
    pass


@dataclass(frozen=True)
class IterationRecord:
    rep: int
    phase: int
    iteration: int
    service: str
    agent: str
    phi_sigma: float
    tick: int = 0

    def to_row(self) -> dict:
        return {"rep": self.rep, "phase": self.phase, "iteration": self.iteration, "service": self.service,
                "agent": self.agent, "phi_sigma": self.phi_sigma}


@dataclass
class SwapEvent:
    rep: int
    tick: int
    from_service: str
    to_service: str
    estimated_gain: float
    realized_gain: float | None = None

    def to_row(self) -> dict:
        return {"rep": self.rep, "tick": self.tick, "from": self.from_service, "to": self.to_service,
                "estimated_gain": self.estimated_gain,
                "realized_gain": "" if self.realized_gain is None else self.realized_gain}


@dataclass(frozen=True)
class ActionRecord:
    rep: int
    tick: int
    service: str
    agent: str
    action: str
    outcome: str


@dataclass(frozen=True)
class CoreSample:
    rep: int
    tick: int
    capacity: int
    allocations: tuple[tuple[str, int], ...]

    @property
    def total(self) -> int:
        return sum(cores for _, cores in self.allocations)


@dataclass
class RunReport:
    """Everything one scenario run produced, across all repetitions."""
    scenario: str
    config: dict
    fingerprint: str
    seeds: list[int]
    phases: int
    iterations_per_phase: list[int]
    iterations: list[IterationRecord] = field(default_factory=list)
    swaps: list[SwapEvent] = field(default_factory=list)
    actions: list[ActionRecord] = field(default_factory=list)
    core_trace: list[CoreSample] = field(default_factory=list)
    metrics: dict[int, list[MetricSnapshot]] = field(default_factory=dict)
    exhaustion_ticks: dict[int, int | None] = field(default_factory=dict)
    audit: AuditLog = field(default_factory=AuditLog)

    @property
    def services(self) -> list[str]:
        return sorted({r.service for r in self.iterations})

    @property
    def agents(self) -> dict[str, str]:
        return {r.service: r.agent for r in self.iterations}

    def phase_means(self) -> dict[tuple[str, str, int], float]:
        """Mean phi_sigma per (service, agent, phase) over every repetition and iteration."""
        groups: dict[tuple[str, str, int], list[float]] = defaultdict(list)
        for r in self.iterations:
            groups[(r.service, r.agent, r.phase)].append(r.phi_sigma)
        return {key: float(np.mean(values)) for key, values in sorted(groups.items())}

    def global_series(self, rep: int) -> list[tuple[int, int, int, float]]:
        """(phase, iteration, tick, sum of phi_sigma over services) in run order."""
        totals: dict[tuple[int, int, int], float] = defaultdict(float)
        for r in self.iterations:
            if r.rep == rep:
                totals[(r.phase, r.iteration, r.tick)] += r.phi_sigma
        return [(p, i, t, v) for (p, i, t), v in sorted(totals.items())]

    def mean_global_after_exhaustion(self, rep: int) -> float | None:
        start = self.exhaustion_ticks.get(rep)
        if start is None:
            return None
        values = [v for _, _, tick, v in self.global_series(rep) if tick >= start]
        return float(np.mean(values)) if values else None

    def action_histogram(self) -> dict[tuple[str, str], int]:
        return dict(sorted(Counter((a.agent, a.action) for a in self.actions).items()))


@dataclass(frozen=True)
class SummaryTable:
    """Mean and standard deviation of phi_sigma per (agent, service) row and (phase, iteration) column."""
    columns: list[tuple[int, int]]
    means: dict[tuple[str, str], list[float]]
    stds: dict[tuple[str, str], list[float]]

    @property
    def rows(self) -> list[tuple[str, str]]:
        return sorted(self.means)


def _grid(report: RunReport) -> list[tuple[int, int]]:
    return sorted({(r.phase, r.iteration) for r in report.iterations})


def summarize(reports: Sequence[RunReport]) -> SummaryTable:
    """
    Aggregate iteration values over every repetition of every report.

    Raises:
        SummaryError: No reports, or reports with different phase/iteration grids
    """
    if not reports:
        raise SummaryError("Nothing to summarize: no reports given")
    columns = _grid(reports[0])
    if not columns:
        raise SummaryError("Reports contain no iterations")
    for report in reports[1:]:
        if _grid(report) != columns:
            raise SummaryError(f"Scenario shape mismatch between '{reports[0].scenario}' and '{report.scenario}'")

    values: dict[tuple[str, str], dict[tuple[int, int], list[float]]] = defaultdict(lambda: defaultdict(list))
    for report in reports:
        for r in report.iterations:
            values[(r.agent, r.service)][(r.phase, r.iteration)].append(r.phi_sigma)

    means, stds = {}, {}
    for key, cells in values.items():
        if set(cells) != set(columns):
            raise SummaryError(f"Row {key} does not cover every iteration")
        means[key] = [float(np.mean(cells[c])) for c in columns]
        stds[key] = [float(np.std(cells[c])) for c in columns]
    return SummaryTable(columns, means, stds)


def _write_rows(path: Path, columns: Iterable[str], rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def write_iterations_csv(report: RunReport, path: str | Path) -> None:
    _write_rows(Path(path), ITERATION_COLUMNS, (r.to_row() for r in report.iterations))


def write_swaps_csv(report: RunReport, path: str | Path) -> None:
    _write_rows(Path(path), SWAP_COLUMNS, (s.to_row() for s in report.swaps))


def write_summary_csv(table: SummaryTable, path: str | Path) -> None:
    headers = ["agent", "service", "statistic"] + [f"p{p}_i{i}" for p, i in table.columns]
    rows = []
    for agent, service in table.rows:
        for statistic, source in (("mean", table.means), ("std", table.stds)):
            row = {"agent": agent, "service": service, "statistic": statistic}
            row.update({h: v for h, v in zip(headers[3:], source[(agent, service)])})
            rows.append(row)
    _write_rows(Path(path), headers, rows)


def write_report(report: RunReport, out_dir: str | Path) -> Path:
    """Write iteration, swap, summary, metrics and audit files for a run; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_iterations_csv(report, out / "iterations.csv")
    write_swaps_csv(report, out / "swaps.csv")
    write_summary_csv(summarize([report]), out / "summary.csv")
    for rep, snapshots in sorted(report.metrics.items()):
        write_metrics_jsonl(snapshots, out / f"metrics_rep{rep}.jsonl")
        write_metrics_csv(snapshots, out / f"metrics_rep{rep}.csv")
    report.audit.write_jsonl(out / "audit.jsonl")
    return out

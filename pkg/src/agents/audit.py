from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from src.agents.decision import Decision


@dataclass
class AuditRecord:
    rep: int
    tick: int
    agent_id: str
    agent: str
    observed: dict
    action: str
    outcome: str
    estimated_delta: float | None = None
    realized_delta: float | None = None


class AuditLog:
    """Per-decision audit trail; realized delta is filled in at the agent's next decision."""

    def __init__(self):
        self.records: list[AuditRecord] = []
        self._open: dict[tuple[int, str], AuditRecord] = {}

    def record(self, rep: int, decision: Decision) -> AuditRecord:
        entry = AuditRecord(rep, decision.tick, decision.service_id, decision.agent, dict(decision.observed),
                            decision.action, decision.outcome, decision.estimated_delta)
        self.records.append(entry)
        self._open[(rep, decision.service_id)] = entry
        return entry

    def resolve(self, rep: int, agent_id: str, realized_delta: float) -> None:
        entry = self._open.pop((rep, agent_id), None)
        if entry is not None:
            entry.realized_delta = realized_delta

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for entry in self.records:
                f.write(json.dumps(asdict(entry), sort_keys=True) + "\n")

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from src.learning.train_env import Action
from src.lgbn.lgbn import LgbnModel, expect_fps
from src.simulation.physical_sim import RejectReason, ScalingResult
from src.slo.slo_core import ServiceSpec, Slo, weighted_delta


@dataclass(frozen=True)
class Decision:
    """What one agent chose at one decision point and what the device answered."""
    service_id: str
    agent: str
    tick: int
    action: str
    observed: dict
    target: tuple[int, int] | None = None
    result: ScalingResult | None = None
    estimated_delta: float | None = None

    @property
    def submitted(self) -> bool:
        return self.result is not None

    @property
    def accepted(self) -> bool:
        return self.result is not None and self.result.accepted

    @property
    def reason(self) -> RejectReason | None:
        return None if self.result is None else self.result.reason

    @property
    def outcome(self) -> str:
        if self.result is None:
            return "none"
        return "accepted" if self.result.accepted else f"rejected:{self.result.reason.value}"


def scaling_target(spec: ServiceSpec, pixel: int, cores: int, action: Action) -> tuple[int, int]:
    """
    Translate an action into a target configuration.

    Pixel clamps at the service bounds and cores at the 1-core floor; CoresUp is left
    uncapped so the device decides whether the core exists.
    """
    if action is Action.PIXEL_UP:
        pixel = min(pixel + spec.pixel_step, spec.p_max)
    elif action is Action.PIXEL_DOWN:
        pixel = max(pixel - spec.pixel_step, spec.p_min)
    elif action is Action.CORES_UP:
        cores = cores + spec.cores_step
    elif action is Action.CORES_DOWN:
        cores = max(cores - spec.cores_step, 1)
    return pixel, cores


def estimated_delta(model: LgbnModel | None, slos: Sequence[Slo], pixel: int, cores: int) -> float | None:
    if model is None:
        return None
    fps = max(0.0, expect_fps(model, pixel, cores))
    return weighted_delta(slos, {"pixel": pixel, "cores": cores, "fps": fps})

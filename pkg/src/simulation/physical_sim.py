from __future__ import annotations

import bisect
import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from src.lgbn.lgbn import MetricSnapshot
from src.slo.slo_core import Device, ServiceSpec, ServiceState

logger = logging.getLogger(__name__)

SETTLING_SECONDS = 2.0
METRIC_COLUMNS = ("service_id", "tick", "pixel", "cores", "fps")


class CoreAccountingError(RuntimeError):
    """Core allocation broke conservation; this is a simulator bug."""
    pass


@dataclass(frozen=True)
class GroundTruthModel:
    """Hidden fps generator of one service; agents never read it."""
    beta0: float = 5.0
    beta_cores: float = 6.0
    beta_pixel: float = -0.01
    sigma: float = 1.0
    beta_pixel_sq: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    def mean(self, pixel: float, cores: float) -> float:
        return self.beta0 + self.beta_cores * cores + self.beta_pixel * pixel + self.beta_pixel_sq * pixel ** 2

    def sample(self, pixel: float, cores: float, rng: np.random.Generator) -> float:
        return max(0.0, float(self.mean(pixel, cores) + rng.normal(0.0, self.sigma)))


@dataclass
class SimClock:
    tick: int = 0
    tick_seconds: float = 0.5

    def __post_init__(self):
        if self.tick < 0 or self.tick_seconds <= 0:
            raise ValueError("tick must be non-negative and tick_seconds positive")

    @property
    def settling_ticks(self) -> int:
        return math.ceil(SETTLING_SECONDS / self.tick_seconds)

    @property
    def seconds(self) -> float:
        return self.tick * self.tick_seconds

    def advance(self) -> int:
        self.tick += 1
        return self.tick


class RejectReason(Enum):
    INSUFFICIENT_CORES = "InsufficientCores"
    PIXEL_OUT_OF_BOUNDS = "PixelOutOfBounds"
    MINIMUM_CORES = "MinimumCores"
    UNKNOWN_SERVICE = "UnknownService"
    SAME_SERVICE = "SameService"


class ScalingResult(NamedTuple):
    accepted: bool
    reason: RejectReason | None = None

    @classmethod
    def accept(cls) -> "ScalingResult":
        return cls(True, None)

    @classmethod
    def reject(cls, reason: RejectReason) -> "ScalingResult":
        return cls(False, reason)


class PendingConfig(NamedTuple):
    pixel: int
    cores: int
    effective_tick: int


@dataclass
class RunningService:
    spec: ServiceSpec
    state: ServiceState
    effective: tuple[int, int] | None = None
    pending: list[PendingConfig] = field(default_factory=list)
    metrics_buffer: list[MetricSnapshot] = field(default_factory=list)
    action_log: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.effective is None:
            self.effective = (self.state.pixel, self.state.cores)

    @property
    def service_id(self) -> str:
        return self.spec.service_id

    @property
    def action_ticks(self) -> list[int]:
        return [t for t, _ in self.action_log]

    def generating_config(self, now: int) -> tuple[int, int]:
        """Promote every pending change whose settling finished by `now`."""
        while self.pending and self.pending[0].effective_tick <= now:
            change = self.pending.pop(0)
            self.effective = (change.pixel, change.cores)
        return self.effective

    def _schedule(self, pixel: int, cores: int, clock: SimClock, label: str) -> None:
        self.state = replace(self.state, pixel=pixel, cores=cores)
        self.pending.append(PendingConfig(pixel, cores, clock.tick + clock.settling_ticks))
        self.action_log.append((clock.tick, label))


def check_accounting(device: Device, services: Iterable[RunningService]) -> None:
    for service in services:
        if device.allocations.get(service.service_id) != service.state.cores:
            raise CoreAccountingError(f"Device and service '{service.service_id}' disagree on cores")
        if service.state.cores < 1:
            raise CoreAccountingError(f"Service '{service.service_id}' holds no core")
    if device.allocated > device.capacity:
        raise CoreAccountingError(f"Allocated {device.allocated} cores exceed capacity {device.capacity}")


def tick(device: Device, services: Sequence[RunningService], models: dict[str, GroundTruthModel],
         clock: SimClock, rng: np.random.Generator) -> list[MetricSnapshot]:
    """
    Generate one snapshot per service and advance the clock.

    fps comes from the configuration effective at the current clock value; the snapshot
    records the applied configuration and carries the advanced tick.
    """
    check_accounting(device, services)
    now = clock.tick
    label = now + 1
    snapshots = []
    for service in sorted(services, key=lambda s: s.service_id):
        pixel, cores = service.generating_config(now)
        fps = models[service.service_id].sample(pixel, cores, rng)
        snapshot = MetricSnapshot(service.service_id, label, service.state.pixel, service.state.cores, fps)
        service.metrics_buffer.append(snapshot)
        service.state = replace(service.state, fps=fps, tick=label)
        snapshots.append(snapshot)
    clock.advance()
    return snapshots


def _action_label(service: RunningService, pixel: int, cores: int) -> str:
    if cores != service.state.cores and pixel != service.state.pixel:
        return "Rescale"
    if cores != service.state.cores:
        return "CoresUp" if cores > service.state.cores else "CoresDown"
    return "PixelUp" if pixel > service.state.pixel else "PixelDown"


def apply_scaling(service: RunningService, target: tuple[int, int], device: Device, clock: SimClock) -> ScalingResult:
    """
    Request a new (pixel, cores) configuration for a service.

    Returns:
        ScalingResult.accept() or a rejection with its reason; rejections change nothing
    """
    pixel, cores = int(target[0]), int(target[1])
    if not service.spec.p_min <= pixel <= service.spec.p_max:
        return ScalingResult.reject(RejectReason.PIXEL_OUT_OF_BOUNDS)
    if cores < 1:
        return ScalingResult.reject(RejectReason.MINIMUM_CORES)
    if service.service_id not in device.allocations:
        return ScalingResult.reject(RejectReason.UNKNOWN_SERVICE)
    if cores - service.state.cores > device.c_free:
        return ScalingResult.reject(RejectReason.INSUFFICIENT_CORES)
    if (pixel, cores) == (service.state.pixel, service.state.cores):
        return ScalingResult.accept()

    label = _action_label(service, pixel, cores)
    device.allocations[service.service_id] = cores
    service._schedule(pixel, cores, clock, label)
    return ScalingResult.accept()


def swap_core(device: Device, from_service: RunningService, to_service: RunningService,
              clock: SimClock) -> ScalingResult:
    """Move one core between two services; the device total never changes."""
    if from_service.service_id not in device.allocations or to_service.service_id not in device.allocations:
        return ScalingResult.reject(RejectReason.UNKNOWN_SERVICE)
    if from_service.service_id == to_service.service_id:
        return ScalingResult.reject(RejectReason.SAME_SERVICE)
    if from_service.state.cores <= 1:
        return ScalingResult.reject(RejectReason.MINIMUM_CORES)
    donor_cores, receiver_cores = from_service.state.cores - 1, to_service.state.cores + 1
    device.allocations[from_service.service_id] = donor_cores
    device.allocations[to_service.service_id] = receiver_cores
    from_service._schedule(from_service.state.pixel, donor_cores, clock, "SwapOut")
    to_service._schedule(to_service.state.pixel, receiver_cores, clock, "SwapIn")
    return ScalingResult.accept()


def read_buffer(service: RunningService, since_tick: int) -> list[MetricSnapshot]:
    """Snapshots with tick > since_tick, as a new list."""
    buffer = service.metrics_buffer
    start = bisect.bisect_right([s.tick for s in buffer], since_tick)
    return buffer[start:]


def resize_device(device: Device, services: Sequence[RunningService], limit: int | None,
                  clock: SimClock) -> dict[str, int]:
    """
    Set the active core limit and reclaim excess cores, one at a time from the largest holder.

    Returns:
        Cores reclaimed per service id
    """
    if limit is not None and limit < len(services):
        raise CoreAccountingError(f"Core limit {limit} cannot keep {len(services)} services at one core")
    device.core_limit = limit
    reclaimed: dict[str, int] = {}
    while device.allocated > device.capacity:
        # largest holder first, ties by id
        donor = min(services, key=lambda s: (-s.state.cores, s.service_id))
        if donor.state.cores <= 1:
            raise CoreAccountingError("No service can release a core")
        device.allocations[donor.service_id] = donor.state.cores - 1
        reclaimed[donor.service_id] = reclaimed.get(donor.service_id, 0) + 1
        donor._schedule(donor.state.pixel, donor.state.cores - 1, clock, "Reclaim")
    if reclaimed:
        logger.info("Reclaimed cores %s for core limit %s", reclaimed, limit)
    return reclaimed


def write_metrics_jsonl(snapshots: Iterable[MetricSnapshot], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for snapshot in snapshots:
            f.write(json.dumps(snapshot.to_dict()) + "\n")


def write_metrics_csv(snapshots: Iterable[MetricSnapshot], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for snapshot in snapshots:
            writer.writerow(snapshot.to_dict())


class Simulator:
    """One device, its running services, their hidden ground truths, a clock and a noise stream."""

    def __init__(self, c_phy: int, rng: np.random.Generator, tick_seconds: float = 0.5):
        self.device = Device(c_phy)
        self.clock = SimClock(0, tick_seconds)
        self.rng = rng
        self.services: dict[str, RunningService] = {}
        self.truths: dict[str, GroundTruthModel] = {}

    def add_service(self, spec: ServiceSpec, pixel: int, cores: int, truth: GroundTruthModel) -> RunningService:
        if spec.service_id in self.services:
            raise ValueError(f"Service '{spec.service_id}' already runs on this device")
        if not 1 <= cores <= self.device.c_free:
            raise ValueError(f"Cannot start '{spec.service_id}' with {cores} cores (c_free={self.device.c_free})")
        if not spec.p_min <= pixel <= spec.p_max:
            raise ValueError(f"Initial pixel {pixel} outside {spec.pixel_bounds}")
        service = RunningService(spec, ServiceState(pixel, cores, 0.0, self.clock.tick))
        self.device.allocations[spec.service_id] = cores
        self.services[spec.service_id] = service
        self.truths[spec.service_id] = truth
        return service

    @property
    def ordered(self) -> list[RunningService]:
        return [self.services[k] for k in sorted(self.services)]

    @property
    def settling_ticks(self) -> int:
        return self.clock.settling_ticks

    def tick(self) -> list[MetricSnapshot]:
        return tick(self.device, self.ordered, self.truths, self.clock, self.rng)

    def apply_scaling(self, service_id: str, pixel: int, cores: int) -> ScalingResult:
        if service_id not in self.services:
            return ScalingResult.reject(RejectReason.UNKNOWN_SERVICE)
        return apply_scaling(self.services[service_id], (pixel, cores), self.device, self.clock)

    def swap_core(self, from_id: str, to_id: str) -> ScalingResult:
        if from_id not in self.services or to_id not in self.services:
            return ScalingResult.reject(RejectReason.UNKNOWN_SERVICE)
        return swap_core(self.device, self.services[from_id], self.services[to_id], self.clock)

    def read_buffer(self, service_id: str, since_tick: int = 0) -> list[MetricSnapshot]:
        return read_buffer(self.services[service_id], since_tick)

    def resize(self, limit: int | None) -> dict[str, int]:
        return resize_device(self.device, self.ordered, limit, self.clock)

    def all_snapshots(self) -> list[MetricSnapshot]:
        merged = [s for service in self.ordered for s in service.metrics_buffer]
        return sorted(merged, key=lambda s: (s.tick, s.service_id))

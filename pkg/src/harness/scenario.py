from __future__ import annotations

import json
import logging
from dataclasses import replace

import numpy as np

from src.agents.decision import Decision
from src.agents.gso import gso_step
from src.agents.lsa import LsaState, lgbn_greedy_step, lsa_activate, lsa_retrain, lsa_retrain_due, lsa_step
from src.agents.vpa import vpa_pin_pixel, vpa_step
from src.harness.run_report import ActionRecord, CoreSample, IterationRecord, RunReport, SwapEvent
from src.lgbn.lgbn import FitError, exclude_settling, fit
from src.parser.config_parser import ConfigError, ScenarioConfig, canonical_json, fingerprint
from src.simulation.physical_sim import Simulator
from src.slo.slo_core import Slo, cumulative_fulfillment, weighted_delta, with_thresholds

logger = logging.getLogger(__name__)

MODEL_AGENTS = ("lsa", "lgbn")


def _derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _threshold_maxima(config: ScenarioConfig) -> tuple[float | None, float | None]:
    def peak(variable: str, phase_values: list[float | None]) -> float | None:
        values = [v for v in phase_values if v is not None]
        values += [q.threshold for s in config.services for q in s.slos if q.variable == variable]
        return max(values) if values else None

    return (peak("pixel", [p.t_pixel for p in config.phases]), peak("fps", [p.t_fps for p in config.phases]))


def _apply_targets(sim: Simulator, targets: dict[str, tuple[int, int]]) -> None:
    # releases before claims so the device never overflows
    order = sorted(targets, key=lambda sid: (targets[sid][1] - sim.services[sid].state.cores, sid))
    for sid in order:
        pixel, cores = targets[sid]
        result = sim.apply_scaling(sid, pixel, cores)
        if not result.accepted:
            logger.warning("Harness could not move %s to %s: %s", sid, targets[sid], result.reason.value)


def _probe_plan(sim: Simulator, count: int, rng: np.random.Generator) -> list[dict[str, tuple[int, int]]]:
    """Distinct seeded configurations that give the first fit non-degenerate parents."""
    services = sim.ordered
    capacity = sim.device.capacity
    n = len(services)
    pixels = {}
    for service in services:
        grid = np.arange(service.spec.p_min, service.spec.p_max + 1, service.spec.pixel_step)
        pixels[service.service_id] = rng.choice(grid, size=count, replace=len(grid) < count)
    lead = np.resize(rng.permutation(np.arange(1, capacity - (n - 1) + 1)), count)

    plan = []
    for k in range(count):
        cores = {services[0].service_id: int(lead[k])}
        for service in services[1:-1]:
            cores[service.service_id] = 1
        if n > 1:
            cores[services[-1].service_id] = capacity - int(lead[k]) - (n - 2)
        plan.append({sid: (int(pixels[sid][k]), cores[sid]) for sid in cores})
    return plan


class _Repetition:
    """Mutable state of one seeded repetition."""

    def __init__(self, config: ScenarioConfig, rep: int, seed: int, report: RunReport, phase_retrain: bool):
        self.config = config
        self.rep = rep
        self.seed = seed
        self.report = report
        self.phase_retrain = phase_retrain
        self.interval = config.timing.decision_interval
        sim_seed, probe_seed = np.random.SeedSequence(seed).spawn(2)
        self.sim = Simulator(config.device.c_phy, np.random.default_rng(sim_seed), config.device.tick_seconds)
        self.probe_rng = np.random.default_rng(probe_seed)
        self.kinds = {s.id: s.agent for s in config.services}
        self.base_slos: dict[str, list[Slo]] = {}
        self.agents: dict[str, LsaState] = {}
        maxima = _threshold_maxima(config)
        train_config = config.train.to_train_config()
        for index, schema in enumerate(sorted(config.services, key=lambda s: s.id)):
            spec = schema.to_spec()
            self.sim.add_service(spec, schema.initial.pixel, schema.initial.cores, schema.ground_truth.to_model())
            self.base_slos[spec.service_id] = list(spec.slos)
            if schema.agent in MODEL_AGENTS:
                self.agents[spec.service_id] = LsaState(
                    spec.service_id, spec, config.device.c_phy,
                    train_config=replace(train_config, seed=_derived_seed(seed, train_config.seed, index)),
                    threshold_maxima=maxima, retrain_interval=config.timing.retrain_interval,
                    decision_interval=self.interval, retrain_delay_ticks=config.timing.retrain_delay_ticks,
                    retrain_backoff=config.timing.retrain_backoff, randomize_free=len(config.services) > 1)
        self.slos = dict(self.base_slos)
        self.previous_global: float | None = None

    def _sample_cores(self) -> None:
        device = self.sim.device
        self.report.core_trace.append(CoreSample(self.rep, self.sim.clock.tick, device.capacity,
                                                 tuple(sorted(device.allocations.items()))))

    def _run_interval(self) -> dict[str, float]:
        """Tick one decision interval; returns the mean phi_sigma per service."""
        collected: dict[str, list[float]] = {sid: [] for sid in self.sim.services}
        for _ in range(self.interval):
            for snapshot in self.sim.tick():
                value = cumulative_fulfillment(self.slos[snapshot.service_id], snapshot.metrics())
                collected[snapshot.service_id].append(value)
            self._sample_cores()
        return {sid: float(np.mean(values)) for sid, values in collected.items()}

    def warm_up(self) -> None:
        intervals = self.config.timing.warmup_ticks // self.interval
        if intervals == 0:
            return
        initial = {s.id: (s.initial.pixel, s.initial.cores) for s in self.config.services}
        plan = _probe_plan(self.sim, intervals - 1, self.probe_rng) + [initial]
        self._apply_phase_thresholds(self.config.phases[0])
        for targets in plan:
            _apply_targets(self.sim, targets)
            values = self._run_interval()
        self.previous_global = sum(values.values())

    def _apply_phase_thresholds(self, phase) -> None:
        thresholds = {k: v for k, v in (("pixel", phase.t_pixel), ("fps", phase.t_fps)) if v is not None}
        self.slos = {sid: with_thresholds(slos, thresholds) for sid, slos in self.base_slos.items()}

    def _record(self, decision: Decision | None) -> None:
        if decision is None:
            return
        self.report.audit.record(self.rep, decision)
        self.report.actions.append(ActionRecord(self.rep, decision.tick, decision.service_id, decision.agent,
                                                decision.action, decision.outcome))

    def _retrain(self, sid: str, fallback: bool) -> None:
        agent = self.agents[sid]
        service = self.sim.services[sid]
        now = self.sim.clock.tick
        try:
            if self.kinds[sid] == "lgbn":
                data = exclude_settling(service.metrics_buffer, service.action_ticks, self.sim.settling_ticks)
                self.agents[sid] = replace(agent, lgbn=fit(data), last_retrain_tick=now,
                                           retrain_count=agent.retrain_count + 1)
                return
            budget = self.sim.device.capacity - (len(self.sim.services) - 1)
            self.agents[sid] = lsa_retrain(agent, service.metrics_buffer, service.action_ticks, now=now,
                                           slos=self.slos[sid], core_budget=budget,
                                           settling_window=self.sim.settling_ticks, fallback=fallback)
        except FitError as e:
            logger.warning("Retraining %s at tick %d failed: %s", sid, now, e.reason)

    def _observed_fps(self, sid: str) -> float:
        service = self.sim.services[sid]
        recent = self.sim.read_buffer(sid, self.sim.clock.tick - self.interval)
        settled = exclude_settling(recent, service.action_ticks, self.sim.settling_ticks)
        if not settled:
            return service.state.fps
        return float(np.mean([s.fps for s in settled]))

    def _decide(self, sid: str) -> Decision | None:
        service, device, clock = self.sim.services[sid], self.sim.device, self.sim.clock
        fps = self._observed_fps(sid)
        self.report.audit.resolve(self.rep, sid, weighted_delta(
            self.slos[sid], {"pixel": service.state.pixel, "cores": service.state.cores, "fps": fps}))
        kind = self.kinds[sid]
        if kind == "lsa":
            self.agents[sid] = lsa_activate(self.agents[sid], clock.tick)
            return lsa_step(self.agents[sid], service, device, clock, self.slos[sid], fps)
        if kind == "lgbn":
            return lgbn_greedy_step(self.agents[sid], service, device, clock, self.slos[sid], fps)
        if kind == "vpa":
            return vpa_step(service, self.slos[sid], device, clock, fps)
        return None

    def run_phase(self, index: int, phase) -> None:
        sim = self.sim
        reclaimed = sim.resize(phase.max_cores)
        for sid, count in reclaimed.items():
            self.report.actions.append(ActionRecord(self.rep, sim.clock.tick, sid, "harness", "Reclaim", f"cores:{count}"))
        self._apply_phase_thresholds(phase)
        for sid in sorted(sim.services):
            if self.kinds[sid] == "vpa":
                self._record(vpa_pin_pixel(sim.services[sid], self.slos[sid], sim.device, sim.clock))
        if self.phase_retrain:
            for sid in sorted(self.agents):
                self._retrain(sid, fallback=False)

        for iteration in range(phase.duration // self.interval):
            start = sim.clock.tick
            exhausted = sim.device.c_free == 0
            if exhausted and self.report.exhaustion_ticks.get(self.rep) is None:
                self.report.exhaustion_ticks[self.rep] = start
            if not self.phase_retrain:
                for sid in sorted(self.agents):
                    if lsa_retrain_due(self.agents[sid], start):
                        self._retrain(sid, fallback=self.agents[sid].last_retrain_tick is not None)

            for sid in sorted(sim.services):
                self._record(self._decide(sid))

            swap = None
            if self.config.gso.enabled and exhausted:
                lgbns = {sid: self.agents[sid].lgbn if sid in self.agents else None for sid in sim.services}
                outcome = gso_step(sim.device, sim.ordered, lgbns, self.slos, self.config.gso.min_gain, sim.clock)
                if outcome is not None:
                    swap = SwapEvent(self.rep, outcome.tick, outcome.proposal.from_service,
                                     outcome.proposal.to_service, outcome.proposal.estimated_gain)
                    self.report.swaps.append(swap)
                    self.report.actions.append(ActionRecord(self.rep, outcome.tick, outcome.proposal.from_service,
                                                            "gso", f"SwapTo:{outcome.proposal.to_service}", "accepted"))

            values = self._run_interval()
            for sid in sorted(values):
                self.report.iterations.append(IterationRecord(self.rep, index + 1, iteration + 1, sid,
                                                              self.kinds[sid], values[sid], start))
            current = sum(values.values())
            if swap is not None and self.previous_global is not None:
                swap.realized_gain = current - self.previous_global
            self.previous_global = current

    def run(self) -> None:
        self.report.exhaustion_ticks.setdefault(self.rep, None)
        self._sample_cores()
        self.warm_up()
        for index, phase in enumerate(self.config.phases):
            self.run_phase(index, phase)
        self.report.metrics[self.rep] = self.sim.all_snapshots()


def _new_report(config: ScenarioConfig) -> RunReport:
    return RunReport(config.name, json.loads(canonical_json(config)), fingerprint(config), list(config.seeds),
                     len(config.phases), config.iterations_per_phase)


def run_scenario(config: ScenarioConfig, phase_retrain: bool) -> RunReport:
    report = _new_report(config)
    for rep, seed in enumerate(config.seeds, start=1):
        logger.info("%s: repetition %d/%d (seed %d)", config.name, rep, len(config.seeds), seed)
        _Repetition(config, rep, seed, report, phase_retrain).run()
    return report


def run_scenario1(config: ScenarioConfig) -> RunReport:
    """Threshold schedule with a retrain at every phase boundary."""
    return run_scenario(config, phase_retrain=True)


def run_scenario2(config: ScenarioConfig) -> RunReport:
    """Services contending for one device; agents retrain on the fallback interval."""
    if len(config.services) < 2:
        raise ConfigError("services: scenario2 needs at least two services")
    return run_scenario(config, phase_retrain=False)

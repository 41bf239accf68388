from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from src.agents.decision import Decision, estimated_delta, scaling_target
from src.learning.dqn import QPolicy, TrainConfig, act, train
from src.learning.train_env import Action, EnvConfig, observe
from src.lgbn.lgbn import SETTLING_WINDOW_TICKS, LgbnModel, MetricSnapshot, exclude_settling, fit
from src.simulation.physical_sim import RunningService, SimClock, apply_scaling
from src.slo.slo_core import Device, ServiceSpec, Slo

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PendingModels:
    lgbn: LgbnModel
    policy: QPolicy
    env_config: EnvConfig
    available_at: int


@dataclass(frozen=True)
class LsaState:
    """
    Local Scaling Agent of one service.

    Until a policy is present the agent only performs NoOp. Retrained models wait
    in `pending` for retrain_delay_ticks before they replace the active ones.
    """
    service_id: str
    spec: ServiceSpec
    c_phy: int
    train_config: TrainConfig = TrainConfig()
    threshold_maxima: tuple[float | None, float | None] = (None, None)
    lgbn: LgbnModel | None = None
    policy: QPolicy | None = None
    env_config: EnvConfig | None = None
    last_retrain_tick: int | None = None
    retrain_interval: int = 100
    decision_interval: int = 10
    retrain_delay_ticks: int = 0
    retrain_backoff: float = 1.0
    retrain_count: int = 0
    randomize_free: bool = False
    pending: PendingModels | None = None

    def __post_init__(self):
        if self.retrain_interval < 1 or self.decision_interval < 1:
            raise ValueError("retrain_interval and decision_interval must be >= 1")
        if self.retrain_backoff < 1:
            raise ValueError(f"retrain_backoff must be >= 1, got {self.retrain_backoff}")
        if self.retrain_delay_ticks < 0:
            raise ValueError("retrain_delay_ticks must be non-negative")

    @property
    def trained(self) -> bool:
        return self.policy is not None


def _thresholds(spec: ServiceSpec, slos: Sequence[Slo]) -> tuple[float, float]:
    by_variable = {q.variable: q.threshold for q in slos}
    return by_variable.get("pixel", float(spec.p_max)), by_variable.get("fps", 1.0)


def training_env_config(agent: LsaState, slos: Sequence[Slo], core_budget: int) -> EnvConfig:
    t_pixel, t_fps = _thresholds(agent.spec, slos)
    t_pixel_max, t_fps_max = agent.threshold_maxima
    return EnvConfig(p_min=agent.spec.p_min, p_max=agent.spec.p_max, c_phy=agent.c_phy,
                     core_budget=core_budget, t_pixel=t_pixel, t_fps=t_fps,
                     pixel_step=agent.spec.pixel_step, cores_step=agent.spec.cores_step,
                     t_pixel_max=max(t_pixel, t_pixel_max or t_pixel),
                     t_fps_max=max(t_fps, t_fps_max or t_fps),
                     randomize_free=agent.randomize_free)


def _retrain_seed(agent: LsaState) -> int:
    return int(np.random.SeedSequence([agent.train_config.seed, agent.retrain_count]).generate_state(1)[0])


def lsa_retrain(agent: LsaState, buffer: Sequence[MetricSnapshot], action_ticks: Sequence[int], *,
                now: int, slos: Sequence[Slo], core_budget: int,
                settling_window: int = SETTLING_WINDOW_TICKS, fallback: bool = False) -> LsaState:
    """
    Fit the LGBN on settled metrics and train a fresh policy against it.

    Args:
        agent: Current agent; never mutated
        buffer: The service's metric snapshots
        action_ticks: Ticks of every configuration change of the service, ascending
        now: Current tick
        slos: SLOs the policy should optimize
        core_budget: Cores the service may hold in total
        settling_window: Ticks after a change that are excluded from the fit
        fallback: Whether this retrain was triggered by the interval rather than a phase change

    Returns:
        The retrained agent; FitError propagates and leaves the caller's agent in place
    """
    model = fit(exclude_settling(buffer, list(action_ticks), settling_window))
    env_config = training_env_config(agent, slos, core_budget)
    policy = train(env_config, model, slos, replace(agent.train_config, seed=_retrain_seed(agent)))

    interval = agent.retrain_interval
    if fallback:
        interval = math.ceil(interval * agent.retrain_backoff)
    updated = replace(agent, last_retrain_tick=now, retrain_count=agent.retrain_count + 1, retrain_interval=interval)
    logger.info("LSA %s retrained at tick %d on %d rows: %s", agent.service_id, now, model.sample_count, model)

    if agent.retrain_delay_ticks > 0:
        return replace(updated, pending=PendingModels(model, policy, env_config, now + agent.retrain_delay_ticks))
    return replace(updated, lgbn=model, policy=policy, env_config=env_config, pending=None)


def lsa_activate(agent: LsaState, now: int) -> LsaState:
    """Promote background-trained models once they are available."""
    pending = agent.pending
    if pending is None or now < pending.available_at:
        return agent
    return replace(agent, lgbn=pending.lgbn, policy=pending.policy, env_config=pending.env_config, pending=None)


def lsa_retrain_due(agent: LsaState, now: int) -> bool:
    return agent.last_retrain_tick is None or now - agent.last_retrain_tick >= agent.retrain_interval


def _observed(service: RunningService, device: Device, fps: float | None) -> dict:
    return {"pixel": service.state.pixel, "cores": service.state.cores,
            "fps": service.state.fps if fps is None else fps, "c_free": device.c_free}


def _submit(name: str, agent_model: LgbnModel | None, service: RunningService, action: Action, device: Device,
            clock: SimClock, slos: Sequence[Slo], observed: dict) -> Decision:
    current = (service.state.pixel, service.state.cores)
    target = scaling_target(service.spec, *current, action)
    if action is Action.NO_OP or target == current:
        return Decision(service.service_id, name, clock.tick, action.label, observed,
                        estimated_delta=estimated_delta(agent_model, slos, *current))
    result = apply_scaling(service, target, device, clock)
    if not result.accepted:
        logger.info("%s %s: %s rejected (%s)", name, service.service_id, action.label, result.reason.value)
    return Decision(service.service_id, name, clock.tick, action.label, observed, target, result,
                    estimated_delta(agent_model, slos, *(target if result.accepted else current)))


def lsa_step(agent: LsaState, service: RunningService, device: Device, clock: SimClock, slos: Sequence[Slo],
             observed_fps: float | None = None) -> Decision:
    """
    Greedy policy inference followed by a scaling request; rejected requests become NoOp.
    """
    observed = _observed(service, device, observed_fps)
    if agent.policy is None:
        return Decision(service.service_id, "lsa", clock.tick, Action.NO_OP.label, observed)
    t_pixel, t_fps = _thresholds(agent.spec, slos)
    view_config = replace(agent.env_config, t_pixel=t_pixel, t_fps=t_fps,
                          t_pixel_max=max(t_pixel, agent.env_config.threshold_scales[0]),
                          t_fps_max=max(t_fps, agent.env_config.threshold_scales[1]))
    view = observe(view_config, service.state.pixel, service.state.cores, device.c_free)
    action = act(agent.policy, view, 0.0)
    return _submit("lsa", agent.lgbn, service, action, device, clock, slos, observed)


def lgbn_greedy_step(agent: LsaState, service: RunningService, device: Device, clock: SimClock,
                     slos: Sequence[Slo], observed_fps: float | None = None) -> Decision:
    """Pick the action whose expected next-state delta under the service LGBN is smallest."""
    observed = _observed(service, device, observed_fps)
    if agent.lgbn is None:
        return Decision(service.service_id, "lgbn", clock.tick, Action.NO_OP.label, observed)
    pixel, cores = service.state.pixel, service.state.cores
    best_action, best_delta = Action.NO_OP, math.inf
    for action in Action:
        target_pixel, target_cores = scaling_target(service.spec, pixel, cores, action)
        if target_cores - cores > device.c_free:
            target_cores = cores
        delta = estimated_delta(agent.lgbn, slos, target_pixel, target_cores)
        if delta < best_delta - 1e-12:
            best_action, best_delta = action, delta
    return _submit("lgbn", agent.lgbn, service, best_action, device, clock, slos, observed)

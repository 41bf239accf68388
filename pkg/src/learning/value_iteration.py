"""Exact dynamic-programming oracle for noise-free training environments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from src.learning.train_env import Action, EnvConfig, EnvState, apply_action
from src.lgbn.lgbn import LgbnModel, expect_fps
from src.slo.slo_core import Slo, weighted_delta

StateKey = tuple[int, int, int]


@dataclass(frozen=True)
class OracleResult:
    values: dict[StateKey, float]
    policy: dict[StateKey, Action]


def enumerate_states(config: EnvConfig) -> list[EnvState]:
    """Every (pixel, cores, c_free) reachable from reset."""
    states = []
    for pixel in config.pixel_grid:
        for cores in range(1, config.core_budget + 1):
            spare = config.core_budget - cores
            free_values = range(spare + 1) if config.randomize_free else (spare,)
            states.extend(EnvState(config, pixel, cores, c_free) for c_free in free_values)
    return states


def _key(state: EnvState) -> StateKey:
    return state.pixel, state.cores, state.c_free


def transition(state: EnvState, action: Action, model: LgbnModel, slos: Sequence[Slo]) -> tuple[EnvState, float]:
    pixel, cores, c_free = apply_action(state, action)
    fps = max(0.0, expect_fps(model, pixel, cores))
    next_state = EnvState(state.config, pixel, cores, c_free, fps)
    return next_state, -weighted_delta(slos, next_state.metrics())


def _check_deterministic(model: LgbnModel) -> None:
    if model.noise_sigma != 0:
        raise ValueError("The oracle requires a noise-free model (noise_sigma == 0)")


def value_iteration(config: EnvConfig, model: LgbnModel, slos: Sequence[Slo], gamma: float,
                    tolerance: float = 1e-10, max_iterations: int = 10000) -> OracleResult:
    _check_deterministic(model)
    states = enumerate_states(config)
    table = {_key(s): [transition(s, a, model, slos) for a in Action] for s in states}
    values = {key: 0.0 for key in table}
    for _ in range(max_iterations):
        updated = {key: max(r + gamma * values[_key(nxt)] for nxt, r in moves) for key, moves in table.items()}
        change = max(abs(updated[k] - values[k]) for k in values)
        values = updated
        if change < tolerance:
            break
    policy = {key: Action(int(np.argmax([r + gamma * values[_key(nxt)] for nxt, r in moves])))
              for key, moves in table.items()}
    return OracleResult(values, policy)


def optimal_return(config: EnvConfig, model: LgbnModel, slos: Sequence[Slo], start: EnvState, horizon: int) -> float:
    """Best undiscounted return over a finite horizon, by backward induction."""
    _check_deterministic(model)
    states = enumerate_states(config)
    table = {_key(s): [transition(s, a, model, slos) for a in Action] for s in states}
    values = {key: 0.0 for key in table}
    for _ in range(horizon):
        values = {key: max(r + values[_key(nxt)] for nxt, r in moves) for key, moves in table.items()}
    return values[_key(start)]


def rollout_return(choose: Callable[[EnvState], Action], start: EnvState, model: LgbnModel,
                   slos: Sequence[Slo], horizon: int) -> float:
    _check_deterministic(model)
    state, total = start, 0.0
    for _ in range(horizon):
        state, reward = transition(state, choose(state), model, slos)
        total += reward
    return total

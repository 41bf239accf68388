from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Protocol, Sequence

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from src.lgbn.lgbn import LgbnModel, sample_fps
from src.slo.slo_core import Slo, weighted_delta

OBSERVATION_DIM = 5
DEFAULT_EPISODE_LENGTH = 50


class Action(IntEnum):
    NO_OP = 0
    PIXEL_UP = 1
    PIXEL_DOWN = 2
    CORES_UP = 3
    CORES_DOWN = 4

    @property
    def label(self) -> str:
        return {0: "NoOp", 1: "PixelUp", 2: "PixelDown", 3: "CoresUp", 4: "CoresDown"}[int(self)]


@dataclass(frozen=True)
class EnvConfig:
    """
    Bounds and normalization scales of one training environment.

    core_budget is the number of cores this service may hold in total
    (its own cores plus the unclaimed ones).
    """
    p_min: int
    p_max: int
    c_phy: int
    core_budget: int
    t_pixel: float
    t_fps: float
    pixel_step: int = 100
    cores_step: int = 1
    t_pixel_max: float | None = None
    t_fps_max: float | None = None
    episode_length: int = DEFAULT_EPISODE_LENGTH
    randomize_free: bool = False

    def __post_init__(self):
        if self.p_min < 1 or self.p_min > self.p_max:
            raise ValueError(f"Invalid pixel range [{self.p_min}, {self.p_max}]")
        if not 1 <= self.core_budget <= self.c_phy:
            raise ValueError(f"core_budget must lie in [1, c_phy={self.c_phy}], got {self.core_budget}")
        if self.pixel_step < 1 or self.cores_step < 1:
            raise ValueError("Scaling steps must be >= 1")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")

    @property
    def pixel_grid(self) -> list[int]:
        return list(range(self.p_min, self.p_max + 1, self.pixel_step))

    @property
    def pixel_scale(self) -> float:
        return float(self.p_max)

    @property
    def threshold_scales(self) -> tuple[float, float]:
        return (self.t_pixel_max or self.t_pixel, self.t_fps_max or self.t_fps)


@dataclass(frozen=True)
class EnvState:
    config: EnvConfig = field(repr=False)
    pixel: int
    cores: int
    c_free: int
    fps: float = 0.0

    @property
    def thresholds(self) -> dict[str, float]:
        return {"pixel": self.config.t_pixel, "fps": self.config.t_fps}

    @property
    def normalized_view(self) -> np.ndarray:
        return observe(self.config, self.pixel, self.cores, self.c_free)

    def metrics(self) -> dict[str, float]:
        return {"pixel": self.pixel, "cores": self.cores, "fps": self.fps}


class Transition(NamedTuple):
    state: EnvState
    action: Action
    reward: float
    next_state: EnvState


class Policy(Protocol):
    def act(self, view: np.ndarray, rng: np.random.Generator) -> Action: ...


class RandomPolicy:
    def act(self, view: np.ndarray, rng: np.random.Generator) -> Action:
        return Action(int(rng.integers(len(Action))))


class ConstantPolicy:
    def __init__(self, action: Action = Action.NO_OP):
        self.action = action

    def act(self, view: np.ndarray, rng: np.random.Generator) -> Action:
        return self.action


def observe(config: EnvConfig, pixel: int, cores: int, c_free: int) -> np.ndarray:
    """Normalized state vector: pixel, cores, c_free, t_pixel, t_fps, each in [0, 1]."""
    t_pixel_scale, t_fps_scale = config.threshold_scales
    return np.array([
        pixel / config.pixel_scale,
        cores / config.c_phy,
        c_free / config.c_phy,
        config.t_pixel / t_pixel_scale,
        config.t_fps / t_fps_scale,
    ], dtype=np.float64)


def apply_action(state: EnvState, action: Action) -> tuple[int, int, int]:
    """
    Apply one scaling action with clamping at the bounds.

    Returns:
        The next (pixel, cores, c_free)
    """
    config = state.config
    pixel, cores, c_free = state.pixel, state.cores, state.c_free
    if action is Action.PIXEL_UP:
        pixel = min(pixel + config.pixel_step, config.p_max)
    elif action is Action.PIXEL_DOWN:
        pixel = max(pixel - config.pixel_step, config.p_min)
    elif action is Action.CORES_UP:
        claimed = min(config.cores_step, c_free)
        cores, c_free = cores + claimed, c_free - claimed
    elif action is Action.CORES_DOWN:
        released = cores - max(cores - config.cores_step, 1)
        cores, c_free = cores - released, c_free + released
    return pixel, cores, c_free


def reset(rng: np.random.Generator, config: EnvConfig) -> EnvState:
    grid = config.pixel_grid
    pixel = grid[int(rng.integers(len(grid)))]
    cores = int(rng.integers(1, config.core_budget + 1))
    c_free = config.core_budget - cores
    if config.randomize_free:
        c_free = int(rng.integers(0, c_free + 1))
    return EnvState(config, pixel, cores, c_free)


def step(state: EnvState, action: Action, model: LgbnModel, slos: Sequence[Slo],
         rng: np.random.Generator) -> tuple[EnvState, float]:
    """
    Simulate one transition under the fitted model.

    Returns:
        (next state, reward) where reward is the negated weighted delta of the next state
    """
    pixel, cores, c_free = apply_action(state, Action(action))
    fps = sample_fps(model, pixel, cores, rng)
    next_state = EnvState(state.config, pixel, cores, c_free, fps)
    reward = -weighted_delta(slos, next_state.metrics())
    return next_state, reward


def run_episode(policy: Policy, config: EnvConfig, model: LgbnModel, slos: Sequence[Slo],
                length: int, rng: np.random.Generator) -> list[Transition]:
    if length < 1:
        raise ValueError(f"Episode length must be >= 1, got {length}")
    state = reset(rng, config)
    transitions = []
    for _ in range(length):
        action = Action(policy.act(state.normalized_view, rng))
        next_state, reward = step(state, action, model, slos, rng)
        transitions.append(Transition(state, action, reward, next_state))
        state = next_state
    return transitions


class ScalingEnv(gym.Env):
    """Gymnasium surface over reset/step for one service and one fitted model."""

    metadata = {"render_modes": []}

    def __init__(self, config: EnvConfig, model: LgbnModel, slos: Sequence[Slo]):
        super().__init__()
        self.config = config
        self.model = model
        self.slos = list(slos)
        self.action_space = spaces.Discrete(len(Action))
        self.observation_space = spaces.Box(0.0, 1.0, shape=(OBSERVATION_DIM,), dtype=np.float64)
        self.state: EnvState | None = None
        self._elapsed = 0

    def reset(self, *, seed: int | None = None, options: dict | None = None):
        super().reset(seed=seed)
        self.state = reset(self.np_random, self.config)
        self._elapsed = 0
        return self.state.normalized_view, {"pixel": self.state.pixel, "cores": self.state.cores}

    def step(self, action):
        if self.state is None:
            raise RuntimeError("Call reset() before step()")
        self.state, reward = step(self.state, Action(int(action)), self.model, self.slos, self.np_random)
        self._elapsed += 1
        truncated = self._elapsed >= self.config.episode_length
        info = {"pixel": self.state.pixel, "cores": self.state.cores, "fps": self.state.fps}
        return self.state.normalized_view, reward, False, truncated, info

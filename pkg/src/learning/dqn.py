from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from src.learning.train_env import OBSERVATION_DIM, Action, EnvConfig, ScalingEnv
from src.lgbn.lgbn import LgbnModel
from src.slo.slo_core import Slo

logger = logging.getLogger(__name__)

N_ACTIONS = len(Action)


class DqnDomainError(ValueError):
    """Raised on malformed policies, inputs or training parameters."""
    pass


class TrainError(RuntimeError):
    """Raised when training diverges."""
    pass


@dataclass(frozen=True, eq=False)
class QPolicy:
    """
    Multilayer perceptron from a normalized state vector to one value per Action.

    Weights are stored (fan_in, fan_out); hidden layers use ReLU, the output is linear.
    """
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DqnDomainError("A policy needs one bias vector per weight matrix")
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DqnDomainError(f"Layer {index} has mismatched shapes {w.shape} / {b.shape}")
            if index and self.weights[index - 1].shape[1] != w.shape[0]:
                raise DqnDomainError(f"Layer {index} input does not match previous output")
        if self.weights[-1].shape[1] != N_ACTIONS:
            raise DqnDomainError(f"Output dimension must be {N_ACTIONS}, got {self.weights[-1].shape[1]}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    @classmethod
    def initialize(cls, input_dim: int, hidden: Sequence[int], rng: np.random.Generator) -> "QPolicy":
        sizes = [input_dim, *hidden, N_ACTIONS]
        weights = tuple(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
                        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))
        biases = tuple(np.zeros(fan_out) for fan_out in sizes[1:])
        return cls(weights, biases)

    @classmethod
    def zeros(cls, input_dim: int, hidden: Sequence[int] = ()) -> "QPolicy":
        sizes = [input_dim, *hidden, N_ACTIONS]
        weights = tuple(np.zeros((fan_in, fan_out)) for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))
        biases = tuple(np.zeros(fan_out) for fan_out in sizes[1:])
        return cls(weights, biases)

    def copy(self) -> "QPolicy":
        return QPolicy(tuple(w.copy() for w in self.weights), tuple(b.copy() for b in self.biases))

    def same_weights(self, other: "QPolicy") -> bool:
        if len(self.weights) != len(other.weights):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases))

    def to_json(self) -> str:
        layers = [{"weights": w.tolist(), "biases": b.tolist()} for w, b in zip(self.weights, self.biases)]
        return json.dumps({"input_dim": self.input_dim, "hidden": list(self.hidden), "layers": layers})

    @classmethod
    def from_json(cls, text: str) -> "QPolicy":
        document = json.loads(text)
        try:
            weights = tuple(np.array(layer["weights"], dtype=np.float64) for layer in document["layers"])
            biases = tuple(np.array(layer["biases"], dtype=np.float64) for layer in document["layers"])
        except (KeyError, TypeError) as e:
            raise DqnDomainError(f"Malformed policy document: {e}") from e
        policy = cls(weights, biases)
        if policy.input_dim != document.get("input_dim", policy.input_dim):
            raise DqnDomainError("input_dim does not match the stored weights")
        return policy


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5000
    batch_size: int = 64
    target_sync: int = 250
    total_steps: int = 20000
    hidden: tuple[int, ...] = (64, 64)
    replay_capacity: int = 10000
    clip_norm: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0 < self.gamma < 1:
            raise DqnDomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise DqnDomainError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise DqnDomainError("learning_rate and clip_norm must be positive")
        if min(self.batch_size, self.target_sync, self.replay_capacity) < 1:
            raise DqnDomainError("batch_size, target_sync and replay_capacity must be >= 1")
        if self.total_steps < 0 or self.epsilon_decay_steps < 0:
            raise DqnDomainError("total_steps and epsilon_decay_steps must be non-negative")
        if any(h < 1 for h in self.hidden):
            raise DqnDomainError(f"Hidden widths must be positive, got {self.hidden}")

    def epsilon_at(self, step_index: int) -> float:
        """Linear decay from epsilon_start to epsilon_end, constant afterwards."""
        if self.epsilon_decay_steps == 0 or step_index >= self.epsilon_decay_steps:
            return self.epsilon_end
        fraction = step_index / self.epsilon_decay_steps
        return self.epsilon_start + fraction * (self.epsilon_end - self.epsilon_start)


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray


@dataclass
class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""
    capacity: int
    state_dim: int = OBSERVATION_DIM
    size: int = field(init=False, default=0)
    _position: int = field(init=False, default=0, repr=False)
    _states: np.ndarray = field(init=False, repr=False)
    _actions: np.ndarray = field(init=False, repr=False)
    _rewards: np.ndarray = field(init=False, repr=False)
    _next_states: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise DqnDomainError(f"Replay capacity must be >= 1, got {self.capacity}")
        self._states = np.zeros((self.capacity, self.state_dim))
        self._actions = np.zeros(self.capacity, dtype=np.int64)
        self._rewards = np.zeros(self.capacity)
        self._next_states = np.zeros((self.capacity, self.state_dim))

    def __len__(self) -> int:
        return self.size

    def add(self, state: np.ndarray, action: int, reward: float, next_state: np.ndarray) -> None:
        i = self._position
        self._states[i] = state
        self._actions[i] = int(action)
        self._rewards[i] = reward
        self._next_states[i] = next_state
        self._position = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def oldest(self) -> tuple[np.ndarray, int, float, np.ndarray]:
        if self.size == 0:
            raise IndexError("Replay buffer is empty")
        i = self._position if self.size == self.capacity else 0
        return self._states[i], int(self._actions[i]), float(self._rewards[i]), self._next_states[i]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise DqnDomainError("Cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self._states[idx], self._actions[idx], self._rewards[idx], self._next_states[idx])


def _forward(policy: QPolicy, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    activations, pre_activations = [x], []
    last = len(policy.weights) - 1
    for index, (w, b) in enumerate(zip(policy.weights, policy.biases)):
        z = activations[-1] @ w + b
        pre_activations.append(z)
        activations.append(z if index == last else np.maximum(z, 0.0))
    return activations, pre_activations


def predict_q(policy: QPolicy, state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (policy.input_dim,):
        raise DqnDomainError(f"State must have shape ({policy.input_dim},), got {state.shape}")
    q = _forward(policy, state)[0][-1]
    if not np.all(np.isfinite(q)):
        raise DqnDomainError("Non-finite action values")
    return q


def act(policy: QPolicy, state: np.ndarray, epsilon: float, rng: np.random.Generator | None = None) -> Action:
    """Epsilon-greedy choice; greedy ties go to the lowest action index."""
    if not 0 <= epsilon <= 1:
        raise DqnDomainError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0 and rng is None:
        raise DqnDomainError("Exploration needs a random generator")
    if epsilon > 0 and rng.random() < epsilon:
        return Action(int(rng.integers(N_ACTIONS)))
    return Action(int(np.argmax(predict_q(policy, state))))


def _td_targets(target: QPolicy, batch: Batch, gamma: float) -> np.ndarray:
    next_q = _forward(target, batch.next_states)[0][-1]
    return batch.rewards + gamma * next_q.max(axis=1)


def td_loss(policy: QPolicy, target: QPolicy, batch: Batch, gamma: float) -> float:
    """Mean squared temporal-difference error against a frozen target network."""
    q = _forward(policy, batch.states)[0][-1]
    chosen = q[np.arange(len(batch.actions)), batch.actions]
    return float(np.mean((chosen - _td_targets(target, batch, gamma)) ** 2))


def td_gradients(policy: QPolicy, target: QPolicy, batch: Batch,
                 gamma: float) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """
    Loss and analytic gradients of td_loss with respect to every layer of policy.

    Returns:
        (loss, [(d_weights, d_biases) per layer])
    """
    n = len(batch.actions)
    rows = np.arange(n)
    activations, pre_activations = _forward(policy, batch.states)
    chosen = activations[-1][rows, batch.actions]
    error = chosen - _td_targets(target, batch, gamma)
    loss = float(np.mean(error ** 2))

    delta = np.zeros_like(activations[-1])
    delta[rows, batch.actions] = 2.0 * error / n
    grads = []
    for index in range(len(policy.weights) - 1, -1, -1):
        grads.append((activations[index].T @ delta, delta.sum(axis=0)))
        if index > 0:
            delta = (delta @ policy.weights[index].T) * (pre_activations[index - 1] > 0)
    grads.reverse()
    return loss, grads


def sgd_step(policy: QPolicy, grads: list[tuple[np.ndarray, np.ndarray]], learning_rate: float,
             clip_norm: float = 10.0) -> QPolicy:
    """One plain gradient-descent update with global-norm clipping; returns a new policy."""
    norm = float(np.sqrt(sum(np.sum(dw ** 2) + np.sum(db ** 2) for dw, db in grads)))
    scale = learning_rate * (clip_norm / norm if norm > clip_norm else 1.0)
    weights = tuple(w - scale * dw for w, (dw, _) in zip(policy.weights, grads))
    biases = tuple(b - scale * db for b, (_, db) in zip(policy.biases, grads))
    return QPolicy(weights, biases)


def train(env_config: EnvConfig, model: LgbnModel, slos: Sequence[Slo], cfg: TrainConfig,
          loss_log: list[float] | None = None) -> QPolicy:
    """
    Standard DQN loop inside the model-based training environment.

    Args:
        env_config: Bounds and thresholds of the environment
        model: Fitted LGBN driving state transitions
        slos: SLOs defining the reward
        cfg: Hyperparameters and seed
        loss_log: Optional list receiving the TD loss of every update

    Returns:
        The final online policy
    """
    init_seed, env_seed, replay_seed = np.random.SeedSequence(cfg.seed).spawn(3)
    env_rng = np.random.default_rng(env_seed)
    replay_rng = np.random.default_rng(replay_seed)
    policy = QPolicy.initialize(OBSERVATION_DIM, cfg.hidden, np.random.default_rng(init_seed))
    if cfg.total_steps == 0:
        return policy

    target = policy.copy()
    buffer = ReplayBuffer(cfg.replay_capacity)
    env = ScalingEnv(env_config, model, slos)
    env.np_random = env_rng
    view, _ = env.reset()
    loss = float("nan")

    for t in range(cfg.total_steps):
        action = act(policy, view, cfg.epsilon_at(t), env_rng)
        next_view, reward, _, truncated, _ = env.step(action)
        buffer.add(view, action, reward, next_view)
        view = env.reset()[0] if truncated else next_view

        if len(buffer) >= cfg.batch_size:
            batch = buffer.sample(cfg.batch_size, replay_rng)
            loss, grads = td_gradients(policy, target, batch, cfg.gamma)
            if not np.isfinite(loss):
                raise TrainError(f"TD loss diverged at step {t}")
            policy = sgd_step(policy, grads, cfg.learning_rate, cfg.clip_norm)
            if loss_log is not None:
                loss_log.append(loss)

        if (t + 1) % cfg.target_sync == 0:
            target = policy.copy()

    logger.debug("Trained DQN for %d steps, final loss %.6f", cfg.total_steps, loss)
    return policy

from __future__ import annotations

import bisect
import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Fixed network structure: fps depends linearly on its two parents.
STRUCTURE = {"pixel": (), "cores": (), "fps": ("pixel", "cores")}

MIN_FIT_ROWS = 10
SETTLING_WINDOW_TICKS = 4


class FitError(ValueError):
    """Raised when metric history cannot support a fit."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class MetricSnapshot:
    service_id: str
    tick: int
    pixel: int
    cores: int
    fps: float

    def metrics(self) -> dict[str, float]:
        return {"pixel": self.pixel, "cores": self.cores, "fps": self.fps}

    def to_dict(self) -> dict:
        return {"service_id": self.service_id, "tick": self.tick, "pixel": self.pixel,
                "cores": self.cores, "fps": self.fps}

    @classmethod
    def from_dict(cls, data: dict) -> "MetricSnapshot":
        return cls(str(data["service_id"]), int(data["tick"]), int(data["pixel"]),
                   int(data["cores"]), float(data["fps"]))


@dataclass(frozen=True)
class LgbnModel:
    """
    Linear Gaussian conditional of fps given pixel and cores.

    fps ~ Normal(intercept + beta_cores * cores + beta_pixel * pixel, noise_sigma^2)
    """
    intercept: float
    beta_cores: float
    beta_pixel: float
    noise_sigma: float = 0.0
    sample_count: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")

    @property
    def structure(self) -> dict[str, tuple[str, ...]]:
        return STRUCTURE

    def to_json(self) -> str:
        document = {"structure": {node: list(parents) for node, parents in STRUCTURE.items()},
                    "coefficients": {"intercept": self.intercept, "cores": self.beta_cores,
                                     "pixel": self.beta_pixel},
                    "noise_sigma": self.noise_sigma,
                    "sample_count": self.sample_count}
        return json.dumps(document, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LgbnModel":
        document = json.loads(text)
        parents = tuple(document.get("structure", {}).get("fps", STRUCTURE["fps"]))
        if set(parents) != set(STRUCTURE["fps"]):
            raise ValueError(f"Unsupported LGBN structure for fps: {parents}")
        coefficients = document["coefficients"]
        return cls(float(coefficients["intercept"]), float(coefficients["cores"]),
                   float(coefficients["pixel"]), float(document["noise_sigma"]),
                   int(document["sample_count"]))


def exclude_settling(snapshots: Sequence[MetricSnapshot], action_ticks: Sequence[int], window: int) -> list[MetricSnapshot]:
    """
    Drop snapshots recorded while a scaling action was still settling.

    A snapshot at tick s is dropped if some action tick a satisfies a < s <= a + window.

    Args:
        snapshots: Snapshots ordered by tick
        action_ticks: Action ticks in ascending order
        window: Settling window in ticks

    Returns:
        The retained snapshots in their original order
    """
    if not action_ticks or window <= 0:
        return list(snapshots)
    kept = []
    for snapshot in snapshots:
        # latest action strictly before this snapshot
        index = bisect.bisect_left(action_ticks, snapshot.tick) - 1
        if index >= 0 and snapshot.tick <= action_ticks[index] + window:
            continue
        kept.append(snapshot)
    return kept


def fit(data: Sequence[MetricSnapshot]) -> LgbnModel:
    """Ordinary least squares fit of fps on cores and pixel."""
    if len(data) < MIN_FIT_ROWS:
        raise FitError(f"need at least {MIN_FIT_ROWS} rows, got {len(data)}")
    cores = np.array([row.cores for row in data], dtype=np.float64)
    pixel = np.array([row.pixel for row in data], dtype=np.float64)
    fps = np.array([row.fps for row in data], dtype=np.float64)
    for name, column in (("pixel", pixel), ("cores", cores)):
        if np.unique(column).size < 2:
            raise FitError(f"parent column '{name}' has fewer than 2 distinct values")

    design = np.column_stack([np.ones_like(cores), cores, pixel])
    coefficients, _, rank, _ = np.linalg.lstsq(design, fps, rcond=None)
    if rank < design.shape[1]:
        raise FitError(f"rank-deficient design (rank {rank} < {design.shape[1]})")
    residuals = fps - design @ coefficients
    sigma = float(np.sqrt(np.mean(residuals ** 2)))

    model = LgbnModel(float(coefficients[0]), float(coefficients[1]), float(coefficients[2]), sigma, len(data))
    logger.debug("Fitted LGBN on %d rows: %s", len(data), model)
    return model


def expect_fps(model: LgbnModel, pixel: float, cores: float) -> float:
    return model.intercept + model.beta_cores * cores + model.beta_pixel * pixel


def sample_fps(model: LgbnModel, pixel: float, cores: float, rng: np.random.Generator) -> float:
    # fps is physically non-negative; negative conditional means clamp here
    draw = expect_fps(model, pixel, cores) + rng.normal(0.0, model.noise_sigma)
    return max(0.0, float(draw))

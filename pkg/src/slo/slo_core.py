from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence


# The SLO sweet spot; fulfilling exactly, not more, is optimal.
PHI_OPT = 1.0

VARIABLES = ("pixel", "cores", "fps")


class SloDomainError(ValueError):
    """Raised when an SLO or a metric lies outside its domain."""
    pass


class Relation(Enum):
    GREATER_THAN = ">"
    LESS_THAN = "<"

    @classmethod
    def parse(cls, value: "Relation | str") -> "Relation":
        if isinstance(value, Relation):
            return value
        aliases = {">": cls.GREATER_THAN, "gt": cls.GREATER_THAN, "greaterthan": cls.GREATER_THAN,
                   "<": cls.LESS_THAN, "lt": cls.LESS_THAN, "lessthan": cls.LESS_THAN}
        key = str(value).strip().lower().replace("_", "")
        if key not in aliases:
            raise SloDomainError(f"Unknown relation '{value}'")
        return aliases[key]


@dataclass(frozen=True)
class Slo:
    """One constraint <variable, relation, threshold, weight> on a service variable."""
    variable: str
    relation: Relation
    threshold: float
    weight: float

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise SloDomainError(f"Unknown SLO variable '{self.variable}'")
        if not self.threshold > 0:
            raise SloDomainError(f"SLO threshold for '{self.variable}' must be positive, got {self.threshold}")
        if not self.weight > 0:
            raise SloDomainError(f"SLO weight for '{self.variable}' must be positive, got {self.weight}")


@dataclass(frozen=True)
class ServiceSpec:
    service_id: str
    slos: tuple[Slo, ...]
    pixel_bounds: tuple[int, int]
    pixel_step: int = 100
    cores_step: int = 1

    def __post_init__(self):
        object.__setattr__(self, "slos", tuple(self.slos))
        object.__setattr__(self, "pixel_bounds", tuple(self.pixel_bounds))
        check_unique_variables(self.slos)
        p_min, p_max = self.pixel_bounds
        if p_min < 1 or p_min > p_max:
            raise SloDomainError(f"Invalid pixel bounds {self.pixel_bounds} for '{self.service_id}'")
        if self.pixel_step < 1 or self.cores_step < 1:
            raise SloDomainError(f"Scaling steps must be >= 1 for '{self.service_id}'")

    @property
    def p_min(self) -> int:
        return self.pixel_bounds[0]

    @property
    def p_max(self) -> int:
        return self.pixel_bounds[1]

    def threshold(self, variable: str) -> float | None:
        for slo in self.slos:
            if slo.variable == variable:
                return slo.threshold
        return None

    def with_slos(self, slos: Iterable[Slo]) -> "ServiceSpec":
        return replace(self, slos=tuple(slos))


@dataclass
class Device:
    """
    An edge device with c_phy physical cores.

    core_limit is the active allocation cap (e.g. a phase restricting cores);
    when unset the whole device is available.
    """
    c_phy: int
    allocations: dict[str, int] = field(default_factory=dict)
    core_limit: int | None = None

    def __post_init__(self):
        if self.c_phy < 1:
            raise SloDomainError(f"c_phy must be a positive integer, got {self.c_phy}")

    @property
    def capacity(self) -> int:
        if self.core_limit is None:
            return self.c_phy
        return min(self.c_phy, self.core_limit)

    @property
    def allocated(self) -> int:
        return sum(self.allocations.values())

    @property
    def c_free(self) -> int:
        return self.capacity - self.allocated


@dataclass(frozen=True)
class ServiceState:
    pixel: int
    cores: int
    fps: float
    tick: int

    def metrics(self) -> dict[str, float]:
        return {"pixel": self.pixel, "cores": self.cores, "fps": self.fps}


def check_unique_variables(slos: Sequence[Slo]) -> None:
    seen = set()
    for slo in slos:
        if slo.variable in seen:
            raise SloDomainError(f"Duplicate SLO for variable '{slo.variable}'")
        seen.add(slo.variable)


def slo_fulfillment(q: Slo, m: float, allow_negative: bool = False) -> float:
    """
    Fuzzy fulfillment of one SLO for metric value m.

    GreaterThan yields m/t and may exceed 1.0; LessThan yields 1 - m/t.

    Args:
        q: The SLO
        m: Observed (or estimated) metric value
        allow_negative: Accept negative m, used for model estimates that extrapolate

    Returns:
        The fulfillment value phi
    """
    if m < 0 and not allow_negative:
        raise SloDomainError(f"Metric for '{q.variable}' must be non-negative, got {m}")
    if q.relation is Relation.GREATER_THAN:
        return m / q.threshold
    return 1.0 - m / q.threshold


def _metric_for(q: Slo, m: Mapping[str, float]) -> float:
    if q.variable not in m:
        raise SloDomainError(f"Missing metric for SLO variable '{q.variable}'")
    return m[q.variable]


def weighted_delta(slos: Sequence[Slo], m: Mapping[str, float]) -> float:
    """Weighted distance of every SLO from the optimum; the negated value is the RL reward."""
    return sum(abs(PHI_OPT - slo_fulfillment(q, _metric_for(q, m))) * q.weight for q in slos)


def cumulative_fulfillment(slos: Sequence[Slo], m: Mapping[str, float], allow_negative: bool = False) -> float:
    """
    Weighted sum of per-SLO fulfillment, each clamped at 1.0.

    Bounded above by the sum of weights.
    """
    return sum(min(PHI_OPT, slo_fulfillment(q, _metric_for(q, m), allow_negative)) * q.weight for q in slos)


def max_fulfillment(slos: Sequence[Slo]) -> float:
    return sum(q.weight for q in slos)


def with_thresholds(slos: Sequence[Slo], thresholds: Mapping[str, float]) -> list[Slo]:
    return [replace(q, threshold=float(thresholds[q.variable])) if q.variable in thresholds else q for q in slos]


def cv_service_slos(t_pixel: float, t_fps: float, t_cores: float = 10) -> list[Slo]:
    """SLO set of the video processing service: pixel (0.8), cores (0.4), fps (1.2)."""
    return [
        Slo("pixel", Relation.GREATER_THAN, float(t_pixel), 0.8),
        Slo("cores", Relation.LESS_THAN, float(t_cores), 0.4),
        Slo("fps", Relation.GREATER_THAN, float(t_fps), 1.2),
    ]

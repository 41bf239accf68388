from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from src.lgbn.lgbn import LgbnModel, expect_fps
from src.simulation.physical_sim import RunningService, ScalingResult, SimClock, swap_core
from src.slo.slo_core import Device, Slo, cumulative_fulfillment

logger = logging.getLogger(__name__)

DEFAULT_MIN_GAIN = 0.05


@dataclass(frozen=True)
class SwapProposal:
    from_service: str
    to_service: str
    estimated_gain: float


@dataclass(frozen=True)
class SwapOutcome:
    proposal: SwapProposal
    tick: int
    result: ScalingResult


def predicted_fulfillment(model: LgbnModel, slos: Sequence[Slo], pixel: int, cores: int) -> float:
    """phi_sigma of a configuration with fps replaced by the LGBN conditional mean."""
    fps = expect_fps(model, pixel, cores)
    return cumulative_fulfillment(slos, {"pixel": pixel, "cores": cores, "fps": fps}, allow_negative=True)


def gso_evaluate(configs: Mapping[str, tuple[int, int]], lgbns: Mapping[str, LgbnModel | None],
                 slos: Mapping[str, Sequence[Slo]]) -> list[SwapProposal]:
    """
    Estimate the global fulfillment change of every single-core swap between two services.

    Args:
        configs: Current (pixel, cores) per service id
        lgbns: Fitted model per service id; pairs with a missing model are skipped
        slos: SLO set per service id

    Returns:
        One proposal per ordered pair whose donor holds more than one core
    """
    proposals = []
    ids = sorted(configs)
    for donor in ids:
        for receiver in ids:
            if donor == receiver:
                continue
            if lgbns.get(donor) is None or lgbns.get(receiver) is None:
                logger.debug("GSO skips %s -> %s: no LGBN", donor, receiver)
                continue
            donor_pixel, donor_cores = configs[donor]
            receiver_pixel, receiver_cores = configs[receiver]
            if donor_cores <= 1:
                continue
            before = (predicted_fulfillment(lgbns[donor], slos[donor], donor_pixel, donor_cores)
                      + predicted_fulfillment(lgbns[receiver], slos[receiver], receiver_pixel, receiver_cores))
            after = (predicted_fulfillment(lgbns[donor], slos[donor], donor_pixel, donor_cores - 1)
                     + predicted_fulfillment(lgbns[receiver], slos[receiver], receiver_pixel, receiver_cores + 1))
            proposals.append(SwapProposal(donor, receiver, after - before))
    return proposals


def gso_step(device: Device, services: Sequence[RunningService], lgbns: Mapping[str, LgbnModel | None],
             slos: Mapping[str, Sequence[Slo]], min_gain: float, clock: SimClock) -> SwapOutcome | None:
    """Execute the best swap whose estimated gain exceeds min_gain, if any."""
    by_id = {s.service_id: s for s in services}
    configs = {sid: (s.state.pixel, s.state.cores) for sid, s in by_id.items()}
    best = None
    for proposal in gso_evaluate(configs, lgbns, slos):
        if proposal.estimated_gain > min_gain and (best is None or proposal.estimated_gain > best.estimated_gain):
            best = proposal
    if best is None:
        return None

    result = swap_core(device, by_id[best.from_service], by_id[best.to_service], clock)
    if result.accepted:
        logger.info("GSO swapped a core %s -> %s at tick %d (estimated gain %.4f)",
                    best.from_service, best.to_service, clock.tick, best.estimated_gain)
    else:
        logger.info("GSO swap %s -> %s rejected (%s)", best.from_service, best.to_service, result.reason.value)
        return None
    return SwapOutcome(best, clock.tick, result)

from __future__ import annotations

import logging
from typing import Sequence

from src.agents.decision import Decision
from src.simulation.physical_sim import RunningService, SimClock, apply_scaling
from src.slo.slo_core import Device, Slo, slo_fulfillment

logger = logging.getLogger(__name__)


def _fps_slo(slos: Sequence[Slo]) -> Slo:
    for q in slos:
        if q.variable == "fps":
            return q
    raise ValueError("The VPA baseline needs an fps SLO")


def vpa_pin_pixel(service: RunningService, slos: Sequence[Slo], device: Device, clock: SimClock) -> Decision | None:
    """Set pixel to the pixel SLO threshold; the VPA never moves it afterwards."""
    t_pixel = next((q.threshold for q in slos if q.variable == "pixel"), None)
    if t_pixel is None or int(t_pixel) == service.state.pixel:
        return None
    observed = {"pixel": service.state.pixel, "cores": service.state.cores, "fps": service.state.fps,
                "c_free": device.c_free}
    target = (int(t_pixel), service.state.cores)
    result = apply_scaling(service, target, device, clock)
    return Decision(service.service_id, "vpa", clock.tick, "PinPixel", observed, target, result)


def vpa_step(service: RunningService, slos: Sequence[Slo], device: Device, clock: SimClock,
             observed_fps: float | None = None) -> Decision:
    """
    Vertical autoscaling on fps fulfillment alone.

    One more core while phi(fps) < 1 and a core is free, one less while phi(fps) > 1
    and more than one core is held.
    """
    fps = service.state.fps if observed_fps is None else observed_fps
    cores = service.state.cores
    observed = {"pixel": service.state.pixel, "cores": cores, "fps": fps, "c_free": device.c_free}
    phi = slo_fulfillment(_fps_slo(slos), fps)

    if phi < 1.0 and device.c_free >= 1:
        action, target_cores = "CoresUp", cores + 1
    elif phi > 1.0 and cores > 1:
        action, target_cores = "CoresDown", cores - 1
    else:
        return Decision(service.service_id, "vpa", clock.tick, "NoOp", observed)

    target = (service.state.pixel, target_cores)
    result = apply_scaling(service, target, device, clock)
    if not result.accepted:
        logger.info("VPA %s: %s rejected (%s)", service.service_id, action, result.reason.value)
    return Decision(service.service_id, "vpa", clock.tick, action, observed, target, result)

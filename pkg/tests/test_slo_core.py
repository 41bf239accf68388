import numpy as np
import pytest

from src.slo.slo_core import (Device, Relation, ServiceSpec, Slo, SloDomainError, cumulative_fulfillment,
                              cv_service_slos, max_fulfillment, slo_fulfillment, weighted_delta, with_thresholds)


def test_fulfillment_examples():
    assert slo_fulfillment(Slo("fps", Relation.GREATER_THAN, 25, 1.0), 30) == pytest.approx(1.2, abs=1e-12)
    assert slo_fulfillment(Slo("cores", Relation.LESS_THAN, 10, 0.4), 1) == pytest.approx(0.9, abs=1e-12)
    assert slo_fulfillment(Slo("pixel", Relation.GREATER_THAN, 800, 0.8), 800) == 1.0


def test_negative_metric_is_a_domain_error():
    q = Slo("fps", Relation.GREATER_THAN, 25, 1.0)
    with pytest.raises(SloDomainError):
        slo_fulfillment(q, -1.0)
    assert slo_fulfillment(q, -5.0, allow_negative=True) == pytest.approx(-0.2)


def test_weighted_delta_examples(table1_slos):
    # phi(pixel)=1.0, phi(cores)=0.9, phi(fps)=1.2
    metrics = {"pixel": 800, "cores": 1, "fps": 33 * 1.2}
    assert weighted_delta(table1_slos, metrics) == pytest.approx(0.28, abs=1e-12)
    assert weighted_delta([Slo("fps", Relation.GREATER_THAN, 35, 1.2)], {"fps": 0}) == pytest.approx(1.2, abs=1e-12)
    at_optimum = [Slo("pixel", Relation.GREATER_THAN, 800, 0.8), Slo("fps", Relation.GREATER_THAN, 33, 1.2)]
    assert weighted_delta(at_optimum, {"pixel": 800, "fps": 33}) == 0.0


def test_missing_metric_is_a_domain_error(table1_slos):
    with pytest.raises(SloDomainError):
        weighted_delta(table1_slos, {"pixel": 800, "cores": 2})
    with pytest.raises(SloDomainError):
        cumulative_fulfillment(table1_slos, {"fps": 10})


def test_cumulative_fulfillment_bound(table1_slos):
    assert max_fulfillment(table1_slos) == pytest.approx(2.4, abs=1e-12)
    assert cumulative_fulfillment(table1_slos, {"pixel": 800, "cores": 0, "fps": 33}) == pytest.approx(2.4, abs=1e-12)
    zero = cumulative_fulfillment(table1_slos, {"pixel": 0, "cores": 10, "fps": 0})
    assert zero == 0.0
    overfulfilled = [Slo("pixel", Relation.GREATER_THAN, 800, 0.8), Slo("fps", Relation.GREATER_THAN, 33, 1.2),
                     Slo("cores", Relation.GREATER_THAN, 2, 0.4)]
    assert cumulative_fulfillment(overfulfilled, {"pixel": 800, "fps": 66, "cores": 2}) == pytest.approx(2.4, abs=1e-12)


def test_fulfillment_is_monotone():
    rng = np.random.default_rng(1)
    greater = Slo("fps", Relation.GREATER_THAN, 30, 1.0)
    less = Slo("cores", Relation.LESS_THAN, 10, 0.4)
    for _ in range(1000):
        a, b = sorted(rng.uniform(0, 100, size=2))
        if a == b:
            continue
        assert slo_fulfillment(greater, a) < slo_fulfillment(greater, b)
        assert slo_fulfillment(less, a) > slo_fulfillment(less, b)


def test_delta_and_fulfillment_properties(table1_slos):
    rng = np.random.default_rng(2)
    bound = max_fulfillment(table1_slos)
    for _ in range(1000):
        metrics = {"pixel": rng.uniform(0, 2000), "cores": rng.uniform(0, 10), "fps": rng.uniform(0, 60)}
        k = rng.uniform(0.1, 5.0)
        scaled = [Slo(q.variable, q.relation, q.threshold, q.weight * k) for q in table1_slos]
        delta = weighted_delta(table1_slos, metrics)
        phi_sigma = cumulative_fulfillment(table1_slos, metrics)
        assert delta >= 0
        assert phi_sigma <= bound + 1e-12
        assert weighted_delta(scaled, metrics) == pytest.approx(k * delta, rel=1e-12)
        assert cumulative_fulfillment(scaled, metrics) == pytest.approx(k * phi_sigma, rel=1e-12, abs=1e-12)


def test_slo_validation():
    with pytest.raises(SloDomainError):
        Slo("fps", Relation.GREATER_THAN, 0, 1.0)
    with pytest.raises(SloDomainError):
        Slo("fps", Relation.GREATER_THAN, 10, -1.0)
    with pytest.raises(SloDomainError):
        Slo("latency", Relation.LESS_THAN, 10, 1.0)
    assert Relation.parse("GreaterThan") is Relation.GREATER_THAN
    assert Relation.parse("<") is Relation.LESS_THAN


def test_service_spec_rejects_duplicate_variables():
    slos = [Slo("fps", Relation.GREATER_THAN, 30, 1.0), Slo("fps", Relation.GREATER_THAN, 20, 1.0)]
    with pytest.raises(SloDomainError):
        ServiceSpec("cv", slos, (100, 2000))
    with pytest.raises(SloDomainError):
        ServiceSpec("cv", cv_service_slos(800, 33), (2000, 100))


def test_device_capacity_follows_core_limit():
    device = Device(10, {"a": 6, "b": 3})
    assert device.c_free == 1
    device.core_limit = 9
    assert device.c_free == 0
    device.core_limit = 12
    assert device.capacity == 10


def test_with_thresholds_replaces_only_named_variables(table1_slos):
    updated = with_thresholds(table1_slos, {"pixel": 1900, "fps": 35})
    assert [q.threshold for q in updated] == [1900.0, 10.0, 35.0]
    assert [q.weight for q in updated] == [0.8, 0.4, 1.2]

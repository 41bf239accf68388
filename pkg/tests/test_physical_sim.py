import numpy as np
import pytest

from src.lgbn.lgbn import exclude_settling, fit
from src.simulation.physical_sim import (CoreAccountingError, GroundTruthModel, RejectReason, SimClock, Simulator,
                                         swap_core, write_metrics_csv, write_metrics_jsonl)
from src.slo.slo_core import ServiceSpec, cv_service_slos

NOISE_FREE = GroundTruthModel(sigma=0.0)


def _spec(service_id="cv"):
    return ServiceSpec(service_id, cv_service_slos(800, 33), (100, 2000))


def _sim(seed=0, c_phy=10):
    return Simulator(c_phy, np.random.default_rng(seed))


def _advance(sim, ticks):
    for _ in range(ticks):
        sim.tick()


def test_snapshot_follows_ground_truth():
    sim = _sim()
    sim.add_service(_spec(), 800, 6, NOISE_FREE)
    (snapshot,) = sim.tick()
    assert snapshot.fps == pytest.approx(33.0)
    assert (snapshot.tick, snapshot.pixel, snapshot.cores) == (1, 800, 6)
    assert sim.clock.tick == 1


def test_settling_delays_the_effect_of_a_change():
    sim = _sim()
    service = sim.add_service(_spec(), 800, 4, NOISE_FREE)
    _advance(sim, 3)
    change_tick = sim.clock.tick
    assert sim.apply_scaling("cv", 800, 6).accepted
    _advance(sim, 6)
    fps = {s.tick: s.fps for s in service.metrics_buffer}
    for t in range(change_tick + 1, change_tick + 5):
        assert fps[t] == pytest.approx(21.0)
    assert fps[change_tick + 5] == pytest.approx(33.0)
    assert service.metrics_buffer[-1].cores == 6
    assert sim.settling_ticks == 4
    assert SimClock(tick_seconds=1.0).settling_ticks == 2


def test_settling_boundary_for_random_changes():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        sim = _sim(seed=int(rng.integers(1 << 30)))
        old = (int(rng.integers(1, 21)) * 100, int(rng.integers(1, 11)))
        service = sim.add_service(_spec(), *old, NOISE_FREE)
        _advance(sim, int(rng.integers(0, 7)))
        new = old
        while new == old:
            new = (int(rng.integers(1, 21)) * 100, int(rng.integers(1, 11)))
        change_tick = sim.clock.tick
        assert sim.apply_scaling("cv", *new).accepted
        _advance(sim, 7)
        fps = {s.tick: s.fps for s in service.metrics_buffer}
        for t in range(change_tick + 1, change_tick + 5):
            assert fps[t] == pytest.approx(max(0.0, NOISE_FREE.mean(*old)))
        for t in range(change_tick + 5, change_tick + 8):
            assert fps[t] == pytest.approx(max(0.0, NOISE_FREE.mean(*new)))


def test_free_cores_after_tick():
    sim = _sim()
    sim.add_service(_spec("a"), 800, 6, NOISE_FREE)
    sim.add_service(_spec("b"), 800, 3, NOISE_FREE)
    sim.tick()
    assert sim.device.c_free == 1


def test_scaling_accepts_and_rejects():
    sim = _sim()
    sim.add_service(_spec("a"), 800, 6, NOISE_FREE)
    sim.add_service(_spec("b"), 800, 3, NOISE_FREE)
    assert sim.apply_scaling("a", 800, 7).accepted
    assert sim.device.c_free == 0
    assert sim.apply_scaling("a", 800, 8).reason is RejectReason.INSUFFICIENT_CORES
    assert sim.apply_scaling("a", 2100, 7).reason is RejectReason.PIXEL_OUT_OF_BOUNDS
    assert sim.apply_scaling("a", 800, 0).reason is RejectReason.MINIMUM_CORES
    assert sim.apply_scaling("ghost", 800, 1).reason is RejectReason.UNKNOWN_SERVICE
    assert sim.device.allocations == {"a": 7, "b": 3}
    assert sim.services["a"].action_log == [(0, "CoresUp")]


def test_noop_request_is_not_an_action():
    sim = _sim()
    service = sim.add_service(_spec(), 800, 4, NOISE_FREE)
    assert sim.apply_scaling("cv", 800, 4).accepted
    assert service.action_log == []
    assert sim.apply_scaling("cv", 900, 3).accepted
    assert service.action_log == [(0, "Rescale")]


def test_swap_conserves_cores_and_inverts():
    sim = _sim()
    sim.add_service(_spec("alice"), 800, 4, NOISE_FREE)
    sim.add_service(_spec("bob"), 800, 6, NOISE_FREE)
    assert sim.swap_core("bob", "alice").accepted
    assert sim.device.allocations == {"alice": 5, "bob": 5}
    assert sim.device.allocated == 10
    assert sim.swap_core("alice", "bob").accepted
    assert sim.device.allocations == {"alice": 4, "bob": 6}
    assert [label for _, label in sim.services["alice"].action_log] == ["SwapIn", "SwapOut"]


def test_swap_respects_core_floor():
    sim = _sim()
    sim.add_service(_spec("alice"), 800, 1, NOISE_FREE)
    sim.add_service(_spec("bob"), 800, 7, NOISE_FREE)
    assert sim.swap_core("alice", "bob").reason is RejectReason.MINIMUM_CORES
    assert sim.swap_core("alice", "alice").reason is RejectReason.SAME_SERVICE
    assert sim.device.allocations == {"alice": 1, "bob": 7}


def test_swap_with_itself_creates_no_core():
    sim = _sim(c_phy=8)
    service = sim.add_service(_spec("a"), 800, 8, NOISE_FREE)
    result = swap_core(sim.device, service, service, sim.clock)
    assert result.reason is RejectReason.SAME_SERVICE
    assert sim.device.allocations == {"a": 8}
    assert service.state.cores == 8
    assert service.action_log == []
    sim.tick()


def test_read_buffer():
    sim = _sim()
    sim.add_service(_spec(), 800, 4, NOISE_FREE)
    _advance(sim, 5)
    assert [s.tick for s in sim.read_buffer("cv")] == [1, 2, 3, 4, 5]
    assert sim.read_buffer("cv", since_tick=5) == []
    assert [s.tick for s in sim.read_buffer("cv", since_tick=3)] == [4, 5]
    sim.tick()
    assert [s.tick for s in sim.read_buffer("cv", since_tick=5)] == [6]


def test_resize_reclaims_from_largest_holder():
    sim = _sim()
    sim.add_service(_spec("a"), 800, 4, NOISE_FREE)
    sim.add_service(_spec("b"), 800, 4, NOISE_FREE)
    sim.add_service(_spec("c"), 800, 1, NOISE_FREE)
    reclaimed = sim.resize(6)
    assert reclaimed == {"a": 2, "b": 1}
    assert sim.device.allocations == {"a": 2, "b": 3, "c": 1}
    assert sim.device.c_free == 0
    assert sim.apply_scaling("c", 800, 2).reason is RejectReason.INSUFFICIENT_CORES
    assert sim.resize(None) == {}
    assert sim.device.c_free == 4
    with pytest.raises(CoreAccountingError):
        sim.resize(2)


def test_core_conservation_under_random_requests():
    rng = np.random.default_rng(9)
    sim = _sim(seed=1, c_phy=8)
    ids = ["a", "b", "c"]
    for service_id in ids:
        sim.add_service(_spec(service_id), 800, 2, GroundTruthModel())
    for _ in range(1000):
        choice = rng.integers(3)
        if choice == 0:
            sim.apply_scaling(str(rng.choice(ids)), int(rng.integers(1, 21)) * 100, int(rng.integers(0, 8)))
        elif choice == 1:
            donor, receiver = sim.services[str(rng.choice(ids))], sim.services[str(rng.choice(ids))]
            swap_core(sim.device, donor, receiver, sim.clock)
        else:
            sim.resize(int(rng.integers(3, 9)))
        sim.tick()
        assert sim.device.allocated <= sim.device.capacity
        assert all(sim.device.allocations[i] == sim.services[i].state.cores >= 1 for i in ids)


def test_noise_free_history_is_recoverable():
    sim = _sim()
    service = sim.add_service(_spec(), 800, 4, NOISE_FREE)
    rng = np.random.default_rng(3)
    for _ in range(40):
        _advance(sim, int(rng.integers(1, 9)))
        sim.apply_scaling("cv", int(rng.integers(5, 16)) * 100, int(rng.integers(3, 7)))
    _advance(sim, 8)
    kept = exclude_settling(service.metrics_buffer, service.action_ticks, sim.settling_ticks)
    for snapshot in kept:
        assert snapshot.fps == pytest.approx(NOISE_FREE.mean(snapshot.pixel, snapshot.cores), abs=1e-9)
    model = fit(kept)
    assert model.intercept == pytest.approx(5.0, abs=1e-6)
    assert model.beta_cores == pytest.approx(6.0, abs=1e-6)
    assert model.beta_pixel == pytest.approx(-0.01, abs=1e-6)


def _scripted_run(seed):
    sim = _sim(seed)
    sim.add_service(_spec("alice"), 1300, 1, GroundTruthModel())
    sim.add_service(_spec("bob"), 1300, 7, GroundTruthModel())
    _advance(sim, 10)
    sim.swap_core("bob", "alice")
    _advance(sim, 10)
    sim.apply_scaling("alice", 1200, 2)
    _advance(sim, 10)
    return sim.all_snapshots()


def test_metrics_log_is_byte_identical(tmp_path):
    first, second = tmp_path / "first.jsonl", tmp_path / "second.jsonl"
    write_metrics_jsonl(_scripted_run(5), first)
    write_metrics_jsonl(_scripted_run(5), second)
    assert first.read_bytes() == second.read_bytes()
    write_metrics_jsonl(_scripted_run(6), second)
    assert first.read_bytes() != second.read_bytes()

    csv_path = tmp_path / "metrics.csv"
    write_metrics_csv(_scripted_run(5), csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "service_id,tick,pixel,cores,fps"
    assert len(lines) == 1 + 60


def test_add_service_validation():
    sim = _sim(c_phy=4)
    sim.add_service(_spec("a"), 800, 3, NOISE_FREE)
    with pytest.raises(ValueError):
        sim.add_service(_spec("a"), 800, 1, NOISE_FREE)
    with pytest.raises(ValueError):
        sim.add_service(_spec("b"), 800, 2, NOISE_FREE)
    with pytest.raises(ValueError):
        sim.add_service(_spec("c"), 50, 1, NOISE_FREE)

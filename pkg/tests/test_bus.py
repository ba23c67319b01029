import pytest

from convoylab.convoy import NeighborSnapshot
from convoylab.dynamics import VehicleState
from convoylab.sim.bus import MessageBus
from convoylab.sim.scenario import BusConfig

LINKS = [(1, 2), (2, 1)]


def drive(bus, ticks, dt=0.05):
    for k in range(ticks):
        now = k * dt
        for i in (1, 2):
            bus.publish(i, NeighborSnapshot(i, VehicleState(float(k), 0, 0, 0), now), now)
        bus.deliver(now)


def test_no_delivery_before_latency():
    bus = MessageBus(BusConfig(rate=20, latency=0.12), LINKS)
    drive(bus, 100)
    assert bus.delivered_log
    for t_del, t_send, _, _ in bus.delivered_log:
        assert t_del >= t_send + 0.12 - 1e-9


def test_latest_is_newest_delivered():
    bus = MessageBus(BusConfig(rate=20, latency=0.05), LINKS)
    bus.publish(1, NeighborSnapshot(1, VehicleState(0, 0, 0, 0), 0.0), 0.0)
    bus.deliver(0.0)
    assert bus.latest(1, 2, 0.0) is None
    bus.publish(1, NeighborSnapshot(1, VehicleState(1, 0, 0, 0), 0.05), 0.05)
    bus.deliver(0.05)
    assert bus.latest(1, 2, 0.05).timestamp == 0.0
    bus.deliver(0.1)
    assert bus.latest(1, 2, 0.1).timestamp == 0.05
    assert bus.latest(2, 1, 0.1) is None


def test_rate_limit():
    bus = MessageBus(BusConfig(rate=5, latency=0.0), LINKS)
    drive(bus, 40)  # 2 s
    sends = [x for x in bus.delivered_log if x[2] == 1]
    assert len(sends) == 10


def test_full_rate_sends_every_tick():
    bus = MessageBus(BusConfig(rate=20, latency=0.0), LINKS)
    drive(bus, 40)
    assert len([x for x in bus.delivered_log if x[2] == 1]) == 40


def test_drops_are_seeded():
    def pattern(seed):
        bus = MessageBus(BusConfig(drop_prob=0.5), LINKS, seed)
        drive(bus, 200)
        return [x[1] for x in bus.delivered_log]

    a = pattern(3)
    assert a == pattern(3)
    assert a != pattern(4)
    assert 100 < len(a) < 300


def test_everything_dropped():
    bus = MessageBus(BusConfig(drop_prob=1.0), LINKS)
    drive(bus, 50)
    assert bus.delivered_log == []
    assert bus.latest(1, 2, 2.5) is None


def test_stale_snapshots_time_out():
    bus = MessageBus(BusConfig(latency=0.0, timeout=1.0), LINKS)
    bus.publish(1, NeighborSnapshot(1, VehicleState(0, 0, 0, 0), 0.0), 0.0)
    bus.deliver(0.0)
    assert bus.latest(1, 2, 1.0) is not None
    assert bus.latest(1, 2, 1.05) is None


def test_links_are_neighbour_only():
    bus = MessageBus(BusConfig(latency=0.0), [(1, 2), (2, 1), (2, 3), (3, 2)])
    bus.publish(1, NeighborSnapshot(1, VehicleState(0, 0, 0, 0), 0.0), 0.0)
    bus.deliver(0.0)
    assert bus.latest(1, 3, 0.0) is None
    assert bus.latest(1, 2, 0.0) is not None


@pytest.mark.parametrize("latency", [0.0, 0.05, 0.2])
def test_receivers_never_see_the_future(latency):
    bus = MessageBus(BusConfig(latency=latency), LINKS)
    for k in range(60):
        now = k * 0.05
        bus.publish(1, NeighborSnapshot(1, VehicleState(0, 0, 0, 0), now), now)
        bus.deliver(now)
        got = bus.latest(1, 2, now)
        if got is not None:
            assert got.timestamp <= now - latency + 1e-9

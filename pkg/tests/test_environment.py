"""Environment tests: determinism, clamping, the console dict, hand traces."""

from __future__ import annotations

import numpy as np
import pytest

from ranedge.environment import NetworkEnvironment
from ranedge.netmath import NetParams

LISTING_KEYS = {
    "latency_ms",
    "transmission_rate_bps",
    "cqueue_bits",
    "rqueue_bits",
    "energy_consumption_watts",
    "cpu_frequency_ghz_allocated",
    "bandwidth_mhz_allocated",
    "cpu_allocation_conflict_count",
    "current_time_step",
    "current_traffic_arrival_rate_bps",
    "average_traffic_arrival_rate_bps",
    "current_spectral_efficiency_bits_per_hz_per_s",
}


def make_env(seed: int = 7, **overrides: object) -> NetworkEnvironment:
    return NetworkEnvironment(NetParams(**overrides), np.random.default_rng(seed))


def test_initial_state() -> None:
    env = make_env()
    assert env.time_step == 0
    assert env.bandwidth_hz == 40.0e6
    assert env.cpu_hz == 45.0e9
    assert env.queues.total == 0.0
    assert env.latency_s() == 0.0
    assert env.cpu_conflict_count == 0


def test_same_seed_same_trajectory() -> None:
    a, b = make_env(123), make_env(123)
    for _ in range(8):
        a.advance()
        b.advance()
    assert a.metrics() == b.metrics()


def test_different_seed_differs() -> None:
    a, b = make_env(1), make_env(2)
    a.advance()
    b.advance()
    assert a.metrics().arrival_rate_bps != b.metrics().arrival_rate_bps


def test_metrics_do_not_consume_randomness() -> None:
    a, b = make_env(99), make_env(99)
    a.advance()
    for _ in range(5):
        a.metrics()
        a.latency_s()
    b.advance()
    a.advance()
    b.advance()
    assert a.metrics() == b.metrics()


def test_listing_dict_keys_and_units() -> None:
    env = make_env(11)
    env.apply_allocation(30.0e6, 40.0e9)
    env.advance()
    d = env.metrics().to_listing_dict()
    assert set(d) == LISTING_KEYS
    assert d["bandwidth_mhz_allocated"] == 30.0
    assert d["cpu_frequency_ghz_allocated"] == 40.0
    assert d["energy_consumption_watts"] == 15.0
    assert d["current_time_step"] == 1
    assert d["transmission_rate_bps"] == pytest.approx(
        d["current_spectral_efficiency_bits_per_hz_per_s"] * 30.0e6
    )


def test_cpu_overallocation_clamps_and_counts() -> None:
    env = make_env()
    env.apply_allocation(20.0e6, 50.0e9)
    assert env.cpu_hz == 45.0e9
    assert env.cpu_conflict_count == 1
    env.apply_allocation(20.0e6, 46.0e9)
    assert env.cpu_conflict_count == 2
    env.apply_allocation(20.0e6, 45.0e9)
    assert env.cpu_conflict_count == 2


def test_bandwidth_overallocation_clamps_silently() -> None:
    env = make_env()
    env.apply_allocation(55.0e6, 30.0e9)
    assert env.bandwidth_hz == 40.0e6
    assert env.cpu_conflict_count == 0


def test_rejects_nonpositive_allocation() -> None:
    env = make_env()
    with pytest.raises(ValueError):
        env.apply_allocation(0.0, 30.0e9)
    with pytest.raises(ValueError):
        env.apply_allocation(20.0e6, -1.0)


def test_deterministic_overload_latency_hand_trace() -> None:
    # sigma = 0 makes every arrival exactly 5e5 bits per step.  At
    # f = 20 GHz the edge drains 340k bits per step, so the carried
    # backlog grows by 160k per step: 0, 160k, ..., 1120k over 8 steps.
    # Mean 560k bits over 5e7 bits/s gives 11.2 ms.
    env = make_env(5, traffic_sigma=0.0)
    env.apply_allocation(40.0e6, 20.0e9)
    for _ in range(8):
        env.advance()
    assert env.latency_s() == pytest.approx(0.0112, rel=1e-9)
    assert env.sla_violated()


def test_ample_capacity_gives_zero_latency() -> None:
    env = make_env(5, traffic_sigma=0.0)
    env.apply_allocation(40.0e6, 45.0e9)
    for _ in range(8):
        env.advance()
    assert env.latency_s() == 0.0
    assert not env.sla_violated()


def test_snapshot_state_is_immutable_copy() -> None:
    env = make_env(3)
    env.advance()
    state = env.snapshot_state()
    env.advance()
    assert state.time_step == 1
    assert len(state.backlog_edge_history) == 1
    assert env.time_step == 2


def test_advance_returns_flows() -> None:
    env = make_env(4, traffic_sigma=0.0)
    flows = env.advance()
    assert flows.queues == env.queues
    assert flows.queues.q_edge == pytest.approx(5.0e5)

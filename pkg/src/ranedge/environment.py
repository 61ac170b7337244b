"""Stateful ground-truth simulator of one RAN-edge slice.

Owns the two queues, the per-step backlog histories that feed Little's
law, the traffic draws, and the allocation clamps.  All randomness comes
from the injected generator; reading metrics never consumes it, so a
trajectory is a pure function of (params, seed, allocation calls).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netmath import (
    NetParams,
    QueuePair,
    StepFlows,
    little_latency,
    power,
    sample_arrival,
    step_flows,
)


@dataclass(frozen=True)
class MetricsSnapshot:
    """Point-in-time observables of the slice, in SI units."""

    latency_s: float
    capacity_bps: float
    q_edge_bits: float
    q_ran_bits: float
    energy_w: float
    cpu_hz: float
    bandwidth_hz: float
    cpu_conflicts: int
    time_step: int
    arrival_rate_bps: float
    avg_arrival_rate_bps: float
    spectral_efficiency: float

    def to_listing_dict(self) -> dict[str, float | int]:
        """Operator-console view: mixed engineering units, fixed key set."""
        return {
            "latency_ms": self.latency_s * 1e3,
            "transmission_rate_bps": self.capacity_bps,
            "cqueue_bits": self.q_edge_bits,
            "rqueue_bits": self.q_ran_bits,
            "energy_consumption_watts": self.energy_w,
            "cpu_frequency_ghz_allocated": self.cpu_hz / 1e9,
            "bandwidth_mhz_allocated": self.bandwidth_hz / 1e6,
            "cpu_allocation_conflict_count": self.cpu_conflicts,
            "current_time_step": self.time_step,
            "current_traffic_arrival_rate_bps": self.arrival_rate_bps,
            "average_traffic_arrival_rate_bps": self.avg_arrival_rate_bps,
            "current_spectral_efficiency_bits_per_hz_per_s": self.spectral_efficiency,
        }


@dataclass(frozen=True)
class EnvState:
    """Copyable snapshot of everything a predictor needs to fork from."""

    queues: QueuePair
    backlog_edge_history: tuple[float, ...]
    backlog_ran_history: tuple[float, ...]
    arrival_rates: tuple[float, ...]
    time_step: int
    bandwidth_hz: float
    cpu_hz: float
    cpu_conflicts: int
    eta_current: float


class NetworkEnvironment:
    """Discrete-time slice simulator with clamped allocations.

    Each :meth:`advance` draws one traffic rate and one spectral
    efficiency (two generator draws, always in that order), moves bits
    through both queues, and records the carried-over backlogs.
    """

    def __init__(self, params: NetParams, rng: np.random.Generator) -> None:
        self.params = params
        self._rng = rng
        self._queues = QueuePair()
        self._backlog_edge: list[float] = []
        self._backlog_ran: list[float] = []
        self._arrival_rates: list[float] = []
        self._time_step = 0
        self._bandwidth_hz = params.b_max
        self._cpu_hz = params.f_max
        self._cpu_conflicts = 0
        self._eta_current = params.eta_mid

    @property
    def time_step(self) -> int:
        return self._time_step

    @property
    def cpu_conflict_count(self) -> int:
        return self._cpu_conflicts

    @property
    def bandwidth_hz(self) -> float:
        return self._bandwidth_hz

    @property
    def cpu_hz(self) -> float:
        return self._cpu_hz

    @property
    def queues(self) -> QueuePair:
        return self._queues

    def apply_allocation(self, bandwidth_hz: float, cpu_hz: float) -> None:
        """Set both levers, clamping to hardware ceilings.

        A CPU request above f_max is a cross-domain allocation conflict
        and is counted; bandwidth over b_max merely saturates the
        carrier, so it clamps silently.
        """
        if bandwidth_hz <= 0 or cpu_hz <= 0:
            raise ValueError("allocations must be strictly positive")
        if cpu_hz > self.params.f_max:
            self._cpu_conflicts += 1
            cpu_hz = self.params.f_max
        self._bandwidth_hz = min(bandwidth_hz, self.params.b_max)
        self._cpu_hz = cpu_hz

    def advance(self) -> StepFlows:
        """Simulate one interval under the current allocation."""
        rate = sample_arrival(self.params.traffic_mu, self.params.traffic_sigma, self._rng)
        eta = float(self._rng.uniform(self.params.eta_min, self.params.eta_max))
        flows = step_flows(
            self._queues,
            rate * self.params.tau,
            self._cpu_hz,
            eta,
            self._bandwidth_hz,
            self.params,
        )
        self._queues = flows.queues
        self._backlog_edge.append(flows.backlog_edge)
        self._backlog_ran.append(flows.backlog_ran)
        self._arrival_rates.append(rate)
        self._eta_current = eta
        self._time_step += 1
        return flows

    def avg_arrival_rate(self) -> float:
        if not self._arrival_rates:
            return 0.0
        return sum(self._arrival_rates) / len(self._arrival_rates)

    def latency_s(self) -> float:
        """Little's law over the total carried backlog; 0 until traffic flows."""
        avg_rate = self.avg_arrival_rate()
        if not self._backlog_edge or avg_rate <= 0:
            return 0.0
        totals = [e + r for e, r in zip(self._backlog_edge, self._backlog_ran)]
        return little_latency(totals, avg_rate, form=self.params.latency_form)

    def energy_w(self) -> float:
        return power(self._bandwidth_hz, self.params)

    def sla_violated(self) -> bool:
        return self.latency_s() >= self.params.sla_latency

    def metrics(self) -> MetricsSnapshot:
        current_rate = self._arrival_rates[-1] if self._arrival_rates else 0.0
        return MetricsSnapshot(
            latency_s=self.latency_s(),
            capacity_bps=self._eta_current * self._bandwidth_hz * self.params.spatial_gain,
            q_edge_bits=self._queues.q_edge,
            q_ran_bits=self._queues.q_ran,
            energy_w=self.energy_w(),
            cpu_hz=self._cpu_hz,
            bandwidth_hz=self._bandwidth_hz,
            cpu_conflicts=self._cpu_conflicts,
            time_step=self._time_step,
            arrival_rate_bps=current_rate,
            avg_arrival_rate_bps=self.avg_arrival_rate(),
            spectral_efficiency=self._eta_current,
        )

    def snapshot_state(self) -> EnvState:
        return EnvState(
            queues=self._queues,
            backlog_edge_history=tuple(self._backlog_edge),
            backlog_ran_history=tuple(self._backlog_ran),
            arrival_rates=tuple(self._arrival_rates),
            time_step=self._time_step,
            bandwidth_hz=self._bandwidth_hz,
            cpu_hz=self._cpu_hz,
            cpu_conflicts=self._cpu_conflicts,
            eta_current=self._eta_current,
        )

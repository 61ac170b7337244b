"""Pure discrete-time math for the RAN-edge slice model.

Everything here is stateless and shared by the live environment (ground
truth) and the digital twin (prediction), so the two can only diverge
through their inputs (spectral-efficiency fluctuation, traffic drift),
never through the arithmetic.

Model in one paragraph: per interval tau, traffic bits arrive at an edge
computation queue, drained at tau*f*U bits per step (f = CPU frequency,
U = bits per cycle).  Drained bits transfer into a RAN communication
queue, drained at tau*eta*B*N_s bits per step (eta = spectral efficiency,
B = bandwidth).  Latency follows Little's law on the running mean of the
carried-over backlogs; power scales linearly with bandwidth against a
reference carrier.

Two printed-formula quirks are kept behind switches with corrected
defaults (see ``NetParams.queue_transfer`` and ``latency_form``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GHZ = 1e9
MHZ = 1e6


class DomainError(ValueError):
    """An input fell outside its physical domain."""


class UndefinedLatencyError(DomainError):
    """Little's law requested with a non-positive arrival rate."""


@dataclass(frozen=True)
class NetParams:
    """Physical constants of one slice plus model-variant switches.

    Defaults are the canonical desk-scale configuration; all quantities
    are SI (seconds, Hz, bits, bits/s, watts).
    """

    tau: float = 0.01                  # seconds per discrete step
    f_max: float = 45.0 * GHZ          # max edge CPU frequency, Hz
    cpu_efficiency: float = 0.0017     # U, bits processed per CPU cycle
    eta_min: float = 6.0               # bits/Hz/s
    eta_max: float = 8.0               # bits/Hz/s
    sla_latency: float = 0.010         # seconds
    p0: float = 10.0                   # watts per reference carrier
    b0: float = 20.0 * MHZ             # reference carrier bandwidth, Hz
    b_max: float = 40.0 * MHZ          # Hz
    traffic_mu: float = 5.0e7          # mean arrival rate, bits/s
    traffic_sigma: float = 3.0e7       # arrival rate stddev, bits/s
    n_steps: int = 8                   # steps per trial
    spatial_gain: int = 1              # N_s, spatial multiplexing streams
    # Model-variant switches; "as_printed" keeps the anomalous textbook
    # forms available for comparison runs.
    queue_transfer: str = "corrected"  # or "as_printed"
    latency_form: str = "division"     # or "as_printed" (multiplication)

    def __post_init__(self) -> None:
        positive = {
            "tau": self.tau, "f_max": self.f_max,
            "cpu_efficiency": self.cpu_efficiency, "eta_min": self.eta_min,
            "eta_max": self.eta_max, "sla_latency": self.sla_latency,
            "p0": self.p0, "b0": self.b0, "b_max": self.b_max,
            "traffic_mu": self.traffic_mu, "n_steps": self.n_steps,
            "spatial_gain": self.spatial_gain,
        }
        for name, value in positive.items():
            if value <= 0:
                raise DomainError(f"{name} must be strictly positive, got {value}")
        if self.traffic_sigma < 0:
            raise DomainError("traffic_sigma must be non-negative")
        if self.eta_min > self.eta_max:
            raise DomainError("eta_min must not exceed eta_max")
        if self.b0 > self.b_max:
            raise DomainError("b0 must not exceed b_max")
        if self.queue_transfer not in ("corrected", "as_printed"):
            raise DomainError(f"unknown queue_transfer {self.queue_transfer!r}")
        if self.latency_form not in ("division", "as_printed"):
            raise DomainError(f"unknown latency_form {self.latency_form!r}")

    @property
    def eta_mid(self) -> float:
        return 0.5 * (self.eta_min + self.eta_max)


@dataclass(frozen=True)
class QueuePair:
    """Backlogs of the two queues, in bits (edge computation, RAN radio)."""

    q_edge: float = 0.0
    q_ran: float = 0.0

    def __post_init__(self) -> None:
        if self.q_edge < 0 or self.q_ran < 0:
            raise DomainError("queue sizes must be non-negative")

    @property
    def total(self) -> float:
        return self.q_edge + self.q_ran


@dataclass(frozen=True)
class StepFlows:
    """Per-step bit movements, alongside the resulting queue state.

    ``backlog_edge``/``backlog_ran`` are the carried-over bits that
    survived this step's service before new input landed; these are the
    samples Little's law averages (a fully drained queue contributes 0,
    so ample capacity yields zero latency).
    """

    queues: QueuePair
    drained_edge: float        # bits actually removed from the edge queue
    transferred: float         # bits entering the RAN queue this step
    sent: float                # bits leaving over the radio interface
    backlog_edge: float
    backlog_ran: float


def sample_arrival(mu: float, sigma: float, rng: np.random.Generator) -> float:
    """One traffic-rate draw in bits/s: a Gaussian clamped at zero."""
    if sigma < 0:
        raise DomainError("sigma must be non-negative")
    return max(float(rng.normal(mu, sigma)), 0.0)


def edge_processed_bits(f: float, params: NetParams) -> float:
    """Bits the edge CPU can process in one step at frequency ``f`` Hz."""
    if not 0 < f <= params.f_max:
        raise DomainError(f"CPU frequency {f} outside (0, {params.f_max}]")
    return params.tau * f * params.cpu_efficiency


def channel_capacity(eta: float, b: float, params: NetParams) -> float:
    """Radio capacity in bits/s for spectral efficiency ``eta`` and bandwidth ``b``."""
    if not params.eta_min <= eta <= params.eta_max:
        raise DomainError(f"eta {eta} outside [{params.eta_min}, {params.eta_max}]")
    if not 0 < b <= params.b_max:
        raise DomainError(f"bandwidth {b} outside (0, {params.b_max}]")
    return eta * b * params.spatial_gain


def step_flows(
    q: QueuePair,
    arrived_bits: float,
    f: float,
    eta: float,
    b: float,
    params: NetParams,
) -> StepFlows:
    """Advance both queues one step and report every bit movement.

    Edge update: backlog = max(0, q_edge - U_e), then arrivals land.
    RAN update: backlog = max(0, q_ran - U_r), then the transfer lands.
    The corrected transfer forwards what the edge actually drained,
    min(q_edge, U_e); the as_printed variant gates the transfer by the
    RAN queue's own level, min(q_ran, U_e), which starves an initially
    empty RAN queue forever.
    """
    if arrived_bits < 0:
        raise DomainError("arrived_bits must be non-negative")
    u_edge = edge_processed_bits(f, params)
    u_ran = params.tau * channel_capacity(eta, b, params)

    drained_edge = min(q.q_edge, u_edge)
    backlog_edge = max(0.0, q.q_edge - u_edge)
    new_edge = backlog_edge + arrived_bits

    if params.queue_transfer == "corrected":
        transferred = min(q.q_edge, u_edge)
    else:
        transferred = min(q.q_ran, u_edge)

    sent = min(q.q_ran, u_ran)
    backlog_ran = max(0.0, q.q_ran - u_ran)
    new_ran = backlog_ran + transferred

    return StepFlows(
        queues=QueuePair(new_edge, new_ran),
        drained_edge=drained_edge,
        transferred=transferred,
        sent=sent,
        backlog_edge=backlog_edge,
        backlog_ran=backlog_ran,
    )


def step_queues(
    q: QueuePair,
    arrived_bits: float,
    f: float,
    eta: float,
    b: float,
    params: NetParams,
) -> QueuePair:
    """Queue recurrence only; see :func:`step_flows` for the bit ledger."""
    return step_flows(q, arrived_bits, f, eta, b, params).queues


def little_latency(
    queue_history: list[float],
    avg_arrival_rate: float,
    form: str = "division",
) -> float:
    """Little's law W = L / lambda over a backlog history.

    ``form="as_printed"`` multiplies instead of dividing, reproducing the
    dimensionally inconsistent variant for comparison runs.
    """
    if not queue_history:
        raise DomainError("queue_history must be non-empty")
    if avg_arrival_rate <= 0:
        raise UndefinedLatencyError(
            f"average arrival rate must be positive, got {avg_arrival_rate}"
        )
    mean_queue = sum(queue_history) / len(queue_history)
    if form == "division":
        return mean_queue / avg_arrival_rate
    if form == "as_printed":
        return mean_queue * avg_arrival_rate
    raise DomainError(f"unknown latency form {form!r}")


def power(b: float, params: NetParams) -> float:
    """Transmit power in watts for bandwidth ``b``, linear in the carrier."""
    if not 0 < b <= params.b_max:
        raise DomainError(f"bandwidth {b} outside (0, {params.b_max}]")
    return b * params.p0 / params.b0


def energy_saved_percent(b: float, params: NetParams) -> float:
    """Percent of energy saved relative to running at full bandwidth."""
    return 100.0 * (params.b_max - b) / params.b_max

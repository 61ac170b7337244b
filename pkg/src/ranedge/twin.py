"""What-if predictor that forks a live slice state.

The twin replays the exact step arithmetic of the environment from a
snapshot, replacing the two unknowns with estimates: future traffic is
held at the observed running average (the configured mean before any
observation exists) and spectral efficiency at the band midpoint (or the
last observed value).  Because the stepping code is shared, a twin fed
zero-variance inputs reproduces the live measurement bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .environment import EnvState
from .netmath import NetParams, little_latency, power, step_flows

ETA_ESTIMATES = ("mean", "last_observed")


@dataclass(frozen=True)
class TwinPrediction:
    """Outcome of one hypothetical allocation, rolled out to trial end."""

    latency_s: float
    energy_w: float
    conflicts: int
    passes_sla: bool


class DigitalTwin:
    """Deterministic rollout of a candidate allocation from a snapshot."""

    def __init__(
        self,
        params: NetParams,
        state: EnvState,
        eta_estimate: str = "mean",
    ) -> None:
        if eta_estimate not in ETA_ESTIMATES:
            raise ValueError(f"eta_estimate must be one of {ETA_ESTIMATES}")
        self.params = params
        self.state = state
        self.eta_estimate = eta_estimate

    def _eta_hat(self) -> float:
        if self.eta_estimate == "last_observed":
            return self.state.eta_current
        return self.params.eta_mid

    def _rate_hat(self) -> float:
        if not self.state.arrival_rates:
            return self.params.traffic_mu
        return sum(self.state.arrival_rates) / len(self.state.arrival_rates)

    def predict(self, bandwidth_hz: float, cpu_hz: float) -> TwinPrediction:
        """Roll the snapshot forward to the end of the trial.

        A CPU request above the hardware ceiling is reported as one
        allocation conflict and simulated at the clamped frequency, the
        same way the live slice would enforce it.
        """
        if bandwidth_hz <= 0 or cpu_hz <= 0:
            raise ValueError("allocations must be strictly positive")
        conflicts = 1 if cpu_hz > self.params.f_max else 0
        f = min(cpu_hz, self.params.f_max)
        b = min(bandwidth_hz, self.params.b_max)

        rate = self._rate_hat()
        eta = self._eta_hat()
        q = self.state.queues
        backlog_edge = list(self.state.backlog_edge_history)
        backlog_ran = list(self.state.backlog_ran_history)
        remaining = max(0, self.params.n_steps - self.state.time_step)
        for _ in range(remaining):
            flows = step_flows(q, rate * self.params.tau, f, eta, b, self.params)
            backlog_edge.append(flows.backlog_edge)
            backlog_ran.append(flows.backlog_ran)
            q = flows.queues

        rates = list(self.state.arrival_rates) + [rate] * remaining
        avg_rate = sum(rates) / len(rates) if rates else 0.0
        if backlog_edge and avg_rate > 0:
            totals = [e + r for e, r in zip(backlog_edge, backlog_ran)]
            latency = little_latency(totals, avg_rate, form=self.params.latency_form)
        else:
            latency = 0.0

        energy = power(b, self.params)
        passes = latency < self.params.sla_latency and conflicts == 0
        return TwinPrediction(
            latency_s=latency,
            energy_w=energy,
            conflicts=conflicts,
            passes_sla=passes,
        )

"""Deterministic negotiating agents gated by their own digital twins.

Each agent controls one lever: the RAN side moves bandwidth, the edge
side moves CPU frequency.  Before anything goes on the wire the agent
rolls the candidate through its twin; only allocations the twin clears
are ever proposed or accepted.  Memory, when attached, supplies the
opening stance through the anchor strategy.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .environment import EnvState, MetricsSnapshot
from .memory import (
    CollectiveMemory,
    ScoredCandidate,
    StrategyContext,
    classify_traffic,
    infer_configuration,
)
from .netmath import NetParams
from .protocol import A2AMessage, Configuration, Intent, TurnContext, serialize
from .twin import DigitalTwin, TwinPrediction

REFUSAL_TEXT = (
    "Failed to generate a valid negotiation message after multiple "
    "internal Digital Twin test attempts."
)

ROLE_RAN = "RAN"
ROLE_EDGE = "EDGE"
ROLES = (ROLE_RAN, ROLE_EDGE)

# One lever step per failed twin test: coarse enough to converge inside
# the test budget, fine enough to stay near the opening stance.
LEVER_STEP_BW_MHZ = 5.0
LEVER_STEP_CPU_GHZ = 5.0
DEFAULT_TWIN_BUDGET = 4

RAN_OPENING = Configuration(20.0, 30.0)
EDGE_OPENING = Configuration(40.0, 45.0)
# With light traffic the edge concedes a little compute up front.
EDGE_LOW_TRAFFIC_CPU_GHZ = 40.0


class CounterDecision(Enum):
    ACCEPT = "accept"
    COUNTER = "counter"


@dataclass(frozen=True)
class AgentObjective:
    """Role-specific target and the lever ranges the role may quote."""

    role: str
    latency_target_s: float = 0.009
    bw_range_mhz: tuple[float, float] = (5.0, 40.0)
    cpu_range_ghz: tuple[float, float] = (25.0, 50.0)
    compromise_window: int = 2

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        if self.latency_target_s <= 0:
            raise ValueError("latency_target_s must be positive")
        for lo, hi in (self.bw_range_mhz, self.cpu_range_ghz):
            if not 0 < lo < hi:
                raise ValueError("lever ranges must be ordered and positive")
        if self.compromise_window < 0:
            raise ValueError("compromise_window must be non-negative")

    def validate_against(self, params: NetParams) -> None:
        # The private target must sit strictly inside the contractual SLA.
        if self.latency_target_s >= params.sla_latency:
            raise ValueError("latency_target_s must be below the SLA latency")


@dataclass(frozen=True)
class DeliberationContext:
    """One turn's working set: live metrics, dialogue state, advice, budget."""

    metrics: MetricsSnapshot
    env_state: EnvState
    opponent_last: A2AMessage | None
    own_last: A2AMessage | None
    round_index: int
    max_rounds: int
    retrieved: tuple[ScoredCandidate, ...]
    twin_budget: int

    def __post_init__(self) -> None:
        if self.twin_budget < 0:
            raise ValueError("twin_budget must be non-negative")


@dataclass(frozen=True)
class TwinTrace:
    """One twin test performed during a deliberation, for auditing."""

    bandwidth_mhz: float
    cpu_ghz: float
    prediction: TwinPrediction


def _meets_objective(
    objective: AgentObjective,
    config: Configuration,
    prediction: TwinPrediction,
    own_candidate: Configuration | None,
) -> bool:
    """Whether an opponent offer satisfies the role's private target.

    Both roles demand latency below their own target, not merely the
    SLA.  The RAN side additionally refuses offers that spend more
    bandwidth than it was about to put forward itself, since bandwidth
    is its energy bill.
    """
    if prediction.latency_s >= objective.latency_target_s:
        return False
    if objective.role == ROLE_RAN and own_candidate is not None:
        if config.ran_bandwidth_mhz > own_candidate.ran_bandwidth_mhz:
            return False
    return True


def accept_or_counter_policy(
    objective: AgentObjective,
    opponent_config: Configuration,
    prediction: TwinPrediction,
    round_index: int,
    max_rounds: int,
    own_candidate: Configuration | None = None,
) -> CounterDecision:
    """Decide on a standing opponent proposal that the twin has scored.

    Offers failing the SLA are always countered.  Offers meeting the
    agent's own target are accepted outright.  Near the round cap the
    agent compromises: anything SLA-clean is accepted rather than
    risking an unresolved session.
    """
    if not prediction.passes_sla:
        return CounterDecision.COUNTER
    if _meets_objective(objective, opponent_config, prediction, own_candidate):
        return CounterDecision.ACCEPT
    if round_index >= max_rounds - objective.compromise_window:
        return CounterDecision.ACCEPT
    return CounterDecision.COUNTER


class RuleBasedAgent:
    """Deterministic negotiator: memory-advised opener, twin-gated search.

    The agent owns exactly one lever and walks it upward in fixed steps
    while its twin keeps failing the candidate, refusing outright when
    the test budget runs dry.  Opponent offers are re-checked on the
    agent's own twin before any acceptance.
    """

    def __init__(
        self,
        objective: AgentObjective,
        params: NetParams,
        memory: CollectiveMemory | None = None,
        twin_budget: int = DEFAULT_TWIN_BUDGET,
        eta_estimate: str = "mean",
        name: str | None = None,
    ) -> None:
        objective.validate_against(params)
        if twin_budget < 1:
            raise ValueError("twin_budget must be at least 1")
        self.objective = objective
        self.params = params
        self.memory = memory
        self.twin_budget = twin_budget
        self.eta_estimate = eta_estimate
        self.name = name or f"{objective.role}_AGENT"
        self.trial_id = 0
        self.retrieval_count = 0
        self.twin_trace: list[TwinTrace] = []

    def begin_trial(self, trial_id: int) -> None:
        if trial_id < 0:
            raise ValueError("trial_id must be non-negative")
        self.trial_id = trial_id

    def greeting(self) -> str:
        if self.objective.role == ROLE_RAN:
            return (
                "Hello! RAN agent here. Let's find a bandwidth and CPU "
                "split that saves energy without breaking the SLA."
            )
        return (
            "Hello! Edge agent here. Let's keep end-to-end latency low "
            "while we settle bandwidth and CPU."
        )

    def take_turn(self, turn: TurnContext) -> str:
        retrieved = self._retrieve(turn.metrics)
        ctx = DeliberationContext(
            metrics=turn.metrics,
            env_state=turn.env_state,
            opponent_last=turn.opponent_last,
            own_last=turn.own_last,
            round_index=turn.round_index,
            max_rounds=turn.max_rounds,
            retrieved=tuple(retrieved),
            twin_budget=self.twin_budget,
        )
        return serialize(self.deliberate(ctx))

    def deliberate(self, ctx: DeliberationContext) -> A2AMessage:
        """Produce the next message, spending at most the twin budget."""
        self.twin_trace = []
        budget = ctx.twin_budget
        twin = DigitalTwin(self.params, ctx.env_state, self.eta_estimate)

        candidate = self._initial_candidate(ctx)
        passing: Configuration | None = None
        passing_pred: TwinPrediction | None = None
        while budget > 0:
            pred = self._test(twin, candidate)
            budget -= 1
            if pred.passes_sla:
                passing, passing_pred = candidate, pred
                break
            nudged = self._nudge(candidate)
            if nudged == candidate:
                break  # own lever already at its ceiling
            candidate = nudged
        if passing is None or passing_pred is None:
            return A2AMessage(Intent.NO_AGREEMENT_POSSIBLE, None, REFUSAL_TEXT)

        opponent_cfg = _standing_proposal(ctx.opponent_last)
        if opponent_cfg is not None and budget > 0:
            opp_pred = self._test(twin, opponent_cfg)
            budget -= 1
            decision = accept_or_counter_policy(
                self.objective,
                opponent_cfg,
                opp_pred,
                ctx.round_index,
                ctx.max_rounds,
                own_candidate=passing,
            )
            if decision is CounterDecision.ACCEPT:
                reason = self._accept_reason(opponent_cfg, opp_pred, passing)
                return A2AMessage(Intent.ACCEPT_AGREEMENT, opponent_cfg, reason)
        reason = self._propose_reason(passing, passing_pred, ctx)
        return A2AMessage(Intent.PROPOSE_ACTION, passing, reason)

    # -- candidate construction ------------------------------------------

    def _retrieve(self, metrics: MetricsSnapshot) -> list[ScoredCandidate]:
        if self.memory is None or len(self.memory) == 0:
            return []
        self.retrieval_count += 1
        return self.memory.retrieve(self._query_context(metrics))

    def _query_context(self, metrics: MetricsSnapshot) -> StrategyContext:
        return StrategyContext(
            traffic_level=classify_traffic(
                metrics.avg_arrival_rate_bps, self.params
            ),
            arrival_rate_bps=metrics.avg_arrival_rate_bps,
            sla_latency_s=self.params.sla_latency,
            time_step=metrics.time_step,
            trial_id=self.trial_id,
        )

    def _opening(self, metrics: MetricsSnapshot) -> Configuration:
        if self.objective.role == ROLE_RAN:
            return RAN_OPENING
        level = classify_traffic(metrics.avg_arrival_rate_bps, self.params)
        if level == "low":
            return Configuration(
                EDGE_OPENING.ran_bandwidth_mhz, EDGE_LOW_TRAFFIC_CPU_GHZ
            )
        return EDGE_OPENING

    def _initial_candidate(self, ctx: DeliberationContext) -> Configuration:
        opening = self._opening(ctx.metrics)
        suggestion: Configuration | None = None
        if ctx.retrieved:
            suggestion = infer_configuration(
                ctx.retrieved[0].strategy,
                ctx.retrieved,
                self._query_context(ctx.metrics),
            )
            if self.objective.role == ROLE_RAN:
                # Bandwidth is the energy bill: memory may talk it down
                # but never above the frugal opener, since the twin walk
                # already raises it when latency demands.
                suggestion = Configuration(
                    min(
                        suggestion.ran_bandwidth_mhz,
                        opening.ran_bandwidth_mhz,
                    ),
                    suggestion.edge_cpu_frequency_ghz,
                )
        base = suggestion or opening
        # Own lever continues from the last own proposal; the other
        # lever adopts the opponent's latest quote so consensus by
        # matching proposals stays reachable.
        own_source = _standing_proposal(ctx.own_last) or base
        other_source = _standing_proposal(ctx.opponent_last) or base
        if self.objective.role == ROLE_RAN:
            raw = Configuration(
                own_source.ran_bandwidth_mhz,
                other_source.edge_cpu_frequency_ghz,
            )
        else:
            raw = Configuration(
                other_source.ran_bandwidth_mhz,
                own_source.edge_cpu_frequency_ghz,
            )
        return self._clamp(raw)

    def _clamp(self, config: Configuration) -> Configuration:
        b_lo, b_hi = self.objective.bw_range_mhz
        f_lo, f_hi = self.objective.cpu_range_ghz
        return Configuration(
            min(max(config.ran_bandwidth_mhz, b_lo), b_hi),
            min(max(config.edge_cpu_frequency_ghz, f_lo), f_hi),
        )

    def _nudge(self, candidate: Configuration) -> Configuration:
        if self.objective.role == ROLE_RAN:
            hi = self.objective.bw_range_mhz[1]
            return Configuration(
                min(candidate.ran_bandwidth_mhz + LEVER_STEP_BW_MHZ, hi),
                candidate.edge_cpu_frequency_ghz,
            )
        hi = self.objective.cpu_range_ghz[1]
        return Configuration(
            candidate.ran_bandwidth_mhz,
            min(candidate.edge_cpu_frequency_ghz + LEVER_STEP_CPU_GHZ, hi),
        )

    def _test(self, twin: DigitalTwin, config: Configuration) -> TwinPrediction:
        pred = twin.predict(config.bandwidth_hz, config.cpu_hz)
        self.twin_trace.append(
            TwinTrace(
                config.ran_bandwidth_mhz, config.edge_cpu_frequency_ghz, pred
            )
        )
        return pred

    # -- message text -----------------------------------------------------

    @staticmethod
    def _suffix(pred: TwinPrediction) -> str:
        return (
            f"Predicted Latency: {pred.latency_s * 1e3:.2f} ms, "
            f"Predicted Energy: {pred.energy_w:.2f} W."
        )

    def _propose_reason(
        self,
        config: Configuration,
        pred: TwinPrediction,
        ctx: DeliberationContext,
    ) -> str:
        if self.objective.role == ROLE_RAN:
            lead = (
                f"Proposing {config.ran_bandwidth_mhz:.1f} MHz with edge CPU "
                f"at {config.edge_cpu_frequency_ghz:.1f} GHz to hold energy "
                "down while staying inside the SLA."
            )
        else:
            lead = (
                f"Proposing {config.edge_cpu_frequency_ghz:.1f} GHz edge CPU "
                f"with {config.ran_bandwidth_mhz:.1f} MHz to keep the "
                "computation queue drained."
            )
        if ctx.retrieved:
            anchor_trial = ctx.retrieved[0].strategy.context.trial_id
            lead += f" Collective memory of trial {anchor_trial} informs this stance."
        return f"{lead} {self._suffix(pred)}"

    def _accept_reason(
        self,
        config: Configuration,
        pred: TwinPrediction,
        own_candidate: Configuration,
    ) -> str:
        if _meets_objective(self.objective, config, pred, own_candidate):
            lead = (
                f"Accepting {config.ran_bandwidth_mhz:.1f} MHz and "
                f"{config.edge_cpu_frequency_ghz:.1f} GHz; the offer meets "
                "my own target."
            )
        else:
            lead = (
                f"Accepting {config.ran_bandwidth_mhz:.1f} MHz and "
                f"{config.edge_cpu_frequency_ghz:.1f} GHz to close out the "
                "negotiation window."
            )
        return f"{lead} {self._suffix(pred)}"


def _standing_proposal(message: A2AMessage | None) -> Configuration | None:
    if message is not None and message.intent is Intent.PROPOSE_ACTION:
        return message.config
    return None

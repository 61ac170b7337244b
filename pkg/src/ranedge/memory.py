"""Two-layer collective negotiation memory with debiased retrieval.

Layer one is a raw append-only transcript buffer: complete, ordered,
never consulted by retrieval.  Layer two holds distilled strategies,
each a context-action-outcome tuple with a deterministic keyword set,
and is what agents actually query.

Retrieval scores every stored strategy against the query keywords with
four components:

    semantic    Jaccard overlap between keyword sets, in [0, 1]
    decay       exp(-age / theta) by default, so older entries fade
                gently instead of vanishing (the literal exp(-theta*age)
                variant is kept behind decay_form="as_printed")
    inflection  1.0 for an SLA violation, 0.5 for a failed negotiation,
                0.0 for a success: failures are amplified, not buried
    diversity   gamma-weighted overlap with everything already picked
                this query, subtracted so the result set spreads out

    base  = alpha * semantic + beta * decay + delta * inflection
    final = base - diversity

Selection is greedy: pick the argmax of final, fold its keywords into
the selected set, re-score, repeat up to n_top times.  The first pick is
the anchor that guides configuration inference.  Disabling debiasing
gives the vanilla baseline: plain recency ranking over entries with any
keyword overlap, no failure amplification, no diversity penalty.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .netmath import NetParams, energy_saved_percent
from .protocol import Configuration, NegotiationRecord, Outcome

TRAFFIC_LEVELS = ("low", "medium", "high")
DECAY_FORMS = ("time_constant", "as_printed")

BW_BAND_RANGE_MHZ = (5.0, 40.0)
CPU_BAND_RANGE_GHZ = (25.0, 50.0)
SUGGESTED_BW_FLOOR_MHZ = 5.0


class InsufficientDataError(ValueError):
    """A diagnostic was requested before any retrievals were logged."""


@dataclass(frozen=True)
class MemoryParams:
    """Retrieval weights; defaults are the reference operating point."""

    alpha: float = 1.0            # semantic relevance weight
    beta: float = 0.5             # temporal decay weight
    gamma: float = 1.0            # diversity penalty sensitivity
    delta: float = 1.0            # failure amplification weight
    theta: float = 5.0            # decay scale, in trials
    n_top: int = 5
    debiasing_enabled: bool = True
    decay_form: str = "time_constant"
    force_failure_slot: bool = False

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.theta <= 0:
            raise ValueError("theta must be strictly positive")
        if self.n_top < 1:
            raise ValueError("n_top must be at least 1")
        if self.decay_form not in DECAY_FORMS:
            raise ValueError(f"decay_form must be one of {DECAY_FORMS}")


@dataclass(frozen=True)
class StrategyContext:
    traffic_level: str
    arrival_rate_bps: float
    sla_latency_s: float
    time_step: int
    trial_id: int

    def __post_init__(self) -> None:
        if self.traffic_level not in TRAFFIC_LEVELS:
            raise ValueError(f"traffic_level must be one of {TRAFFIC_LEVELS}")
        if self.trial_id < 0:
            raise ValueError("trial_id must be non-negative")


@dataclass(frozen=True)
class StrategyAction:
    ran_bw_mhz: float
    edge_cpu_ghz: float


@dataclass(frozen=True)
class StrategyOutcome:
    latency_s: float
    sla_violation: bool
    unresolved: bool
    energy_watts: float
    energy_saved_percent: float

    @property
    def is_failure(self) -> bool:
        return self.sla_violation or self.unresolved


@dataclass(frozen=True)
class DistilledStrategy:
    """One searchable context-action-outcome record."""

    context: StrategyContext
    action: StrategyAction
    outcome: StrategyOutcome
    description: str
    keywords: frozenset[str]

    def __post_init__(self) -> None:
        if not self.keywords:
            raise ValueError("a distilled strategy needs at least one keyword")


@dataclass(frozen=True)
class ScoredCandidate:
    strategy: DistilledStrategy
    phi_semantic: float
    phi_decay: float
    phi_inflection: float
    phi_diversity: float
    phi_base: float
    phi_final: float


@dataclass(frozen=True)
class BiasDiagnostics:
    """Aggregate view of what retrieval actually surfaced."""

    age_mean: float
    age_std: float
    successes_retrieved: int
    failures_retrieved: int

    @property
    def no_failures(self) -> bool:
        return self.failures_retrieved == 0

    @property
    def success_failure_ratio(self) -> float:
        if self.failures_retrieved == 0:
            return math.inf
        return self.successes_retrieved / self.failures_retrieved


def classify_traffic(rate_bps: float, params: NetParams) -> str:
    """Bucket an arrival rate against the configured traffic profile.

    Low and high begin half a standard deviation out from the mean;
    everything between is medium.
    """
    if rate_bps < params.traffic_mu - params.traffic_sigma / 2:
        return "low"
    if rate_bps > params.traffic_mu + params.traffic_sigma / 2:
        return "high"
    return "medium"


def _band_token(value: float, lo: float, hi: float, prefix: str) -> str:
    width = (hi - lo) / 3.0
    if value < lo + width:
        return f"{prefix}_low"
    if value < lo + 2.0 * width:
        return f"{prefix}_mid"
    return f"{prefix}_high"


def strategy_keywords(
    context: StrategyContext, action: StrategyAction, outcome: StrategyOutcome
) -> frozenset[str]:
    """Fixed-vocabulary token set for a stored strategy.

    Same inputs always produce the same set: a traffic token, one
    outcome token, the two generic concern tokens, and banded action
    tokens so structurally similar configurations share vocabulary.
    """
    if outcome.sla_violation:
        outcome_token = "sla_violation"
    elif outcome.unresolved:
        outcome_token = "unresolved"
    else:
        outcome_token = "success"
    return frozenset(
        {
            f"{context.traffic_level}_traffic",
            outcome_token,
            "latency",
            "sla",
            _band_token(action.ran_bw_mhz, *BW_BAND_RANGE_MHZ, "bw"),
            _band_token(action.edge_cpu_ghz, *CPU_BAND_RANGE_GHZ, "cpu"),
        }
    )


def query_keywords(context: StrategyContext) -> frozenset[str]:
    """Tokens for a live query: traffic level plus the standing concerns."""
    return frozenset({f"{context.traffic_level}_traffic", "latency", "sla"})


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """|a n b| / |a u b|, with two empty sets scoring 0 by convention."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def score(
    strategy: DistilledStrategy,
    query_kw: frozenset[str],
    query_trial: int,
    selected_kw: frozenset[str],
    params: MemoryParams,
) -> ScoredCandidate:
    """Score one stored strategy against a query; see the module doc."""
    age = query_trial - strategy.context.trial_id
    if age < 0:
        raise ValueError(f"strategy from trial {strategy.context.trial_id} is in the future")
    phi_semantic = jaccard(strategy.keywords, query_kw)
    if params.decay_form == "time_constant":
        phi_decay = math.exp(-age / params.theta)
    else:
        phi_decay = math.exp(-params.theta * age)
    if strategy.outcome.sla_violation:
        phi_inflection = 1.0
    elif strategy.outcome.unresolved:
        phi_inflection = 0.5
    else:
        phi_inflection = 0.0
    phi_diversity = params.gamma * jaccard(strategy.keywords, selected_kw)
    phi_base = (
        params.alpha * phi_semantic
        + params.beta * phi_decay
        + params.delta * phi_inflection
    )
    return ScoredCandidate(
        strategy=strategy,
        phi_semantic=phi_semantic,
        phi_decay=phi_decay,
        phi_inflection=phi_inflection,
        phi_diversity=phi_diversity,
        phi_base=phi_base,
        phi_final=phi_base - phi_diversity,
    )


def retrieve(
    query: StrategyContext,
    store: Sequence[DistilledStrategy],
    params: MemoryParams,
) -> list[ScoredCandidate]:
    """Up to n_top candidates; the first is the anchor.

    Debiased mode selects greedily, re-scoring the remainder after each
    pick so the diversity penalty sees the growing selected-keyword
    union.  Ties break toward the newer trial, then the earlier insert.
    Vanilla mode ranks purely by recency among entries with any keyword
    overlap.
    """
    if not store:
        return []
    if not params.debiasing_enabled:
        return _retrieve_vanilla(query, store, params)

    qkw = query_keywords(query)
    remaining = list(enumerate(store))
    picked: list[ScoredCandidate] = []
    selected_kw: frozenset[str] = frozenset()
    for _ in range(min(params.n_top, len(store))):
        best_idx = None
        best_key: tuple[float, int, int] | None = None
        best_cand = None
        for pos, (idx, strategy) in enumerate(remaining):
            cand = score(strategy, qkw, query.trial_id, selected_kw, params)
            key = (cand.phi_final, strategy.context.trial_id, -idx)
            if best_key is None or key > best_key:
                best_key, best_idx, best_cand = key, pos, cand
        assert best_cand is not None and best_idx is not None
        picked.append(best_cand)
        selected_kw = selected_kw | best_cand.strategy.keywords
        del remaining[best_idx]

    if params.force_failure_slot and not any(
        c.strategy.outcome.is_failure for c in picked
    ):
        fallback = _best_failure(remaining, qkw, query.trial_id, selected_kw, params)
        if fallback is not None:
            picked[-1] = fallback
    return picked


def _best_failure(
    remaining: list[tuple[int, DistilledStrategy]],
    qkw: frozenset[str],
    query_trial: int,
    selected_kw: frozenset[str],
    params: MemoryParams,
) -> ScoredCandidate | None:
    best_key: tuple[float, int, int] | None = None
    best = None
    for idx, strategy in remaining:
        if not strategy.outcome.is_failure:
            continue
        cand = score(strategy, qkw, query_trial, selected_kw, params)
        key = (cand.phi_final, strategy.context.trial_id, -idx)
        if best_key is None or key > best_key:
            best_key, best = key, cand
    return best


def _retrieve_vanilla(
    query: StrategyContext,
    store: Sequence[DistilledStrategy],
    params: MemoryParams,
) -> list[ScoredCandidate]:
    qkw = query_keywords(query)
    matching = [
        (idx, s) for idx, s in enumerate(store) if jaccard(s.keywords, qkw) > 0
    ]
    matching.sort(key=lambda pair: (pair[1].context.trial_id, pair[0]), reverse=True)
    out = []
    for _, strategy in matching[: params.n_top]:
        semantic = jaccard(strategy.keywords, qkw)
        age = query.trial_id - strategy.context.trial_id
        if params.decay_form == "time_constant":
            decay = math.exp(-age / params.theta)
        else:
            decay = math.exp(-params.theta * age)
        base = params.alpha * semantic + params.beta * decay
        out.append(
            ScoredCandidate(
                strategy=strategy,
                phi_semantic=semantic,
                phi_decay=decay,
                phi_inflection=0.0,
                phi_diversity=0.0,
                phi_base=base,
                phi_final=base,
            )
        )
    return out


def distill(
    record: NegotiationRecord,
    metrics,
    trial_id: int,
    net_params: NetParams,
) -> DistilledStrategy:
    """Compress one finished negotiation into a searchable strategy.

    The recorded action is the allocation the network actually ran
    with: the agreed configuration after a consensus, the standing
    defaults otherwise.  Any terminal outcome other than an agreement
    is remembered as an unresolved negotiation, because what matters to
    later retrieval is that the attempt failed to coordinate.
    """
    agreed = record.outcome is Outcome.AGREEMENT
    violated = metrics.latency_s >= net_params.sla_latency
    context = StrategyContext(
        traffic_level=classify_traffic(metrics.avg_arrival_rate_bps, net_params),
        arrival_rate_bps=metrics.avg_arrival_rate_bps,
        sla_latency_s=net_params.sla_latency,
        time_step=record.consensus_round if agreed else metrics.time_step,
        trial_id=trial_id,
    )
    action = StrategyAction(
        ran_bw_mhz=metrics.bandwidth_hz / 1e6,
        edge_cpu_ghz=metrics.cpu_hz / 1e9,
    )
    outcome = StrategyOutcome(
        latency_s=metrics.latency_s,
        sla_violation=agreed and violated,
        unresolved=not agreed,
        energy_watts=metrics.energy_w,
        energy_saved_percent=energy_saved_percent(metrics.bandwidth_hz, net_params),
    )
    saved = outcome.energy_saved_percent
    if outcome.unresolved:
        description = f"Failure: No agreement reached. Energy savings: {saved:.2f}%"
    elif outcome.sla_violation:
        description = f"Failure: SLA violated. Energy savings: {saved:.2f}%"
    else:
        description = f"Success: Latency met. Energy savings: {saved:.2f}%"
    return DistilledStrategy(
        context=context,
        action=action,
        outcome=outcome,
        description=description,
        keywords=strategy_keywords(context, action, outcome),
    )


def infer_configuration(
    anchor: DistilledStrategy,
    retrieved: Sequence[ScoredCandidate],
    current: StrategyContext,
) -> Configuration:
    """Suggest a starting configuration from the memory anchor.

    A failed anchor repels: both levers move up 15 percent so the
    failed action is never replayed verbatim.  A successful anchor
    attracts with a traffic-dependent tilt: under low or medium traffic
    bandwidth is cut aggressively for energy while the CPU creeps up;
    under high traffic bandwidth is barely touched and the CPU pushes
    hard toward its ceiling.  This is advice for the negotiation's
    opening stance, not a decision.
    """
    b = anchor.action.ran_bw_mhz
    f = anchor.action.edge_cpu_ghz
    if anchor.outcome.is_failure:
        b, f = b * 1.15, f * 1.15
    elif current.traffic_level == "high":
        b, f = b * 0.95, f * 1.15
    else:
        b, f = b * 0.85, f * 1.05
    b = min(max(b, SUGGESTED_BW_FLOOR_MHZ), BW_BAND_RANGE_MHZ[1])
    f = min(max(f, CPU_BAND_RANGE_GHZ[0]), 45.0)
    return Configuration(round(b, 2), round(f, 2))


def bias_diagnostics(
    retrieval_log: Sequence[tuple[int, Sequence[ScoredCandidate]]],
) -> BiasDiagnostics:
    """Age and outcome-mix statistics over every retrieved candidate."""
    ages: list[float] = []
    successes = failures = 0
    for query_trial, candidates in retrieval_log:
        for cand in candidates:
            ages.append(query_trial - cand.strategy.context.trial_id)
            if cand.strategy.outcome.is_failure:
                failures += 1
            else:
                successes += 1
    if not ages:
        raise InsufficientDataError("no retrievals logged yet")
    mean = sum(ages) / len(ages)
    variance = sum((a - mean) ** 2 for a in ages) / len(ages)
    return BiasDiagnostics(
        age_mean=mean,
        age_std=math.sqrt(variance),
        successes_retrieved=successes,
        failures_retrieved=failures,
    )


class CollectiveMemory:
    """Shared two-layer store used by both negotiating agents."""

    def __init__(self, params: MemoryParams | None = None) -> None:
        self.params = params or MemoryParams()
        self._raw: list[tuple[int, dict, str]] = []
        self._distilled: list[DistilledStrategy] = []
        self._retrieval_log: list[tuple[int, list[ScoredCandidate]]] = []

    def __len__(self) -> int:
        return len(self._distilled)

    @property
    def raw_size(self) -> int:
        return len(self._raw)

    @property
    def strategies(self) -> tuple[DistilledStrategy, ...]:
        return tuple(self._distilled)

    @property
    def retrieval_log(self) -> tuple[tuple[int, list[ScoredCandidate]], ...]:
        return tuple(self._retrieval_log)

    def append_raw(self, episode_log: str, metadata: dict | None = None) -> None:
        """Record a full episode transcript; sequence number is the clock."""
        self._raw.append((len(self._raw), dict(metadata or {}), episode_log))

    def raw_entries(self) -> tuple[tuple[int, dict, str], ...]:
        return tuple(self._raw)

    def add_strategy(self, strategy: DistilledStrategy) -> None:
        self._distilled.append(strategy)

    def retrieve(self, query: StrategyContext) -> list[ScoredCandidate]:
        result = retrieve(query, self._distilled, self.params)
        if result:
            self._retrieval_log.append((query.trial_id, result))
        return result

    def diagnostics(self) -> BiasDiagnostics:
        return bias_diagnostics(self._retrieval_log)

    def clear(self) -> None:
        self._raw.clear()
        self._distilled.clear()
        self._retrieval_log.clear()

    # Persistence: distilled layer as line-delimited JSON, raw layer as
    # a sectioned plain-text transcript.  Both reload losslessly.

    def save(self, distilled_path: str | Path, raw_path: str | Path) -> None:
        distilled_path, raw_path = Path(distilled_path), Path(raw_path)
        with distilled_path.open("w", encoding="utf-8") as fh:
            for strategy in self._distilled:
                fh.write(json.dumps(strategy_to_json(strategy), ensure_ascii=False))
                fh.write("\n")
        with raw_path.open("w", encoding="utf-8") as fh:
            for seq, meta, text in self._raw:
                fh.write(f"=== [{seq:06d}] {json.dumps(meta, ensure_ascii=False)} ===\n")
                fh.write(text)
                if not text.endswith("\n"):
                    fh.write("\n")

    def load(self, distilled_path: str | Path, raw_path: str | Path) -> None:
        self.clear()
        distilled_path, raw_path = Path(distilled_path), Path(raw_path)
        with distilled_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    self._distilled.append(strategy_from_json(json.loads(line)))
        header = re.compile(r"^=== \[(\d{6})\] (.*) ===$")
        current: list[str] | None = None
        meta: dict = {}
        seq = 0
        with raw_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                match = header.match(line.rstrip("\n"))
                if match:
                    if current is not None:
                        self._raw.append((seq, meta, "".join(current).rstrip("\n")))
                    seq = int(match.group(1))
                    meta = json.loads(match.group(2))
                    current = []
                elif current is not None:
                    current.append(line)
        if current is not None:
            self._raw.append((seq, meta, "".join(current).rstrip("\n")))


def strategy_to_json(strategy: DistilledStrategy) -> dict:
    return {
        "context": {
            "traffic_level": strategy.context.traffic_level,
            "arrival_rate_bps": strategy.context.arrival_rate_bps,
            "sla_latency_ms": strategy.context.sla_latency_s * 1e3,
            "time_step": strategy.context.time_step,
            "trial_id": strategy.context.trial_id,
        },
        "action": {
            "ran_bw_mhz": strategy.action.ran_bw_mhz,
            "edge_cpu_ghz": strategy.action.edge_cpu_ghz,
        },
        "outcome": {
            "latency_ms": strategy.outcome.latency_s * 1e3,
            "sla_violation": strategy.outcome.sla_violation,
            "unresolved": strategy.outcome.unresolved,
            "energy_watts": strategy.outcome.energy_watts,
            "energy_saved_percent": strategy.outcome.energy_saved_percent,
        },
        "description": strategy.description,
        "keywords": sorted(strategy.keywords),
    }


def strategy_from_json(data: dict) -> DistilledStrategy:
    ctx, act, out = data["context"], data["action"], data["outcome"]
    return DistilledStrategy(
        context=StrategyContext(
            traffic_level=ctx["traffic_level"],
            arrival_rate_bps=ctx["arrival_rate_bps"],
            sla_latency_s=ctx["sla_latency_ms"] / 1e3,
            time_step=ctx["time_step"],
            trial_id=ctx["trial_id"],
        ),
        action=StrategyAction(act["ran_bw_mhz"], act["edge_cpu_ghz"]),
        outcome=StrategyOutcome(
            latency_s=out["latency_ms"] / 1e3,
            sla_violation=out["sla_violation"],
            unresolved=out["unresolved"],
            energy_watts=out["energy_watts"],
            energy_saved_percent=out["energy_saved_percent"],
        ),
        description=data["description"],
        keywords=frozenset(data["keywords"]),
    )

"""Scenario harness: seeded trials, shared accumulating memory, reports.

A scenario runs T independent negotiations over freshly seeded
environments.  Within a scenario the two agents share one collective
memory that accumulates a distilled strategy per trial; across
scenarios nothing is shared, so runs stay pairwise comparable on the
same master seed.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agents import ROLE_EDGE, ROLE_RAN, AgentObjective, RuleBasedAgent
from .environment import NetworkEnvironment
from .memory import (
    BiasDiagnostics,
    CollectiveMemory,
    InsufficientDataError,
    MemoryParams,
    distill,
)
from .netmath import NetParams, energy_saved_percent
from .protocol import NegotiationRecord, Outcome, run_negotiation, serialize

MEMORY_MODES = ("none", "vanilla", "unbiased")

# Canonical presentation order: strongest memory treatment first.
MODE_ORDER = ("unbiased", "vanilla", "none")

BOOTSTRAP_RESAMPLES = 200
BOOTSTRAP_PERCENTILES = (5.0, 95.0)


@dataclass(frozen=True)
class ScenarioConfig:
    memory_mode: str = "none"
    trials: int = 50
    seed: int = 7
    net_params: NetParams = field(default_factory=NetParams)
    memory_params: MemoryParams = field(default_factory=MemoryParams)
    max_rounds: int = 8

    def __post_init__(self) -> None:
        if self.memory_mode not in MEMORY_MODES:
            raise ValueError(f"memory_mode must be one of {MEMORY_MODES}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")

    def effective_memory_params(self) -> MemoryParams:
        # The mode, not the raw params, decides whether debiasing runs.
        return replace(
            self.memory_params,
            debiasing_enabled=self.memory_mode == "unbiased",
        )


@dataclass(frozen=True)
class TrialOutcome:
    """One negotiation trial, measured over the full enforcement horizon."""

    trial_id: int
    outcome: str
    consensus_round: int | None
    agreed_bw_mhz: float | None
    agreed_cpu_ghz: float | None
    latency_s: float
    energy_w: float
    energy_saved_percent: float
    sla_violation: bool
    unresolved: bool
    cpu_conflicts: int
    message_count: int
    transcript: str

    def to_json_dict(self) -> dict:
        data = {
            "trial_id": self.trial_id,
            "outcome": self.outcome,
            "consensus_round": self.consensus_round,
            "agreed_bw_mhz": self.agreed_bw_mhz,
            "agreed_cpu_ghz": self.agreed_cpu_ghz,
            "latency_ms": self.latency_s * 1e3,
            "energy_w": self.energy_w,
            "energy_saved_percent": self.energy_saved_percent,
            "sla_violation": self.sla_violation,
            "unresolved": self.unresolved,
            "cpu_conflicts": self.cpu_conflicts,
            "message_count": self.message_count,
        }
        return data


@dataclass(frozen=True)
class ScenarioReport:
    config: ScenarioConfig
    trials: tuple[TrialOutcome, ...]
    conflict_count: int
    refusal_count: int
    parse_failure_count: int
    agreement_count: int
    sla_violation_rate: float
    avg_latency_exceeding_sla: float
    latency_samples: tuple[float, ...]
    energy_saved_samples: tuple[float, ...]
    consensus_samples: tuple[int, ...]
    diagnostics: BiasDiagnostics | None


def transcript_text(record: NegotiationRecord) -> str:
    """Readable session log: greetings, wire messages, terminal verdict."""
    lines = [f"{speaker}: {text}" for speaker, text in record.preamble]
    lines += [f"{speaker}: {serialize(msg)}" for speaker, msg in record.rounds]
    lines.append(f"outcome: {record.outcome.value}")
    if record.consensus_round is not None:
        lines.append(f"consensus_round: {record.consensus_round}")
    if record.failure_detail:
        lines.append(f"detail: {record.failure_detail}")
    return "\n".join(lines)


# Builds one negotiating agent; lets operators swap in an externally
# reasoned agent without touching the seeding or measurement path.
AgentFactory = Callable[[str, NetParams, "CollectiveMemory | None"], object]


def _default_agent_factory(
    role: str, params: NetParams, memory: CollectiveMemory | None
) -> RuleBasedAgent:
    return RuleBasedAgent(AgentObjective(role), params, memory=memory)


def run_trial(
    cfg: ScenarioConfig,
    trial_id: int,
    memory: CollectiveMemory | None,
    agent_factory: AgentFactory = _default_agent_factory,
) -> TrialOutcome:
    """One seeded negotiation plus run-out to the full horizon."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trial_id]))
    env = NetworkEnvironment(cfg.net_params, rng)
    ran = agent_factory(ROLE_RAN, cfg.net_params, memory)
    edge = agent_factory(ROLE_EDGE, cfg.net_params, memory)
    ran.begin_trial(trial_id)
    edge.begin_trial(trial_id)
    record = run_negotiation(ran, edge, env, max_rounds=cfg.max_rounds)
    # Whatever the verdict, the network keeps running to the end of the
    # horizon so every trial is measured over the same number of steps.
    while env.time_step < cfg.net_params.n_steps:
        env.advance()
    metrics = env.metrics()

    agreed = record.outcome is Outcome.AGREEMENT
    outcome = TrialOutcome(
        trial_id=trial_id,
        outcome=record.outcome.value,
        consensus_round=record.consensus_round,
        agreed_bw_mhz=record.agreed_config.ran_bandwidth_mhz if agreed else None,
        agreed_cpu_ghz=record.agreed_config.edge_cpu_frequency_ghz if agreed else None,
        latency_s=metrics.latency_s,
        energy_w=metrics.energy_w,
        energy_saved_percent=energy_saved_percent(
            metrics.bandwidth_hz, cfg.net_params
        ),
        sla_violation=agreed and metrics.latency_s >= cfg.net_params.sla_latency,
        unresolved=record.outcome is Outcome.UNRESOLVED,
        cpu_conflicts=metrics.cpu_conflicts,
        message_count=len(record.rounds),
        transcript=transcript_text(record),
    )
    if memory is not None:
        memory.append_raw(
            outcome.transcript,
            metadata={"trial": trial_id, "outcome": record.outcome.value},
        )
        memory.add_strategy(distill(record, metrics, trial_id, cfg.net_params))
    return outcome


def run_scenario(
    cfg: ScenarioConfig,
    agent_factory: AgentFactory = _default_agent_factory,
    memory: CollectiveMemory | None = None,
) -> ScenarioReport:
    """Run cfg.trials seeded negotiations and aggregate them.

    A caller may hand in an empty memory to keep a reference to the
    accumulated store; by default one is created per scenario so runs
    never share state.
    """
    if cfg.memory_mode == "none":
        if memory is not None:
            raise ValueError("memory_mode none cannot take a memory")
    elif memory is None:
        memory = CollectiveMemory(cfg.effective_memory_params())
    outcomes = [
        run_trial(cfg, trial_id, memory, agent_factory)
        for trial_id in range(cfg.trials)
    ]
    diagnostics: BiasDiagnostics | None = None
    if memory is not None and memory.retrieval_log:
        diagnostics = memory.diagnostics()
    return build_report(cfg, outcomes, diagnostics)


def build_report(
    cfg: ScenarioConfig,
    outcomes: Sequence[TrialOutcome],
    diagnostics: BiasDiagnostics | None,
) -> ScenarioReport:
    """Aggregate per-trial records; recomputable from the records alone."""
    agreements = [t for t in outcomes if t.outcome == Outcome.AGREEMENT.value]
    violating = [t for t in agreements if t.sla_violation]
    sla = cfg.net_params.sla_latency
    return ScenarioReport(
        config=cfg,
        trials=tuple(outcomes),
        conflict_count=sum(t.unresolved for t in outcomes),
        refusal_count=sum(
            t.outcome == Outcome.NO_AGREEMENT.value for t in outcomes
        ),
        parse_failure_count=sum(
            t.outcome == Outcome.PARSE_FAILURE.value for t in outcomes
        ),
        agreement_count=len(agreements),
        sla_violation_rate=(
            100.0 * len(violating) / len(agreements) if agreements else 0.0
        ),
        avg_latency_exceeding_sla=(
            statistics.fmean(t.latency_s - sla for t in violating)
            if violating
            else 0.0
        ),
        latency_samples=tuple(t.latency_s for t in outcomes),
        energy_saved_samples=tuple(t.energy_saved_percent for t in agreements),
        consensus_samples=tuple(
            t.consensus_round for t in agreements if t.consensus_round is not None
        ),
        diagnostics=diagnostics,
    )


# -- distribution summaries ---------------------------------------------------


def empirical_cdf(samples: Sequence[float]) -> list[tuple[float, float]]:
    """Step CDF at the sorted sample points: F(v_i) = (i + 1) / n."""
    if len(samples) == 0:
        raise InsufficientDataError("empirical_cdf needs at least one sample")
    ordered = sorted(samples)
    n = len(ordered)
    return [(value, (i + 1) / n) for i, value in enumerate(ordered)]


def cdf_median(samples: Sequence[float]) -> float:
    if len(samples) == 0:
        raise InsufficientDataError("median needs at least one sample")
    return statistics.median(samples)


def bootstrap_cdf_band(
    samples: Sequence[float],
    resamples: int = BOOTSTRAP_RESAMPLES,
    percentiles: tuple[float, float] = BOOTSTRAP_PERCENTILES,
    seed: int = 0,
) -> list[tuple[float, float, float, float]]:
    """CDF with a resampling confidence band at each sample point.

    Returns (value, probability, band_low, band_high) rows on the
    original sorted sample grid.
    """
    base = empirical_cdf(samples)
    grid = np.array([value for value, _ in base])
    n = len(grid)
    rng = np.random.default_rng(seed)
    draws = np.empty((resamples, n))
    data = np.array(sorted(samples))
    for b in range(resamples):
        resample = np.sort(rng.choice(data, size=n, replace=True))
        draws[b] = np.searchsorted(resample, grid, side="right") / n
    low = np.percentile(draws, percentiles[0], axis=0)
    high = np.percentile(draws, percentiles[1], axis=0)
    return [
        (float(grid[i]), base[i][1], float(low[i]), float(high[i]))
        for i in range(n)
    ]


# -- cross-scenario comparison ------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    conflicts: int
    sla_violation_rate: float
    avg_latency_exceeding_sla_ms: float
    median_latency_ms: float | None
    median_energy_saved_percent: float | None
    median_consensus_round: float | None
    success_failure_ratio: float | None


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]
    conflicts_ordered: bool
    consensus_ordered: bool
    unbiased_violation_free: bool

    def deltas_from_first(self) -> list[dict[str, float]]:
        """Numeric differences of each row against the first one."""
        first = self.rows[0]
        out = []
        for row in self.rows:
            out.append(
                {
                    "conflicts": row.conflicts - first.conflicts,
                    "sla_violation_rate": row.sla_violation_rate
                    - first.sla_violation_rate,
                    "avg_latency_exceeding_sla_ms": row.avg_latency_exceeding_sla_ms
                    - first.avg_latency_exceeding_sla_ms,
                    "median_latency_ms": _delta(
                        row.median_latency_ms, first.median_latency_ms
                    ),
                    "median_energy_saved_percent": _delta(
                        row.median_energy_saved_percent,
                        first.median_energy_saved_percent,
                    ),
                    "median_consensus_round": _delta(
                        row.median_consensus_round, first.median_consensus_round
                    ),
                }
            )
        return out

    def to_text(self) -> str:
        header = (
            f"{'scenario':<10} {'conflicts':>9} {'sla_viol%':>9} "
            f"{'excess_ms':>9} {'lat_ms':>8} {'saved%':>8} "
            f"{'consensus':>9} {'s/f_ratio':>9}"
        )
        lines = [header, "-" * len(header)]
        for row in self.rows:
            lines.append(
                f"{row.label:<10} {row.conflicts:>9d} "
                f"{row.sla_violation_rate:>9.2f} "
                f"{row.avg_latency_exceeding_sla_ms:>9.2f} "
                f"{_fmt(row.median_latency_ms):>8} "
                f"{_fmt(row.median_energy_saved_percent):>8} "
                f"{_fmt(row.median_consensus_round):>9} "
                f"{_fmt(row.success_failure_ratio):>9}"
            )
        lines.append(
            "orderings: "
            f"conflicts_ordered={self.conflicts_ordered} "
            f"consensus_ordered={self.consensus_ordered} "
            f"unbiased_violation_free={self.unbiased_violation_free}"
        )
        return "\n".join(lines)

    def to_csv_rows(self) -> list[list]:
        rows: list[list] = [
            [
                "scenario",
                "conflicts",
                "sla_violation_rate",
                "avg_latency_exceeding_sla_ms",
                "median_latency_ms",
                "median_energy_saved_percent",
                "median_consensus_round",
                "success_failure_ratio",
            ]
        ]
        for row in self.rows:
            rows.append(
                [
                    row.label,
                    row.conflicts,
                    f"{row.sla_violation_rate:.2f}",
                    f"{row.avg_latency_exceeding_sla_ms:.2f}",
                    _fmt(row.median_latency_ms),
                    _fmt(row.median_energy_saved_percent),
                    _fmt(row.median_consensus_round),
                    _fmt(row.success_failure_ratio),
                ]
            )
        return rows


def _delta(a: float | None, b: float | None) -> float:
    if a is None or b is None:
        return 0.0
    return a - b


def _fmt(value: float | None) -> str:
    if value is None:
        return "n/a"
    if value == float("inf"):
        return "inf"
    return f"{value:.2f}"


def comparison_row(report: ScenarioReport) -> ComparisonRow:
    ratio: float | None = None
    if report.diagnostics is not None:
        ratio = report.diagnostics.success_failure_ratio
    return ComparisonRow(
        label=report.config.memory_mode,
        conflicts=report.conflict_count,
        sla_violation_rate=report.sla_violation_rate,
        avg_latency_exceeding_sla_ms=report.avg_latency_exceeding_sla * 1e3,
        median_latency_ms=(
            cdf_median(report.latency_samples) * 1e3
            if report.latency_samples
            else None
        ),
        median_energy_saved_percent=(
            cdf_median(report.energy_saved_samples)
            if report.energy_saved_samples
            else None
        ),
        median_consensus_round=(
            cdf_median(report.consensus_samples)
            if report.consensus_samples
            else None
        ),
        success_failure_ratio=ratio,
    )


def compare_scenarios(reports: Sequence[ScenarioReport]) -> ComparisonTable:
    if len(reports) < 2:
        raise ValueError("compare_scenarios needs at least two reports")
    rows = tuple(comparison_row(r) for r in reports)
    by_label = {row.label: row for row in rows}

    chain = [by_label[m].conflicts for m in MODE_ORDER if m in by_label]
    conflicts_ordered = all(a <= b for a, b in zip(chain, chain[1:]))

    consensus_chain = [
        by_label[m].median_consensus_round
        for m in MODE_ORDER[:2]
        if m in by_label and by_label[m].median_consensus_round is not None
    ]
    consensus_ordered = all(
        a <= b for a, b in zip(consensus_chain, consensus_chain[1:])
    )

    unbiased_violation_free = (
        "unbiased" not in by_label
        or by_label["unbiased"].sla_violation_rate == 0.0
    )
    return ComparisonTable(
        rows=rows,
        conflicts_ordered=conflicts_ordered,
        consensus_ordered=consensus_ordered,
        unbiased_violation_free=unbiased_violation_free,
    )


# -- artifact writers ---------------------------------------------------------


def write_trial_records(report: ScenarioReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for trial in report.trials:
            handle.write(json.dumps(trial.to_json_dict(), sort_keys=True))
            handle.write("\n")


def write_cdf_csv(
    rows: Sequence[tuple[float, float, float, float]], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["value", "probability", "band_low", "band_high"])
        for value, prob, low, high in rows:
            writer.writerow(
                [f"{value!r}", f"{prob!r}", f"{low!r}", f"{high!r}"]
            )


def write_comparison(
    table: ComparisonTable, csv_path: str | Path, text_path: str | Path
) -> None:
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        csv.writer(handle).writerows(table.to_csv_rows())
    with open(text_path, "w", encoding="utf-8") as handle:
        handle.write(table.to_text())
        handle.write("\n")


def write_transcripts(report: ScenarioReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for trial in report.trials:
            handle.write(f"=== trial {trial.trial_id:03d} ===\n")
            handle.write(trial.transcript)
            handle.write("\n\n")

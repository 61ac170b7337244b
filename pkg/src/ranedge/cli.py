"""Operator entry point.

Two subcommands:

``run``
    Execute one scenario (or the full three-way comparison), write every
    artifact plus a manifest that pins the resolved configuration, and
    report whether the directional orderings held.

``memory-inspect``
    Load a saved distilled store and print the top-scored candidates for
    a query context, with every score component spelled out.

Configuration resolves in three layers: built-in defaults, then an
optional TOML file, then command-line flags.  The manifest records the
final resolution, so replaying a manifest reproduces the run byte for
byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .harness import (
    MEMORY_MODES,
    MODE_ORDER,
    AgentFactory,
    ScenarioConfig,
    ScenarioReport,
    _default_agent_factory,
    bootstrap_cdf_band,
    compare_scenarios,
    run_scenario,
    write_cdf_csv,
    write_comparison,
    write_transcripts,
    write_trial_records,
)
from .memory import (
    CollectiveMemory,
    MemoryParams,
    StrategyContext,
    query_keywords,
    retrieve,
    strategy_from_json,
)
from .netmath import DomainError, NetParams
from .reasoner import (
    ExternalReasonerAgent,
    HttpChatTransport,
    ReasonerConfig,
    ReasonerError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_RUNTIME = 4

# Representative arrival rates when an inspect query names only the
# traffic band, in bits/s.
RATE_FOR_TRAFFIC = {"low": 3.0e7, "medium": 5.0e7, "high": 7.0e7}


class UsageError(Exception):
    pass


class FileError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse wants to kill the process on bad flags; surface a typed
    # error instead so main() can map it to an exit code.
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


# -- configuration resolution --------------------------------------------------


def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config file {path} is not valid TOML: {exc}") from exc


def _apply_section(defaults: dict, overrides: dict, section: str) -> dict:
    merged = dict(defaults)
    for key, value in overrides.items():
        if key not in merged:
            raise UsageError(f"unknown key {key!r} in config section [{section}]")
        merged[key] = value
    return merged


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then flags; returns the manifest dict."""
    scenario = {
        "scenarios": ["all"],
        "trials": 50,
        "seed": 7,
        "max_rounds": 8,
        "reasoner": "rules",
    }
    network = dataclasses.asdict(NetParams())
    memory = dataclasses.asdict(MemoryParams())

    if args.config:
        raw = _load_toml(args.config)
        for section in raw:
            if section not in ("scenario", "network", "memory"):
                raise UsageError(f"unknown config section [{section}]")
        file_scenario = dict(raw.get("scenario", {}))
        if "scenario" in file_scenario:
            file_scenario["scenarios"] = [file_scenario.pop("scenario")]
        scenario = _apply_section(scenario, file_scenario, "scenario")
        network = _apply_section(network, raw.get("network", {}), "network")
        memory = _apply_section(memory, raw.get("memory", {}), "memory")

    if args.scenario is not None:
        scenario["scenarios"] = [args.scenario]
    if args.trials is not None:
        scenario["trials"] = args.trials
    if args.seed is not None:
        scenario["seed"] = args.seed
    if args.max_rounds is not None:
        scenario["max_rounds"] = args.max_rounds
    if args.reasoner is not None:
        scenario["reasoner"] = args.reasoner
    if args.queue_transfer is not None:
        network["queue_transfer"] = args.queue_transfer
    if args.latency_form is not None:
        network["latency_form"] = args.latency_form
    if args.decay_form is not None:
        memory["decay_form"] = args.decay_form
    if args.force_failure_slot:
        memory["force_failure_slot"] = True

    if scenario["scenarios"] == ["all"]:
        scenario["scenarios"] = list(MODE_ORDER)
    for label in scenario["scenarios"]:
        if label not in MEMORY_MODES:
            raise UsageError(
                f"scenario must be one of {MEMORY_MODES + ('all',)}, got {label!r}"
            )
    if scenario["reasoner"] not in ("rules", "external"):
        raise UsageError(f"reasoner must be rules or external, got {scenario['reasoner']!r}")
    return {"scenario": scenario, "network": network, "memory": memory}


def _build_params(resolved: dict) -> tuple[NetParams, MemoryParams]:
    try:
        return NetParams(**resolved["network"]), MemoryParams(**resolved["memory"])
    except (DomainError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _validate_scenario_numbers(scenario: dict) -> None:
    if not isinstance(scenario["trials"], int) or scenario["trials"] < 1:
        raise UsageError(f"trials must be a positive integer, got {scenario['trials']!r}")
    if not isinstance(scenario["max_rounds"], int) or scenario["max_rounds"] < 1:
        raise UsageError(
            f"max_rounds must be a positive integer, got {scenario['max_rounds']!r}"
        )
    if not isinstance(scenario["seed"], int) or scenario["seed"] < 0:
        raise UsageError(f"seed must be a non-negative integer, got {scenario['seed']!r}")


def _agent_factory_for(resolved: dict) -> AgentFactory:
    if resolved["scenario"]["reasoner"] == "rules":
        return _default_agent_factory
    try:
        reasoner_cfg = ReasonerConfig.from_env()
    except ReasonerError as exc:
        raise UsageError(str(exc)) from exc
    transport = HttpChatTransport(reasoner_cfg)

    def factory(role: str, params: NetParams, memory) -> ExternalReasonerAgent:
        return ExternalReasonerAgent(role, transport, params, memory=memory)

    return factory


# -- the run command -----------------------------------------------------------


def _scenario_artifacts(
    report: ScenarioReport, out: Path, label: str, seed: int
) -> dict[str, str]:
    paths: dict[str, str] = {}

    def emit(kind: str, name: str, writer) -> None:
        writer(out / name)
        paths[kind] = name

    emit("trials", f"trials_{label}.jsonl", lambda p: write_trial_records(report, p))
    emit("transcripts", f"transcripts_{label}.txt", lambda p: write_transcripts(report, p))
    emit(
        "latency_cdf",
        f"latency_cdf_{label}.csv",
        lambda p: write_cdf_csv(
            bootstrap_cdf_band(report.latency_samples, seed=seed), p
        ),
    )
    if report.energy_saved_samples:
        emit(
            "energy_cdf",
            f"energy_cdf_{label}.csv",
            lambda p: write_cdf_csv(
                bootstrap_cdf_band(report.energy_saved_samples, seed=seed), p
            ),
        )
    if report.consensus_samples:
        emit(
            "consensus_cdf",
            f"consensus_cdf_{label}.csv",
            lambda p: write_cdf_csv(
                bootstrap_cdf_band(
                    [float(v) for v in report.consensus_samples], seed=seed
                ),
                p,
            ),
        )
    return paths


def cmd_run(args: argparse.Namespace) -> int:
    if args.replay:
        if any(
            value not in (None, False)
            for value in (
                args.scenario, args.trials, args.seed, args.max_rounds,
                args.reasoner, args.config, args.queue_transfer,
                args.latency_form, args.decay_form, args.force_failure_slot,
            )
        ):
            raise UsageError("--replay takes its configuration from the manifest; drop the other flags")
        try:
            manifest = json.loads(Path(args.replay).read_text(encoding="utf-8"))
        except OSError as exc:
            raise FileError(f"cannot read manifest {args.replay}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"manifest {args.replay} is not valid JSON: {exc}") from exc
        resolved = {k: manifest[k] for k in ("scenario", "network", "memory")}
    else:
        resolved = resolve_config(args)

    _validate_scenario_numbers(resolved["scenario"])
    net_params, memory_params = _build_params(resolved)
    factory = _agent_factory_for(resolved)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FileError(f"cannot create output directory {out}: {exc}") from exc

    scenario = resolved["scenario"]
    reports: list[ScenarioReport] = []
    artifacts: dict[str, object] = {}
    for label in scenario["scenarios"]:
        cfg = ScenarioConfig(
            memory_mode=label,
            trials=scenario["trials"],
            seed=scenario["seed"],
            net_params=net_params,
            memory_params=memory_params,
            max_rounds=scenario["max_rounds"],
        )
        memory = (
            CollectiveMemory(cfg.effective_memory_params())
            if label != "none"
            else None
        )
        report = run_scenario(cfg, factory, memory=memory)
        reports.append(report)
        paths = _scenario_artifacts(report, out, label, scenario["seed"])
        if memory is not None:
            store_name = f"memory_{label}.jsonl"
            raw_name = f"memory_raw_{label}.txt"
            memory.save(out / store_name, out / raw_name)
            paths["memory_store"] = store_name
            paths["memory_raw"] = raw_name
        artifacts[label] = paths
        print(
            f"{label}: trials={report.config.trials} "
            f"agreements={report.agreement_count} "
            f"conflicts={report.conflict_count} "
            f"refusals={report.refusal_count} "
            f"violation_rate={report.sla_violation_rate:.2f}%"
        )

    if len(reports) >= 2:
        table = compare_scenarios(reports)
        write_comparison(table, out / "comparison.csv", out / "comparison.txt")
        artifacts["comparison_csv"] = "comparison.csv"
        artifacts["comparison_text"] = "comparison.txt"
        print(table.to_text())

    manifest = {
        "tool": "ranedge",
        "version": __version__,
        "scenario": scenario,
        "network": resolved["network"],
        "memory": resolved["memory"],
        "artifacts": artifacts,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"manifest: {manifest_path}")
    return EXIT_OK


# -- the memory-inspect command -------------------------------------------------


def _parse_query(pairs: list[str], default_trial: int) -> StrategyContext:
    allowed = {"traffic", "rate_mbps", "trial", "step", "sla_ms"}
    values: dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or key not in allowed:
            raise UsageError(
                f"query terms look like key=value with keys {sorted(allowed)}, got {pair!r}"
            )
        values[key] = value
    try:
        traffic = values.get("traffic", "medium")
        rate = (
            float(values["rate_mbps"]) * 1e6
            if "rate_mbps" in values
            else RATE_FOR_TRAFFIC.get(traffic, 5.0e7)
        )
        return StrategyContext(
            traffic_level=traffic,
            arrival_rate_bps=rate,
            sla_latency_s=float(values.get("sla_ms", 10.0)) / 1e3,
            time_step=int(values.get("step", 0)),
            trial_id=int(values.get("trial", default_trial)),
        )
    except ValueError as exc:
        raise UsageError(f"bad query value: {exc}") from exc


def _load_store(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileError(f"cannot read store {path}: {exc}") from exc
    try:
        return [
            strategy_from_json(json.loads(line))
            for line in text.splitlines()
            if line.strip()
        ]
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"store {path} is not a distilled-strategy JSONL file: {exc}") from exc


def cmd_memory_inspect(args: argparse.Namespace) -> int:
    store = _load_store(args.store)
    if not store:
        print("store is empty")
        return EXIT_OK

    params = MemoryParams(n_top=args.top)
    default_trial = max(s.context.trial_id for s in store) + 1
    query = _parse_query(args.query or [], default_trial)
    candidates = retrieve(query, store, params)

    print(f"store: {args.store} ({len(store)} strategies)")
    print(
        f"query: traffic={query.traffic_level} rate_mbps={query.arrival_rate_bps / 1e6:.1f} "
        f"trial={query.trial_id} keywords={'|'.join(sorted(query_keywords(query)))}"
    )
    for rank, cand in enumerate(candidates, start=1):
        s = cand.strategy
        verdict = "failure" if s.outcome.is_failure else "success"
        print(f"[{rank}] trial={s.context.trial_id} outcome={verdict} phi_final={cand.phi_final:.6f}")
        print(
            f"    semantic={cand.phi_semantic:.6f} decay={cand.phi_decay:.6f} "
            f"inflection={cand.phi_inflection:.6f} diversity={cand.phi_diversity:.6f}"
        )
        print(
            f"    weighted: alpha*semantic={params.alpha * cand.phi_semantic:.6f} "
            f"beta*decay={params.beta * cand.phi_decay:.6f} "
            f"delta*inflection={params.delta * cand.phi_inflection:.6f} "
            f"phi_base={cand.phi_base:.6f}"
        )
        print(
            f"    action: bandwidth_mhz={s.action.ran_bw_mhz:.2f} cpu_ghz={s.action.edge_cpu_ghz:.2f}"
        )
        print(
            f"    result: latency_ms={s.outcome.latency_s * 1e3:.2f} "
            f"sla_violation={s.outcome.sla_violation} unresolved={s.outcome.unresolved} "
            f"saved={s.outcome.energy_saved_percent:.2f}%"
        )
        print(f"    {s.description}")
    return EXIT_OK


# -- argument wiring ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ranedge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ranedge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenarios and write artifacts")
    run.add_argument("--scenario", choices=(*MEMORY_MODES, "all"), default=None)
    run.add_argument("--trials", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--max-rounds", type=int, default=None)
    run.add_argument("--config", default=None, help="TOML file with [scenario]/[network]/[memory] sections")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--reasoner", choices=("rules", "external"), default=None)
    run.add_argument("--queue-transfer", choices=("corrected", "as_printed"), default=None)
    run.add_argument("--latency-form", choices=("division", "as_printed"), default=None)
    run.add_argument("--decay-form", choices=("time_constant", "as_printed"), default=None)
    run.add_argument("--force-failure-slot", action="store_true", default=False)
    run.add_argument("--replay", default=None, metavar="MANIFEST", help="re-run a recorded manifest exactly")
    run.set_defaults(handler=cmd_run)

    inspect = sub.add_parser("memory-inspect", help="score a saved store against a query")
    inspect.add_argument("store", help="distilled-strategy JSONL file")
    inspect.add_argument("--top", type=int, default=5)
    inspect.add_argument(
        "--query",
        nargs="*",
        default=None,
        metavar="KEY=VALUE",
        help="context terms: traffic=, rate_mbps=, trial=, step=, sla_ms=",
    )
    inspect.set_defaults(handler=cmd_memory_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ReasonerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001  scenario faults must not traceback
        print(f"error: scenario failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""CLI tests: flag resolution, artifacts, manifest replay, store inspection."""

from __future__ import annotations

import json
import math
import re

import pytest

from ranedge.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from ranedge.memory import (
    DistilledStrategy,
    StrategyAction,
    StrategyContext,
    StrategyOutcome,
    strategy_keywords,
    strategy_to_json,
)


def run_cli(*argv: str) -> int:
    return main(list(argv))


def write_store(path, strategies) -> None:
    lines = [json.dumps(strategy_to_json(s)) for s in strategies]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def reference_strategy() -> DistilledStrategy:
    # Medium-traffic agreement at 26.67 MHz / 30 GHz saving a third of
    # the radio power; the canonical distilled-store example.
    context = StrategyContext("medium", 5.0e7, 0.010, 3, 15)
    action = StrategyAction(26.67, 30.0)
    outcome = StrategyOutcome(0.0085, False, False, 13.335, 33.33)
    return DistilledStrategy(
        context=context,
        action=action,
        outcome=outcome,
        description="Success: Latency met. Energy savings: 33.33%",
        keywords=strategy_keywords(context, action, outcome),
    )


# -- run: resolution and validation ---------------------------------------------


def test_zero_trials_is_a_usage_error(tmp_path, capsys) -> None:
    code = run_cli("run", "--trials", "0", "--out", str(tmp_path))
    assert code == EXIT_USAGE
    assert "trials" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error(tmp_path, capsys) -> None:
    code = run_cli("run", "--bogus", "--out", str(tmp_path))
    assert code == EXIT_USAGE
    assert "--bogus" in capsys.readouterr().err


def test_negative_seed_is_a_usage_error(tmp_path) -> None:
    assert run_cli("run", "--seed", "-3", "--out", str(tmp_path)) == EXIT_USAGE


def test_bad_toml_is_a_usage_error(tmp_path, capsys) -> None:
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[scenario\ntrials = 3\n")
    code = run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert code == EXIT_USAGE
    assert "TOML" in capsys.readouterr().err


def test_unknown_config_key_is_a_usage_error(tmp_path, capsys) -> None:
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[network]\nbandwidth = 3\n")
    code = run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert code == EXIT_USAGE
    assert "bandwidth" in capsys.readouterr().err


def test_unknown_config_section_is_a_usage_error(tmp_path) -> None:
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[agents]\nx = 1\n")
    assert run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "out")) == EXIT_USAGE


def test_missing_config_file_is_a_usage_error(tmp_path) -> None:
    missing = tmp_path / "nope.toml"
    assert run_cli("run", "--config", str(missing), "--out", str(tmp_path / "out")) == EXIT_USAGE


def test_flags_override_config_file_which_overrides_defaults(tmp_path) -> None:
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "[scenario]\n"
        'scenario = "vanilla"\n'
        "trials = 3\n"
        "seed = 5\n"
        "[network]\n"
        "sla_latency = 0.012\n"
        "[memory]\n"
        "theta = 4.0\n"
    )
    out = tmp_path / "out"
    code = run_cli("run", "--config", str(cfg), "--trials", "2", "--out", str(out))
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["scenario"]["trials"] == 2
    assert manifest["scenario"]["seed"] == 5
    assert manifest["scenario"]["scenarios"] == ["vanilla"]
    assert manifest["network"]["sla_latency"] == 0.012
    assert manifest["memory"]["theta"] == 4.0


def test_external_reasoner_without_endpoint_is_a_usage_error(
    tmp_path, monkeypatch, capsys
) -> None:
    monkeypatch.delenv("RANEDGE_REASONER_ENDPOINT", raising=False)
    code = run_cli("run", "--reasoner", "external", "--trials", "1", "--out", str(tmp_path))
    assert code == EXIT_USAGE
    assert "RANEDGE_REASONER_ENDPOINT" in capsys.readouterr().err


# -- run: artifacts --------------------------------------------------------------


def test_full_run_writes_every_artifact(tmp_path, capsys) -> None:
    out = tmp_path / "out"
    code = run_cli("run", "--scenario", "all", "--trials", "3", "--seed", "7", "--out", str(out))
    assert code == EXIT_OK
    for label in ("unbiased", "vanilla", "none"):
        assert (out / f"trials_{label}.jsonl").exists()
        assert (out / f"transcripts_{label}.txt").exists()
        assert (out / f"latency_cdf_{label}.csv").exists()
    assert (out / "memory_unbiased.jsonl").exists()
    assert (out / "memory_vanilla.jsonl").exists()
    assert not (out / "memory_none.jsonl").exists()
    assert (out / "comparison.csv").exists()
    assert (out / "comparison.txt").exists()
    assert (out / "manifest.json").exists()
    stdout = capsys.readouterr().out
    assert "unbiased:" in stdout
    assert "orderings:" in stdout


def test_single_scenario_run_skips_the_comparison(tmp_path) -> None:
    out = tmp_path / "out"
    assert run_cli("run", "--scenario", "none", "--trials", "2", "--out", str(out)) == EXIT_OK
    assert (out / "trials_none.jsonl").exists()
    assert not (out / "comparison.csv").exists()


def test_manifest_records_relative_paths_and_no_timestamps(tmp_path) -> None:
    out = tmp_path / "out"
    run_cli("run", "--scenario", "vanilla", "--trials", "2", "--out", str(out))
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == {"tool", "version", "scenario", "network", "memory", "artifacts"}
    for name in manifest["artifacts"]["vanilla"].values():
        assert "/" not in name
        assert (out / name).exists()
    assert not re.search(r"20\d\d-\d\d-\d\d", (out / "manifest.json").read_text())


def test_model_switches_reach_the_manifest(tmp_path) -> None:
    out = tmp_path / "out"
    code = run_cli(
        "run", "--scenario", "none", "--trials", "1", "--out", str(out),
        "--queue-transfer", "as_printed", "--latency-form", "as_printed",
        "--decay-form", "as_printed", "--force-failure-slot",
    )
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["network"]["queue_transfer"] == "as_printed"
    assert manifest["network"]["latency_form"] == "as_printed"
    assert manifest["memory"]["decay_form"] == "as_printed"
    assert manifest["memory"]["force_failure_slot"] is True


def test_saved_memory_store_is_inspectable(tmp_path, capsys) -> None:
    out = tmp_path / "out"
    run_cli("run", "--scenario", "vanilla", "--trials", "3", "--seed", "7", "--out", str(out))
    capsys.readouterr()
    code = run_cli("memory-inspect", str(out / "memory_vanilla.jsonl"))
    assert code == EXIT_OK
    stdout = capsys.readouterr().out
    assert "(3 strategies)" in stdout
    assert "phi_base=" in stdout


# -- run: replay -----------------------------------------------------------------


def test_replay_reproduces_the_run_byte_for_byte(tmp_path) -> None:
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert run_cli(
        "run", "--scenario", "vanilla", "--trials", "3", "--seed", "11", "--out", str(first)
    ) == EXIT_OK
    assert run_cli("run", "--replay", str(first / "manifest.json"), "--out", str(second)) == EXIT_OK
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_replay_rejects_conflicting_flags(tmp_path, capsys) -> None:
    out = tmp_path / "out"
    run_cli("run", "--scenario", "none", "--trials", "1", "--out", str(out))
    capsys.readouterr()
    code = run_cli("run", "--replay", str(out / "manifest.json"), "--seed", "9", "--out", str(out))
    assert code == EXIT_USAGE
    assert "manifest" in capsys.readouterr().err


def test_replay_of_missing_manifest_is_a_file_error(tmp_path) -> None:
    code = run_cli("run", "--replay", str(tmp_path / "gone.json"), "--out", str(tmp_path / "o"))
    assert code == EXIT_IO


# -- memory-inspect --------------------------------------------------------------


def test_inspect_missing_store_is_a_file_error(tmp_path, capsys) -> None:
    code = run_cli("memory-inspect", str(tmp_path / "gone.jsonl"))
    assert code == EXIT_IO
    assert "cannot read store" in capsys.readouterr().err


def test_inspect_empty_store_exits_cleanly(tmp_path, capsys) -> None:
    store = tmp_path / "empty.jsonl"
    store.write_text("")
    assert run_cli("memory-inspect", str(store)) == EXIT_OK
    assert "store is empty" in capsys.readouterr().out


def test_inspect_garbage_store_is_a_usage_error(tmp_path) -> None:
    store = tmp_path / "garbage.jsonl"
    store.write_text("not json\n")
    assert run_cli("memory-inspect", str(store)) == EXIT_USAGE


def test_inspect_rejects_malformed_query_terms(tmp_path, capsys) -> None:
    store = tmp_path / "store.jsonl"
    write_store(store, [reference_strategy()])
    assert run_cli("memory-inspect", str(store), "--query", "traffic") == EXIT_USAGE
    assert run_cli("memory-inspect", str(store), "--query", "colour=red") == EXIT_USAGE


def test_inspect_components_recompute_by_hand(tmp_path, capsys) -> None:
    # One strategy whose keywords exactly cover a high-traffic query,
    # scored one trial later: semantic 1.0, decay exp(-1/5), no
    # inflection, no diversity penalty on the first pick.
    context = StrategyContext("high", 7.0e7, 0.010, 2, 4)
    action = StrategyAction(30.0, 45.0)
    outcome = StrategyOutcome(0.006, False, False, 15.0, 25.0)
    strategy = DistilledStrategy(
        context=context,
        action=action,
        outcome=outcome,
        description="Success: Latency met. Energy savings: 25.00%",
        keywords=frozenset({"high_traffic", "latency", "sla"}),
    )
    store = tmp_path / "store.jsonl"
    write_store(store, [strategy])
    code = run_cli("memory-inspect", str(store), "--query", "traffic=high", "trial=5")
    assert code == EXIT_OK
    stdout = capsys.readouterr().out
    expected_base = 1.0 * 1.0 + 0.5 * math.exp(-1.0 / 5.0)
    assert f"phi_base={expected_base:.6f}" in stdout
    assert "semantic=1.000000" in stdout
    assert f"decay={math.exp(-1.0 / 5.0):.6f}" in stdout
    assert "inflection=0.000000" in stdout
    assert f"phi_final={expected_base:.6f}" in stdout


def test_inspect_components_sum_to_phi_base_for_every_record(tmp_path, capsys) -> None:
    strategies = [reference_strategy()]
    ctx2 = StrategyContext("medium", 5.0e7, 0.010, 1, 18)
    act2 = StrategyAction(20.0, 40.0)
    out2 = StrategyOutcome(0.011, True, False, 10.0, 50.0)
    strategies.append(
        DistilledStrategy(
            context=ctx2,
            action=act2,
            outcome=out2,
            description="Failure: SLA violated.",
            keywords=strategy_keywords(ctx2, act2, out2),
        )
    )
    store = tmp_path / "store.jsonl"
    write_store(store, strategies)
    assert run_cli("memory-inspect", str(store), "--query", "traffic=medium") == EXIT_OK
    stdout = capsys.readouterr().out
    blocks = re.findall(
        r"alpha\*semantic=([\d.]+) beta\*decay=([\d.]+) "
        r"delta\*inflection=([\d.]+) phi_base=([\d.]+)",
        stdout,
    )
    assert len(blocks) == 2
    for sem, dec, infl, base in blocks:
        assert float(sem) + float(dec) + float(infl) == pytest.approx(
            float(base), abs=2e-6
        )


def test_inspect_finds_the_reference_strategy_under_a_medium_query(
    tmp_path, capsys
) -> None:
    store = tmp_path / "store.jsonl"
    write_store(store, [reference_strategy()])
    assert run_cli("memory-inspect", str(store), "--query", "traffic=medium") == EXIT_OK
    stdout = capsys.readouterr().out
    assert "bandwidth_mhz=26.67" in stdout
    assert "Energy savings: 33.33%" in stdout
    assert "outcome=success" in stdout


def test_inspect_default_query_scores_relative_to_newest_trial(tmp_path, capsys) -> None:
    store = tmp_path / "store.jsonl"
    write_store(store, [reference_strategy()])
    assert run_cli("memory-inspect", str(store)) == EXIT_OK
    assert "trial=16" in capsys.readouterr().out


def test_top_limits_the_listing(tmp_path, capsys) -> None:
    base = reference_strategy()
    strategies = []
    for trial in range(6):
        ctx = StrategyContext("medium", 5.0e7, 0.010, 3, trial)
        strategies.append(
            DistilledStrategy(
                context=ctx,
                action=base.action,
                outcome=base.outcome,
                description=base.description,
                keywords=strategy_keywords(ctx, base.action, base.outcome),
            )
        )
    store = tmp_path / "store.jsonl"
    write_store(store, strategies)
    assert run_cli("memory-inspect", str(store), "--top", "2") == EXIT_OK
    stdout = capsys.readouterr().out
    assert "[2]" in stdout
    assert "[3]" not in stdout


# -- misc ------------------------------------------------------------------------


def test_version_flag_prints_and_exits() -> None:
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_missing_subcommand_is_a_usage_error(capsys) -> None:
    assert main([]) == EXIT_USAGE
    capsys.readouterr()

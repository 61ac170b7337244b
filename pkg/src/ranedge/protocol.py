"""Agent-to-agent negotiation grammar and session engine.

Wire format, one message per line of dialogue:

    PROPOSE_ACTION: {"ran_bandwidth_mhz": 30.0, "edge_cpu_frequency_ghz": 45.0, "reason": "..."}
    ACCEPT_AGREEMENT: {"ran_bandwidth_mhz": 30.0, "edge_cpu_frequency_ghz": 45.0, "reason": "..."}
    NO_AGREEMENT_POSSIBLE
    NO_AGREEMENT_POSSIBLE: free text explaining the refusal

The parser is deliberately unforgiving: exactly those three intents, the
exact ": " separator, a flat JSON object with exactly the three keys in
any order, strictly positive finite numbers (bools rejected), a plain
string reason, and nothing after the closing brace.  Anything else is a
ParseError carrying the character position and a cause, and an
unparseable utterance ends the whole negotiation as a failure: agents
that cannot speak the protocol cannot coordinate resources.

The session engine alternates speakers (RAN opens), counts a round per
back-and-forth pair, and advances the live environment once per round
so both sides negotiate against a moving network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .environment import EnvState, MetricsSnapshot, NetworkEnvironment

MHZ = 1e6
GHZ = 1e9


class Intent(Enum):
    PROPOSE_ACTION = "PROPOSE_ACTION"
    ACCEPT_AGREEMENT = "ACCEPT_AGREEMENT"
    NO_AGREEMENT_POSSIBLE = "NO_AGREEMENT_POSSIBLE"


class Outcome(Enum):
    AGREEMENT = "AGREEMENT"
    NO_AGREEMENT = "NO_AGREEMENT"
    UNRESOLVED = "UNRESOLVED"
    PARSE_FAILURE = "PARSE_FAILURE"


WIRE_KEYS = ("ran_bandwidth_mhz", "edge_cpu_frequency_ghz", "reason")


class ParseError(ValueError):
    """A wire-format violation, located by character offset."""

    def __init__(self, position: int, cause: str) -> None:
        super().__init__(f"at position {position}: {cause}")
        self.position = position
        self.cause = cause


@dataclass(frozen=True)
class Configuration:
    """A joint resource configuration in negotiation units."""

    ran_bandwidth_mhz: float
    edge_cpu_frequency_ghz: float

    @property
    def bandwidth_hz(self) -> float:
        return self.ran_bandwidth_mhz * MHZ

    @property
    def cpu_hz(self) -> float:
        return self.edge_cpu_frequency_ghz * GHZ


@dataclass(frozen=True)
class A2AMessage:
    """One parsed negotiation move."""

    intent: Intent
    config: Configuration | None
    reason: str

    def __post_init__(self) -> None:
        needs_config = self.intent is not Intent.NO_AGREEMENT_POSSIBLE
        if needs_config and self.config is None:
            raise ValueError(f"{self.intent.value} requires a configuration")
        if not needs_config and self.config is not None:
            raise ValueError("a refusal carries no configuration")


def _reject_constant(token: str) -> float:
    raise ValueError(f"non-finite number {token}")


def parse(raw: str) -> A2AMessage:
    """Decode one wire message, or raise :class:`ParseError`."""
    if not isinstance(raw, str) or not raw:
        raise ParseError(0, "empty message")

    refusal = Intent.NO_AGREEMENT_POSSIBLE.value
    if raw == refusal:
        return A2AMessage(Intent.NO_AGREEMENT_POSSIBLE, None, "")
    if raw.startswith(refusal + ": "):
        reason = raw[len(refusal) + 2 :]
        if not reason.strip():
            raise ParseError(len(refusal) + 2, "blank refusal reason")
        return A2AMessage(Intent.NO_AGREEMENT_POSSIBLE, None, reason)

    for intent in (Intent.PROPOSE_ACTION, Intent.ACCEPT_AGREEMENT):
        prefix = intent.value + ": "
        if raw.startswith(prefix):
            payload_start = len(prefix)
            config, reason = _parse_payload(raw[payload_start:], payload_start)
            return A2AMessage(intent, config, reason)

    raise ParseError(0, "unknown intent")


def _parse_payload(payload: str, offset: int) -> tuple[Configuration, str]:
    try:
        obj, end = json.JSONDecoder(parse_constant=_reject_constant).raw_decode(payload)
    except ValueError as exc:
        pos = offset + getattr(exc, "pos", 0)
        raise ParseError(pos, f"malformed payload: {exc}") from exc
    if end != len(payload):
        raise ParseError(offset + end, "trailing data after payload")
    if not isinstance(obj, dict):
        raise ParseError(offset, "payload is not an object")

    missing = [k for k in WIRE_KEYS if k not in obj]
    if missing:
        raise ParseError(offset, f"missing field {missing[0]!r}")
    extra = [k for k in obj if k not in WIRE_KEYS]
    if extra:
        raise ParseError(offset, f"unexpected field {extra[0]!r}")

    numbers: dict[str, float] = {}
    for key in WIRE_KEYS[:2]:
        value = obj[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(offset, f"{key} must be a number, got {value!r}")
        if not value > 0:
            raise ParseError(offset, f"{key} must be strictly positive, got {value!r}")
        numbers[key] = float(value)

    reason = obj["reason"]
    if not isinstance(reason, str):
        raise ParseError(offset, f"reason must be plain text, got {type(reason).__name__}")

    return Configuration(numbers["ran_bandwidth_mhz"], numbers["edge_cpu_frequency_ghz"]), reason


def serialize(message: A2AMessage) -> str:
    """Encode a message in the exact wire format the parser accepts."""
    if message.intent is Intent.NO_AGREEMENT_POSSIBLE:
        if message.reason:
            return f"{message.intent.value}: {message.reason}"
        return message.intent.value
    assert message.config is not None
    payload = {
        "ran_bandwidth_mhz": message.config.ran_bandwidth_mhz,
        "edge_cpu_frequency_ghz": message.config.edge_cpu_frequency_ghz,
        "reason": message.reason,
    }
    return f"{message.intent.value}: {json.dumps(payload, ensure_ascii=False)}"


@dataclass(frozen=True)
class TurnContext:
    """Everything the session shows a speaker before its turn."""

    metrics: MetricsSnapshot
    env_state: EnvState
    opponent_last: A2AMessage | None
    own_last: A2AMessage | None
    round_index: int
    max_rounds: int


@dataclass
class NegotiationRecord:
    """Full account of one negotiation session."""

    rounds: list[tuple[str, A2AMessage]] = field(default_factory=list)
    outcome: Outcome = Outcome.UNRESOLVED
    agreed_config: Configuration | None = None
    consensus_round: int | None = None
    preamble: list[tuple[str, str]] = field(default_factory=list)
    failure_detail: str = ""


def round_of_message(k: int) -> int:
    """Round index of 1-based message k: the opener stands alone, then pairs."""
    if k < 1:
        raise ValueError("messages are numbered from 1")
    return k // 2 + 1


def run_negotiation(
    ran_agent,
    edge_agent,
    env: NetworkEnvironment,
    max_rounds: int = 8,
) -> NegotiationRecord:
    """Alternate turns until consensus, refusal, failure, or the cap.

    Consensus forms when an ACCEPT_AGREEMENT echoes the opponent's
    standing proposal exactly, or when both sides' latest proposals
    name the identical configuration.  On consensus the configuration
    is enforced into the live environment.  An explicit refusal ends
    the session without agreement, and a wire-format violation (or an
    ACCEPT that does not match any standing proposal) is an immediate
    impasse.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")

    record = NegotiationRecord()
    for agent in (ran_agent, edge_agent):
        hello = getattr(agent, "greeting", None)
        if callable(hello):
            record.preamble.append((agent.name, hello()))

    last_proposal: dict[str, Configuration | None] = {
        ran_agent.name: None,
        edge_agent.name: None,
    }
    last_message: dict[str, A2AMessage | None] = {
        ran_agent.name: None,
        edge_agent.name: None,
    }
    # One environment step per negotiation round, the first included:
    # agents negotiate against a network that moves while they talk.
    current_round = 0

    for k in range(1, 2 * max_rounds):
        r = round_of_message(k)
        if r > current_round:
            env.advance()
            current_round = r
        speaker, opponent = (ran_agent, edge_agent) if k % 2 == 1 else (edge_agent, ran_agent)
        ctx = TurnContext(
            metrics=env.metrics(),
            env_state=env.snapshot_state(),
            opponent_last=last_message[opponent.name],
            own_last=last_message[speaker.name],
            round_index=r,
            max_rounds=max_rounds,
        )
        raw = speaker.take_turn(ctx)
        try:
            message = parse(raw)
        except ParseError as exc:
            record.outcome = Outcome.PARSE_FAILURE
            record.failure_detail = f"{speaker.name}: {exc}"
            return record

        record.rounds.append((speaker.name, message))
        last_message[speaker.name] = message

        if message.intent is Intent.NO_AGREEMENT_POSSIBLE:
            record.outcome = Outcome.NO_AGREEMENT
            record.failure_detail = f"{speaker.name} refused: {message.reason}"
            return record

        if message.intent is Intent.ACCEPT_AGREEMENT:
            standing = last_proposal[opponent.name]
            if standing is None or message.config != standing:
                record.outcome = Outcome.PARSE_FAILURE
                record.failure_detail = (
                    f"{speaker.name} accepted a configuration nobody proposed"
                )
                return record
            _enforce(env, standing, record, r)
            return record

        last_proposal[speaker.name] = message.config
        mine, theirs = last_proposal[speaker.name], last_proposal[opponent.name]
        if mine is not None and mine == theirs:
            _enforce(env, mine, record, r)
            return record

    record.outcome = Outcome.UNRESOLVED
    return record


def _enforce(
    env: NetworkEnvironment,
    config: Configuration,
    record: NegotiationRecord,
    consensus_round: int,
) -> None:
    env.apply_allocation(config.bandwidth_hz, config.cpu_hz)
    record.outcome = Outcome.AGREEMENT
    record.agreed_config = config
    record.consensus_round = consensus_round

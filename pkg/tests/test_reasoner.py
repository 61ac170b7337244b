"""Reasoner tests: env config, HTTP transport faults, retry-to-refusal."""

from __future__ import annotations

import numpy as np
import pytest
import requests

from ranedge.environment import NetworkEnvironment
from ranedge.netmath import NetParams
from ranedge.protocol import Intent, Outcome, parse, run_negotiation
from ranedge.reasoner import (
    API_KEY_ENV,
    ENDPOINT_ENV,
    MODEL_ENV,
    TIMEOUT_ENV,
    ExternalReasonerAgent,
    HttpChatTransport,
    ReasonerConfig,
    ReasonerError,
    ReasonerFormatError,
    ReasonerTransportError,
    load_prompt,
    render_user_prompt,
    system_prompt_for,
)

PARAMS = NetParams(traffic_sigma=0.0, eta_min=7.0, eta_max=7.0)


def make_turn(seed: int = 0):
    env = NetworkEnvironment(PARAMS, np.random.default_rng(seed))
    env.advance()
    from ranedge.protocol import TurnContext

    return TurnContext(
        metrics=env.metrics(),
        env_state=env.snapshot_state(),
        opponent_last=None,
        own_last=None,
        round_index=1,
        max_rounds=8,
    )


class ScriptedTransport:
    """Returns canned completions in order, never touching a network."""

    def __init__(self, replies: list[str]) -> None:
        self.replies = list(replies)
        self.calls = 0

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        self.calls += 1
        return self.replies.pop(0)


class FailingTransport:
    def __init__(self, failures: int, then: str | None = None) -> None:
        self.failures = failures
        self.then = then
        self.calls = 0

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        self.calls += 1
        if self.calls <= self.failures:
            raise ReasonerTransportError("connection reset")
        assert self.then is not None
        return self.then


# -- configuration -----------------------------------------------------------


def test_config_from_env_reads_all_variables() -> None:
    env = {
        ENDPOINT_ENV: "http://localhost:9000/v1/chat/completions",
        MODEL_ENV: "local-model",
        API_KEY_ENV: "secret",
        TIMEOUT_ENV: "12.5",
    }
    config = ReasonerConfig.from_env(env)
    assert config.endpoint.endswith("/chat/completions")
    assert config.model == "local-model"
    assert config.api_key == "secret"
    assert config.timeout_s == 12.5


def test_config_missing_endpoint_is_an_error() -> None:
    with pytest.raises(ReasonerError, match=ENDPOINT_ENV):
        ReasonerConfig.from_env({MODEL_ENV: "m"})


def test_config_rejects_nonpositive_timeout() -> None:
    with pytest.raises(ValueError):
        ReasonerConfig(endpoint="http://x", model="m", timeout_s=0.0)


# -- prompt assets -----------------------------------------------------------


def test_shipped_prompts_compose_per_role() -> None:
    ran = system_prompt_for("RAN")
    edge = system_prompt_for("EDGE")
    assert "RAN Energy Saving Agent" in ran
    assert "Edge Latency Agent" in edge
    for text in (ran, edge):
        assert "PROPOSE_ACTION" in text
        assert "NO_AGREEMENT_POSSIBLE" in text
        assert "Digital Twin" in text


def test_unknown_role_prompt_is_an_error() -> None:
    with pytest.raises(ValueError):
        system_prompt_for("CORE")


def test_prompt_files_are_plain_text() -> None:
    for name in (
        "ran_goal.txt",
        "ran_base.txt",
        "ran_tools.txt",
        "edge_goal.txt",
        "edge_base.txt",
        "edge_tools.txt",
    ):
        text = load_prompt(name)
        assert text.strip()


def test_user_prompt_carries_metrics_and_round() -> None:
    turn = make_turn()
    text = render_user_prompt(turn, [])
    assert "latency_ms" in text
    assert "Negotiation round 1 of 8." in text
    assert "has not proposed yet" in text


# -- HTTP transport ----------------------------------------------------------


class FakeResponse:
    def __init__(self, status_code: int, payload=None, invalid=False) -> None:
        self.status_code = status_code
        self._payload = payload
        self._invalid = invalid

    def json(self):
        if self._invalid:
            raise ValueError("not json")
        return self._payload


class FakeSession:
    def __init__(self, response=None, raises=None) -> None:
        self.response = response
        self.raises = raises
        self.last_request = None

    def post(self, url, json=None, headers=None, timeout=None):
        self.last_request = {
            "url": url,
            "json": json,
            "headers": headers,
            "timeout": timeout,
        }
        if self.raises is not None:
            raise self.raises
        return self.response


def http_transport(session: FakeSession) -> HttpChatTransport:
    config = ReasonerConfig(
        endpoint="http://unit.test/v1/chat/completions",
        model="stub-model",
        api_key="k",
        timeout_s=3.0,
    )
    return HttpChatTransport(config, session=session)


def test_http_transport_extracts_first_choice() -> None:
    session = FakeSession(
        response=FakeResponse(
            200,
            {"choices": [{"message": {"content": "NO_AGREEMENT_POSSIBLE"}}]},
        )
    )
    transport = http_transport(session)
    assert transport.complete("sys", "user") == "NO_AGREEMENT_POSSIBLE"
    body = session.last_request["json"]
    assert body["model"] == "stub-model"
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert session.last_request["headers"]["Authorization"] == "Bearer k"
    assert session.last_request["timeout"] == 3.0


def test_http_timeout_is_a_transport_error() -> None:
    transport = http_transport(FakeSession(raises=requests.Timeout("slow")))
    with pytest.raises(ReasonerTransportError, match="timed out"):
        transport.complete("sys", "user")


def test_http_connection_fault_is_a_transport_error() -> None:
    transport = http_transport(
        FakeSession(raises=requests.ConnectionError("refused"))
    )
    with pytest.raises(ReasonerTransportError):
        transport.complete("sys", "user")


def test_http_error_status_is_a_transport_error() -> None:
    transport = http_transport(FakeSession(response=FakeResponse(503)))
    with pytest.raises(ReasonerTransportError, match="503"):
        transport.complete("sys", "user")


def test_malformed_reply_is_a_format_error() -> None:
    for response in (
        FakeResponse(200, invalid=True),
        FakeResponse(200, {"choices": []}),
        FakeResponse(200, {"choices": [{"message": {}}]}),
        FakeResponse(200, {"choices": [{"message": {"content": 7}}]}),
    ):
        with pytest.raises(ReasonerFormatError):
            http_transport(FakeSession(response=response)).complete("s", "u")


# -- agent behaviour ----------------------------------------------------------


def test_agent_passes_model_reply_through_verbatim() -> None:
    reply = (
        'PROPOSE_ACTION: {"ran_bandwidth_mhz": 25.0, '
        '"edge_cpu_frequency_ghz": 35.0, "reason": "Balanced offer."}'
    )
    agent = ExternalReasonerAgent(
        "RAN", ScriptedTransport([f"  {reply}\n"]), PARAMS
    )
    text = agent.take_turn(make_turn())
    assert text == reply
    parsed = parse(text)
    assert parsed.intent is Intent.PROPOSE_ACTION


def test_agent_retries_transport_faults_then_succeeds() -> None:
    transport = FailingTransport(failures=2, then="NO_AGREEMENT_POSSIBLE")
    agent = ExternalReasonerAgent("RAN", transport, PARAMS, max_attempts=3)
    assert agent.take_turn(make_turn()) == "NO_AGREEMENT_POSSIBLE"
    assert transport.calls == 3


def test_agent_refuses_after_exhausting_retries() -> None:
    transport = FailingTransport(failures=99)
    agent = ExternalReasonerAgent("EDGE", transport, PARAMS, max_attempts=3)
    text = agent.take_turn(make_turn())
    assert transport.calls == 3
    message = parse(text)
    assert message.intent is Intent.NO_AGREEMENT_POSSIBLE
    assert "External reasoner unavailable" in message.reason


def test_gibberish_reply_surfaces_as_parse_failure_not_transport() -> None:
    # A healthy transport carrying a malformed message must reach the
    # session parser, not the retry loop.
    env = NetworkEnvironment(PARAMS, np.random.default_rng(0))
    ran = ExternalReasonerAgent(
        "RAN", ScriptedTransport(["here is my offer!"]), PARAMS
    )
    edge = ExternalReasonerAgent("EDGE", ScriptedTransport([]), PARAMS)
    record = run_negotiation(ran, edge, env)
    assert record.outcome is Outcome.PARSE_FAILURE


def test_scripted_external_session_reaches_agreement() -> None:
    offer = (
        'PROPOSE_ACTION: {"ran_bandwidth_mhz": 22.0, '
        '"edge_cpu_frequency_ghz": 38.0, "reason": "Energy-lean offer."}'
    )
    accept = (
        'ACCEPT_AGREEMENT: {"ran_bandwidth_mhz": 22.0, '
        '"edge_cpu_frequency_ghz": 38.0, "reason": "Latency verified."}'
    )
    env = NetworkEnvironment(PARAMS, np.random.default_rng(0))
    ran = ExternalReasonerAgent("RAN", ScriptedTransport([offer]), PARAMS)
    edge = ExternalReasonerAgent("EDGE", ScriptedTransport([accept]), PARAMS)
    record = run_negotiation(ran, edge, env)
    assert record.outcome is Outcome.AGREEMENT
    assert record.consensus_round == 2
    assert record.agreed_config is not None
    assert record.agreed_config.ran_bandwidth_mhz == 22.0

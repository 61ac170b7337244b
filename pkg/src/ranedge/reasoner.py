"""Chat-completion reasoner: HTTP transport, shipped prompts, retry plumbing.

The remote model speaks the same wire grammar as the rule-based agents,
so its raw reply goes straight to the session parser.  Transport faults
(timeouts, connection errors, HTTP failures) are retried and finally
degrade to an explicit refusal; they are never confused with grammar
violations, which stay the parser's business.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Protocol

import requests

from .memory import CollectiveMemory, ScoredCandidate, StrategyContext, classify_traffic
from .netmath import NetParams
from .protocol import A2AMessage, Intent, TurnContext, serialize

ENDPOINT_ENV = "RANEDGE_REASONER_ENDPOINT"
MODEL_ENV = "RANEDGE_REASONER_MODEL"
API_KEY_ENV = "RANEDGE_REASONER_API_KEY"
TIMEOUT_ENV = "RANEDGE_REASONER_TIMEOUT_S"

ROLE_PROMPTS = {
    "RAN": ("ran_goal.txt", "ran_base.txt", "ran_tools.txt"),
    "EDGE": ("edge_goal.txt", "edge_base.txt", "edge_tools.txt"),
}


class ReasonerError(RuntimeError):
    """Any failure of the external reasoning path."""


class ReasonerTransportError(ReasonerError):
    """The request never produced a usable completion."""


class ReasonerFormatError(ReasonerError):
    """The HTTP reply arrived but lacked the chat-completion shape."""


@dataclass(frozen=True)
class ReasonerConfig:
    endpoint: str
    model: str
    api_key: str | None = None
    timeout_s: float = 30.0
    max_attempts: int = 3

    def __post_init__(self) -> None:
        if not self.endpoint:
            raise ValueError("endpoint must be non-empty")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")

    @classmethod
    def from_env(cls, environ: Mapping[str, str] = os.environ) -> "ReasonerConfig":
        try:
            endpoint = environ[ENDPOINT_ENV]
            model = environ[MODEL_ENV]
        except KeyError as exc:
            raise ReasonerError(f"missing environment variable {exc.args[0]}") from exc
        return cls(
            endpoint=endpoint,
            model=model,
            api_key=environ.get(API_KEY_ENV),
            timeout_s=float(environ.get(TIMEOUT_ENV, "30")),
        )


class ChatTransport(Protocol):
    def complete(self, system_prompt: str, user_prompt: str) -> str: ...


class HttpChatTransport:
    """POSTs OpenAI-style chat payloads and returns the first choice."""

    def __init__(
        self,
        config: ReasonerConfig,
        session: requests.Session | None = None,
    ) -> None:
        self.config = config
        self._session = session or requests.Session()

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        body = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "temperature": 0.0,
        }
        try:
            response = self._session.post(
                self.config.endpoint,
                json=body,
                headers=headers,
                timeout=self.config.timeout_s,
            )
        except requests.Timeout as exc:
            raise ReasonerTransportError(
                f"chat completion timed out after {self.config.timeout_s}s"
            ) from exc
        except requests.RequestException as exc:
            raise ReasonerTransportError(
                f"chat completion transport failed: {exc}"
            ) from exc
        if response.status_code >= 400:
            raise ReasonerTransportError(
                f"chat completion returned HTTP {response.status_code}"
            )
        try:
            data = response.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ReasonerFormatError(
                f"chat completion reply lacked choices[0].message.content: {exc}"
            ) from exc
        if not isinstance(content, str):
            raise ReasonerFormatError("completion content was not text")
        return content


def load_prompt(name: str) -> str:
    return (
        resources.files("ranedge.prompts").joinpath(name).read_text(encoding="utf-8")
    )


def system_prompt_for(role: str) -> str:
    """Compose the shipped prompt pieces for one role."""
    try:
        goal_file, base_file, tools_file = ROLE_PROMPTS[role]
    except KeyError:
        raise ValueError(f"role must be one of {tuple(ROLE_PROMPTS)}") from None
    goal = load_prompt(goal_file).strip()
    base = load_prompt(base_file).strip()
    tools = load_prompt(tools_file).strip()
    return f"{base}\n\n**Negotiation Goal:** {goal}\n\n{tools}"


def render_user_prompt(
    turn: TurnContext,
    retrieved: list[ScoredCandidate],
) -> str:
    """Deterministic turn briefing: metrics, dialogue tail, retrieved advice."""
    parts = [
        "Current network metrics:",
        json.dumps(turn.metrics.to_listing_dict(), indent=2, sort_keys=True),
        f"Negotiation round {turn.round_index} of {turn.max_rounds}.",
    ]
    if turn.opponent_last is not None:
        parts.append("Opponent's last message: " + serialize(turn.opponent_last))
    else:
        parts.append("The other agent has not proposed yet.")
    if turn.own_last is not None:
        parts.append("Your last message: " + serialize(turn.own_last))
    if retrieved:
        lines = [
            f"- trial {c.strategy.context.trial_id}: {c.strategy.description} "
            f"(ran_bw_mhz={c.strategy.action.ran_bw_mhz}, "
            f"edge_cpu_ghz={c.strategy.action.edge_cpu_ghz})"
            for c in retrieved
        ]
        parts.append("Retrieved strategies:\n" + "\n".join(lines))
    parts.append("Reply with exactly one message in the strict response format.")
    return "\n\n".join(parts)


class ExternalReasonerAgent:
    """Delegates each turn to a remote model behind a pluggable transport."""

    def __init__(
        self,
        role: str,
        transport: ChatTransport,
        params: NetParams,
        memory: CollectiveMemory | None = None,
        max_attempts: int = 3,
        name: str | None = None,
    ) -> None:
        if role not in ROLE_PROMPTS:
            raise ValueError(f"role must be one of {tuple(ROLE_PROMPTS)}")
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        self.role = role
        self.transport = transport
        self.params = params
        self.memory = memory
        self.max_attempts = max_attempts
        self.name = name or f"{role}_AGENT"
        self.system_prompt = system_prompt_for(role)
        self.trial_id = 0
        self.retrieval_count = 0

    def begin_trial(self, trial_id: int) -> None:
        if trial_id < 0:
            raise ValueError("trial_id must be non-negative")
        self.trial_id = trial_id

    def greeting(self) -> str:
        if self.role == "RAN":
            return "Hello! RAN agent here, negotiating for energy savings."
        return "Hello! Edge agent here, negotiating for low latency."

    def take_turn(self, turn: TurnContext) -> str:
        retrieved = self._retrieve(turn)
        user_prompt = render_user_prompt(turn, retrieved)
        last_fault = "no attempt made"
        for _ in range(self.max_attempts):
            try:
                return self.transport.complete(self.system_prompt, user_prompt).strip()
            except (ReasonerTransportError, ReasonerFormatError) as exc:
                last_fault = str(exc)
        refusal = A2AMessage(
            Intent.NO_AGREEMENT_POSSIBLE,
            None,
            f"External reasoner unavailable: {last_fault}",
        )
        return serialize(refusal)

    def _retrieve(self, turn: TurnContext) -> list[ScoredCandidate]:
        if self.memory is None or len(self.memory) == 0:
            return []
        self.retrieval_count += 1
        query = StrategyContext(
            traffic_level=classify_traffic(
                turn.metrics.avg_arrival_rate_bps, self.params
            ),
            arrival_rate_bps=turn.metrics.avg_arrival_rate_bps,
            sla_latency_s=self.params.sla_latency,
            time_step=turn.metrics.time_step,
            trial_id=self.trial_id,
        )
        return self.memory.retrieve(query)

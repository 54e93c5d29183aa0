"""Planning backends: any chat-completions-compatible HTTP endpoint, plus
offline mocks used by tests and the evaluation harness.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Protocol

import requests

from .board import BoardConfig
from .classify import AmbiguousDescriptorError, associate, parse_classification
from .geometry import BasePoint
from .localize import Candidate, Rect
from .planner import (AssemblyPlan, BackendTransportError, InstructionRequest,
                      _assign_subtasks)

logger = logging.getLogger(__name__)


class PlannerBackend(Protocol):
    model_id: str

    def complete(self, system: str, user: str) -> str:
        """Return the raw assistant text for one (system, user) exchange."""
        ...


@dataclass
class ChatCompletionsBackend:
    """POSTs to {base_url}/chat/completions with a bearer token.  Request and
    response bodies are logged with the key redacted."""

    base_url: str
    model_id: str
    api_key: str
    timeout_s: float = 60.0

    def complete(self, system: str, user: str) -> str:
        body = {
            "model": self.model_id,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        logger.info("backend request model=%s body=%s", self.model_id,
                    json.dumps(body)[:2000])
        try:
            resp = requests.post(
                f"{self.base_url.rstrip('/')}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout_s)
            resp.raise_for_status()
            payload = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise BackendTransportError(f"backend call failed: {exc}") from exc
        logger.info("backend response=%s", json.dumps(payload)[:2000])
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendTransportError(
                f"malformed backend response: {payload!r}") from exc


@dataclass
class ScriptedBackend:
    """Replays a canned list of responses; used to script failure modes."""

    responses: list[str]
    model_id: str = "scripted"
    calls: int = 0

    def complete(self, system: str, user: str) -> str:
        if self.calls >= len(self.responses):
            raise BackendTransportError("scripted backend exhausted")
        out = self.responses[self.calls]
        self.calls += 1
        return out


@dataclass
class GarbageBackend:
    """Always answers with prose, never the plan schema."""

    model_id: str = "garbage"

    def complete(self, system: str, user: str) -> str:
        return "Sure! Here is the assembly plan you asked for: step one..."


_WORKSPACE_RE = re.compile(r"^WORKSPACE: (.*)$", re.MULTILINE)
_INSTRUCTION_RE = re.compile(r"^INSTRUCTION: (.*)$", re.MULTILINE)
_CLASSIFICATION_RE = re.compile(r"^CLASSIFICATION:\n(.*)\Z", re.DOTALL | re.MULTILINE)


@dataclass
class OracleMockBackend:
    """Offline stand-in for a perfectly fine-tuned model: parses the user
    payload and answers with the deterministic planner's plan.  Needs the
    board to resolve slot acceptance, nothing else."""

    board: BoardConfig
    model_id: str = "oracle-mock"

    def complete(self, system: str, user: str) -> str:
        ws_m = _WORKSPACE_RE.search(user)
        instr_m = _INSTRUCTION_RE.search(user)
        cls_m = _CLASSIFICATION_RE.search(user)
        if not (ws_m and instr_m and cls_m):
            raise BackendTransportError("oracle mock: unrecognized prompt layout")
        ws = json.loads(ws_m.group(1))
        cands = [Candidate.from_dict(c) for c in ws["candidates"]]
        base_of = {c["id"]: BasePoint.from_dict(c["base"])
                   for c in ws["candidates"]}
        region = Rect.from_dict(ws["roi"])

        req = InstructionRequest(instruction=instr_m.group(1))
        stmts = parse_classification(cls_m.group(1))
        try:
            assoc = associate(stmts, cands, region)
        except AmbiguousDescriptorError as exc:
            return f"cannot disambiguate: {exc}"
        labeled = [(stmt.label, cid) for stmt, cid in assoc.bindings]
        subtasks = _assign_subtasks(req.mentions(), labeled, base_of, self.board)
        return AssemblyPlan(subtasks=subtasks).to_json()


def make_backend(kind: str, board: BoardConfig | None = None,
                 base_url: str = "", model: str = "", api_key: str = "",
                 timeout_s: float = 60.0) -> PlannerBackend:
    if kind == "oracle":
        return OracleMockBackend(board=board or BoardConfig.default())
    if kind == "garbage":
        return GarbageBackend()
    if kind == "http":
        if not api_key:
            raise ValueError("http backend requires an API key "
                             "(COVILLM_API_KEY)")
        return ChatCompletionsBackend(base_url=base_url, model_id=model,
                                      api_key=api_key, timeout_s=timeout_s)
    raise ValueError(f"unknown backend kind {kind!r}")

"""Assembly planning: a deterministic reference planner, the LLM-backed
planner sharing the same strict plan wire schema, and fine-tune dataset
emission.

The wire schema (schemas/plan.schema.json) is enforced in both directions:
plans serialize to it and responses are rejected on any deviation rather
than repaired.
"""

from __future__ import annotations

import importlib.resources
import json
import time
from dataclasses import dataclass

import jsonschema

from .board import BoardConfig, BoardError
from .classify import (AssociationResult, ClassificationParseError,
                       ComponentLabel)
from .geometry import BasePoint, GeometryContext
from .localize import Candidate, Rect

PICK_GROUNDING_TOL_MM = 1.0
DEFAULT_RETRIES = 2

with importlib.resources.files("covillm.schemas").joinpath("plan.schema.json").open() as _fh:
    PLAN_SCHEMA = json.load(_fh)
_PLAN_VALIDATOR = jsonschema.Draft202012Validator(PLAN_SCHEMA)


class PlannerError(RuntimeError):
    """Deterministic planning failure (unbound mention, full board, ...)."""


class PlanParseError(ValueError):
    """LLM response does not match the plan wire schema."""


class PlanValidationError(ValueError):
    """Schema-valid response that violates plan semantics."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class InstructionRequest:
    instruction: str
    mode: str = "deterministic"  # "deterministic" | "llm"

    def __post_init__(self):
        if self.mode not in ("deterministic", "llm"):
            raise ValueError(f"unknown planning mode {self.mode!r}")

    def mentions(self) -> list[ComponentLabel]:
        """The comma-separated component mention list, in assembly order."""
        parts = [p.strip() for p in self.instruction.split(",") if p.strip()]
        if not parts:
            raise PlannerError("instruction names no components")
        return [ComponentLabel.parse(p) for p in parts]


@dataclass(frozen=True)
class AssemblySubtask:
    index: int                  # 1-based, contiguous within a plan
    category: ComponentLabel
    pick: BasePoint
    slot_id: str
    place: BasePoint

    def to_dict(self) -> dict:
        return {"index": self.index, "category": self.category.text(),
                "pick": self.pick.to_dict(), "slot": self.slot_id}


@dataclass
class AssemblyPlan:
    subtasks: list[AssemblySubtask]
    provenance: str = "deterministic"   # "deterministic" | "llm:<model id>"
    latency_ms: float | None = None

    @property
    def n(self) -> int:
        return len(self.subtasks)

    def category_sequence(self) -> list[str]:
        return [s.category.text() for s in self.subtasks]

    def to_dict(self) -> dict:
        return {"subtasks": [s.to_dict() for s in self.subtasks]}

    def to_json(self) -> str:
        """Canonical wire form; byte-stable for fixed content."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _assign_subtasks(mentions: list[ComponentLabel],
                     bindings: list[tuple[ComponentLabel, int]],
                     base_of: dict[int, BasePoint],
                     board: BoardConfig) -> list[AssemblySubtask]:
    """Shared sequencing core: match each mention to an unconsumed binding of
    the same label, then to the first free slot accepting it."""
    pool = list(bindings)
    taken_slots: set[str] = set()
    subtasks = []
    for k, label in enumerate(mentions, start=1):
        hit = next((b for b in pool if b[0] == label), None)
        if hit is None:
            raise PlannerError(f"unidentified component: {label.text()!r} "
                               "has no classified candidate")
        pool.remove(hit)
        slot = board.first_free_for(label, taken=taken_slots)
        if slot is None:
            raise PlannerError(f"board full for category {label.text()!r}")
        taken_slots.add(slot.id)
        subtasks.append(AssemblySubtask(index=k, category=label,
                                        pick=base_of[hit[1]],
                                        slot_id=slot.id, place=slot.place))
    return subtasks


def plan_deterministic(req: InstructionRequest, assoc: AssociationResult,
                       cands: list[Candidate], geo: GeometryContext,
                       board: BoardConfig) -> AssemblyPlan:
    """Reference planner: mention order is the assembly order; picks come
    from the bound candidates' base-frame points."""
    by_id = {c.id: c for c in cands}
    base_of = {cid: geo.candidate_base_point(by_id[cid])
               for _, cid in assoc.bindings}
    labeled = [(stmt.label, cid) for stmt, cid in assoc.bindings]
    subtasks = _assign_subtasks(req.mentions(), labeled, base_of, board)
    return AssemblyPlan(subtasks=subtasks, provenance="deterministic")


SYSTEM_PROMPT = """\
You are the task planner of a collaborative assembly workcell.
Rules:
1. Output ONLY a JSON document matching the plan schema below. No prose,
   no markdown fences, no explanations.
2. Never invent coordinates: every pick must copy the base-frame location
   of exactly one detected candidate, and each candidate may be used once.
3. Associate the operator's classification statements with candidates by
   spatial reasoning over the listed pixel centroids and the workspace ROI.
4. Order subtasks exactly as the components appear in the instruction.
5. Choose each slot from the offered free-slot list; a slot only accepts
   its stated component label and may be used once.
Plan schema:
{"subtasks":[{"index":1,"category":"<size> <category>","pick":{"x_mm":0,"y_mm":0,"z_mm":0},"slot":"<slot id>"}]}
"""

NO_OBJECTS_SENTINEL = "NO OBJECTS DETECTED"


def build_prompt(req: InstructionRequest, cands: list[Candidate],
                 stmts_text: str, board: BoardConfig, geo: GeometryContext,
                 region: Rect) -> tuple[str, str]:
    """Build the (system, user) message pair.  Byte-stable for fixed inputs;
    the user payload embeds a machine-readable workspace block so mock
    backends (and fine-tuned models) can ground every coordinate."""
    if cands:
        cand_entries = []
        for c in cands:
            entry = c.to_dict()
            entry["base"] = geo.candidate_base_point(c).to_dict()
            cand_entries.append(entry)
        cand_block = json.dumps(
            {"candidates": cand_entries, "roi": region.to_dict(),
             "free_slots": [{"id": s.id, "accepts": s.accepts.text()}
                            for s in board.free_slots()]},
            sort_keys=True, separators=(",", ":"))
    else:
        cand_block = json.dumps(
            {"candidates": [], "note": NO_OBJECTS_SENTINEL,
             "roi": region.to_dict(),
             "free_slots": [{"id": s.id, "accepts": s.accepts.text()}
                            for s in board.free_slots()]},
            sort_keys=True, separators=(",", ":"))
    user = (f"INSTRUCTION: {req.instruction}\n\n"
            f"WORKSPACE: {cand_block}\n\n"
            f"CLASSIFICATION:\n{stmts_text.rstrip()}\n")
    return SYSTEM_PROMPT, user


def parse_plan_response(text: str, board: BoardConfig,
                        provenance: str = "llm") -> AssemblyPlan:
    """Strictly parse a plan response.  The text must be a single JSON
    document in the documented schema; any preamble, trailing prose, or
    schema deviation is an error and is never repaired silently."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        fragment = text.strip()[:120]
        raise PlanParseError(f"response is not valid JSON near {fragment!r}: {exc}") from None
    errors = sorted(_PLAN_VALIDATOR.iter_errors(doc), key=str)
    if errors:
        raise PlanParseError(f"schema violation: {errors[0].message}")

    subtasks = []
    seen_slots: set[str] = set()
    for i, st in enumerate(doc["subtasks"], start=1):
        if st["index"] != i:
            raise PlanValidationError(
                [f"non-contiguous index: expected {i}, got {st['index']}"])
        try:
            label = ComponentLabel.parse(st["category"])
        except ClassificationParseError as exc:
            raise PlanValidationError([str(exc)]) from None
        try:
            slot = board.slot(st["slot"])
        except BoardError as exc:
            raise PlanValidationError([str(exc)]) from None
        if st["slot"] in seen_slots:
            raise PlanValidationError([f"slot {st['slot']!r} used twice"])
        seen_slots.add(st["slot"])
        subtasks.append(AssemblySubtask(
            index=i, category=label,
            pick=BasePoint.from_dict(st["pick"]),
            slot_id=slot.id, place=slot.place))
    return AssemblyPlan(subtasks=subtasks, provenance=provenance)


def validate_plan(plan: AssemblyPlan, cand_points: dict[int, BasePoint],
                  board: BoardConfig) -> list[str]:
    """Check every plan invariant; returns ALL violations, empty list = ok."""
    violations = []
    used_slots: set[str] = set()
    used_cands: set[int] = set()
    for i, st in enumerate(plan.subtasks, start=1):
        if st.index != i:
            violations.append(f"non-contiguous index at position {i}: {st.index}")
        try:
            slot = board.slot(st.slot_id)
        except BoardError:
            violations.append(f"unknown slot {st.slot_id!r}")
            slot = None
        if st.slot_id in used_slots:
            violations.append(f"slot {st.slot_id!r} used twice")
        used_slots.add(st.slot_id)
        if slot is not None:
            if slot.occupied:
                violations.append(f"slot {st.slot_id!r} already occupied")
            if slot.accepts != st.category:
                violations.append(
                    f"slot {st.slot_id!r} does not accept {st.category.text()!r}")
        grounded = [cid for cid, p in cand_points.items()
                    if p.distance(st.pick) <= PICK_GROUNDING_TOL_MM]
        if not grounded:
            violations.append(f"pick not grounded: subtask {st.index} matches "
                              "no candidate location")
        else:
            cid = grounded[0]
            if cid in used_cands:
                violations.append(f"candidate {cid} picked twice")
            used_cands.add(cid)
    return violations


class BackendTransportError(RuntimeError):
    """Transport-level failure talking to the planning backend."""


class PlanningFailed(RuntimeError):
    """All attempts exhausted; carries the last parse/validation failure."""

    def __init__(self, attempts: int, last_error: Exception):
        self.attempts = attempts
        self.last_error = last_error
        super().__init__(f"planning failed after {attempts} attempts: {last_error}")


def plan_llm(req: InstructionRequest, cands: list[Candidate], stmts_text: str,
             board: BoardConfig, backend, geo: GeometryContext, region: Rect,
             retries: int = DEFAULT_RETRIES) -> AssemblyPlan:
    """Prompt the backend and strictly parse + validate its answer, retrying
    parse/validation failures (the hallucination failure mode) up to
    ``retries`` times.  Transport failures propagate immediately."""
    system, user = build_prompt(req, cands, stmts_text, board, geo, region)
    cand_points = {c.id: geo.candidate_base_point(c) for c in cands}
    attempts = retries + 1
    last_error: Exception | None = None
    total_ms = 0.0
    for _ in range(attempts):
        t0 = time.perf_counter()
        raw = backend.complete(system, user)
        total_ms += (time.perf_counter() - t0) * 1000.0
        try:
            plan = parse_plan_response(
                raw, board, provenance=f"llm:{backend.model_id}")
            violations = validate_plan(plan, cand_points, board)
            if violations:
                raise PlanValidationError(violations)
            plan.latency_ms = total_ms
            return plan
        except (PlanParseError, PlanValidationError) as exc:
            last_error = exc
    raise PlanningFailed(attempts, last_error)


@dataclass(frozen=True)
class FineTuneRecord:
    system: str
    user: str
    assistant: str

    def to_json_line(self) -> str:
        return json.dumps({"system": self.system, "user": self.user,
                           "assistant": self.assistant},
                          sort_keys=True, separators=(",", ":"))


def generate_finetune_dataset(count: int = 100, seed: int = 0) -> list[FineTuneRecord]:
    """Emit chat-format training examples: randomized scenes across the three
    case levels, real localization output, grammar-valid classifications from
    ground truth, and the deterministic plan as the assistant answer."""
    from . import cases  # local import: cases builds on this module's types

    if count < 1:
        raise ValueError("count must be >= 1")
    records = []
    for i in range(count):
        level = (i % 3) + 1
        bundle = cases.random_case_bundle(level=level, seed=seed * 100003 + i)
        req = InstructionRequest(instruction=bundle.instruction, mode="deterministic")
        plan = plan_deterministic(req, bundle.assoc, bundle.candidates,
                                  bundle.geo, bundle.board)
        system, user = build_prompt(req, bundle.candidates,
                                    bundle.classification_text, bundle.board,
                                    bundle.geo, bundle.region)
        records.append(FineTuneRecord(system=system, user=user,
                                      assistant=plan.to_json()))
    return records

"""Evaluation harness: per-case-level task-planning accuracy of a backend
against the deterministic reference planner, counted per trial.

A trial at a level passes when the backend reproduces the reference
category sequence for every product at that level.  Transport failures and
exhausted retries score the trial incorrect rather than aborting the run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import cases
from .planner import (BackendTransportError, InstructionRequest,
                      PlanningFailed, plan_deterministic, plan_llm)


@dataclass
class LevelResult:
    trials: int = 0
    correct: int = 0
    latencies_ms: list[float] = field(default_factory=list)

    @property
    def mean_latency_ms(self) -> float | None:
        if not self.latencies_ms:
            return None
        return sum(self.latencies_ms) / len(self.latencies_ms)


@dataclass
class EvalReport:
    levels: dict[int, LevelResult]

    def to_dict(self) -> dict:
        return {str(lvl): {"trials": r.trials, "correct": r.correct,
                           "mean_latency_ms": r.mean_latency_ms}
                for lvl, r in sorted(self.levels.items())}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"{'Case':<8}{'Correct':<10}{'Mean latency (ms)':<20}"]
        for lvl, r in sorted(self.levels.items()):
            lat = (f"{r.mean_latency_ms:.1f}"
                   if r.mean_latency_ms is not None else "-")
            lines.append(f"Case {lvl:<3}{r.correct}/{r.trials:<8}{lat:<20}")
        return "\n".join(lines)


def run_eval(backend, trials: int = 3, seed: int = 0) -> EvalReport:
    """Score `trials` independent attempts per product; a level's trial is
    correct only when all its products planned correctly."""
    levels = {lvl: LevelResult() for lvl in cases.PRODUCTS}
    for trial in range(trials):
        for lvl in sorted(cases.PRODUCTS):
            result = levels[lvl]
            all_ok = True
            for product in range(1, len(cases.PRODUCTS[lvl]) + 1):
                bundle = cases.product_bundle(
                    lvl, product, seed=seed * 1009 + trial * 17 + product)
                req = InstructionRequest(instruction=bundle.instruction)
                reference = plan_deterministic(req, bundle.assoc,
                                               bundle.candidates, bundle.geo,
                                               bundle.board)
                try:
                    plan = plan_llm(req, bundle.candidates,
                                    bundle.classification_text, bundle.board,
                                    backend, bundle.geo, bundle.region)
                except (BackendTransportError, PlanningFailed):
                    all_ok = False
                    continue
                if plan.latency_ms is not None:
                    result.latencies_ms.append(plan.latency_ms)
                if plan.category_sequence() != reference.category_sequence():
                    all_ok = False
            result.trials += 1
            if all_ok:
                result.correct += 1
    return EvalReport(levels=levels)

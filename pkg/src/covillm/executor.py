"""Virtual workcell: a teleporting simulated arm that picks components off
the table and places them into board slots, with an event log complete
enough to replay the run.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from .board import BoardConfig
from .classify import ComponentLabel
from .geometry import BasePoint, RigidTransform
from .planner import AssemblyPlan, AssemblySubtask

DEFAULT_PICK_TOL_MM = 5.0

#: Synthetic per-event time step, seconds; the arm teleports between
#: waypoints so only monotonicity matters.
EVENT_TICK_S = 0.25


@dataclass
class WorkcellComponent:
    id: int
    position: BasePoint
    label: ComponentLabel | None = None
    held: bool = False
    placed_slot: str | None = None

    def to_dict(self) -> dict:
        return {"id": self.id, "position": self.position.to_dict(),
                "label": self.label.text() if self.label else None,
                "held": self.held, "placed_slot": self.placed_slot}

    @classmethod
    def from_dict(cls, d: dict) -> "WorkcellComponent":
        return cls(id=d["id"], position=BasePoint.from_dict(d["position"]),
                   label=ComponentLabel.parse(d["label"]) if d["label"] else None,
                   held=d["held"], placed_slot=d["placed_slot"])


@dataclass(frozen=True)
class ExecutionEvent:
    timestamp: float
    kind: str          # "move" | "pick" | "place" | "error"
    subtask_index: int
    payload: dict

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "kind": self.kind,
                "subtask_index": self.subtask_index, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionEvent":
        return cls(timestamp=d["timestamp"], kind=d["kind"],
                   subtask_index=d["subtask_index"], payload=d["payload"])


def events_to_jsonl(events: list[ExecutionEvent]) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in events)


@dataclass
class WorkcellState:
    components: list[WorkcellComponent]
    board: BoardConfig
    ee_pose: RigidTransform
    gripper_holding: int | None = None   # component id, or None = open
    cursor: int = 0                      # next plan subtask index - 1
    clock: float = 0.0

    @classmethod
    def fresh(cls, components: list[WorkcellComponent], board: BoardConfig,
              home_pose: RigidTransform | None = None) -> "WorkcellState":
        return cls(components=components, board=board.copy(),
                   ee_pose=home_pose or RigidTransform.from_translation(400.0, 0.0, 400.0))

    def component(self, cid: int) -> WorkcellComponent:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(f"no component {cid}")

    def copy(self) -> "WorkcellState":
        return copy.deepcopy(self)

    def counts(self) -> tuple[int, int, int]:
        """(on table, held, placed) component counts."""
        held = sum(1 for c in self.components if c.held)
        placed = sum(1 for c in self.components if c.placed_slot is not None)
        return len(self.components) - held - placed, held, placed

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components],
                "board": self.board.to_dict(),
                "ee_pose": self.ee_pose.to_dict(),
                "gripper_holding": self.gripper_holding,
                "cursor": self.cursor, "clock": self.clock}

    @classmethod
    def from_dict(cls, d: dict) -> "WorkcellState":
        return cls(components=[WorkcellComponent.from_dict(c)
                               for c in d["components"]],
                   board=BoardConfig.from_dict(d["board"]),
                   ee_pose=RigidTransform.from_dict(d["ee_pose"]),
                   gripper_holding=d["gripper_holding"],
                   cursor=d["cursor"], clock=d["clock"])


def current_t_be(state: WorkcellState) -> RigidTransform:
    """The simulated end-effector pose the transform chain consumes."""
    return state.ee_pose


def _move_pose(state: WorkcellState, target: BasePoint) -> RigidTransform:
    return RigidTransform(state.ee_pose.r,
                          np.array([target.x, target.y, target.z]))


def check_feasible(state: WorkcellState, subtask: AssemblySubtask,
                   tol: float = DEFAULT_PICK_TOL_MM) -> list[str]:
    """Everything that must hold before the subtask can run; empty = ok."""
    violations = []
    if state.gripper_holding is not None:
        violations.append("gripper not open")
    pickable = [c for c in state.components
                if not c.held and c.placed_slot is None
                and c.position.distance(subtask.pick) <= tol]
    if not pickable:
        violations.append("no component at pick location")
    try:
        slot = state.board.slot(subtask.slot_id)
        if slot.occupied:
            violations.append("slot occupied")
        elif slot.accepts != subtask.category:
            violations.append(
                f"slot {slot.id!r} does not accept {subtask.category.text()!r}")
    except Exception:
        violations.append(f"unknown slot {subtask.slot_id!r}")
    return violations


def execute_step(state: WorkcellState, subtask: AssemblySubtask,
                 tol: float = DEFAULT_PICK_TOL_MM
                 ) -> tuple[WorkcellState, list[ExecutionEvent]]:
    """Run one subtask atomically: on any infeasibility the input state is
    returned untouched with a single error event."""
    violations = check_feasible(state, subtask, tol)
    if violations:
        evt = ExecutionEvent(timestamp=state.clock + EVENT_TICK_S, kind="error",
                             subtask_index=subtask.index,
                             payload={"message": "; ".join(violations)})
        return state, [evt]

    s = state.copy()
    events = []

    def emit(kind: str, payload: dict):
        s.clock += EVENT_TICK_S
        events.append(ExecutionEvent(timestamp=s.clock, kind=kind,
                                     subtask_index=subtask.index,
                                     payload=payload))

    comp = min((c for c in s.components
                if not c.held and c.placed_slot is None
                and c.position.distance(subtask.pick) <= tol),
               key=lambda c: c.position.distance(subtask.pick))

    s.ee_pose = _move_pose(s, subtask.pick)
    emit("move", {"target": subtask.pick.to_dict()})
    comp.held = True
    s.gripper_holding = comp.id
    comp.position = subtask.pick
    emit("pick", {"component_id": comp.id})
    s.ee_pose = _move_pose(s, subtask.place)
    comp.position = subtask.place  # held components track the end effector
    emit("move", {"target": subtask.place.to_dict()})
    comp.held = False
    comp.placed_slot = subtask.slot_id
    s.gripper_holding = None
    s.board.occupy(subtask.slot_id)
    emit("place", {"component_id": comp.id, "slot": subtask.slot_id})
    s.cursor += 1
    return s, events


def execute_plan(state: WorkcellState, plan: AssemblyPlan,
                 tol: float = DEFAULT_PICK_TOL_MM
                 ) -> tuple[WorkcellState, list[ExecutionEvent]]:
    """Fold execute_step over the plan in index order, halting at the first
    error (recovery is the operator's call, not the simulator's)."""
    log: list[ExecutionEvent] = []
    for subtask in plan.subtasks:
        state, events = execute_step(state, subtask, tol)
        log.extend(events)
        if events and events[-1].kind == "error":
            break
    return state, log


def replay_events(initial: WorkcellState, events: list[ExecutionEvent]
                  ) -> WorkcellState:
    """Reconstruct the final state from the event log alone (the log is a
    sufficient record of a run)."""
    s = initial.copy()
    for evt in events:
        if evt.kind == "error":
            continue  # errors never mutate state (not even the clock)
        s.clock = evt.timestamp
        if evt.kind == "move":
            target = BasePoint.from_dict(evt.payload["target"])
            s.ee_pose = _move_pose(s, target)
            if s.gripper_holding is not None:
                s.component(s.gripper_holding).position = target
        elif evt.kind == "pick":
            comp = s.component(evt.payload["component_id"])
            comp.held = True
            s.gripper_holding = comp.id
        elif evt.kind == "place":
            comp = s.component(evt.payload["component_id"])
            comp.held = False
            comp.placed_slot = evt.payload["slot"]
            s.gripper_holding = None
            s.board.occupy(evt.payload["slot"])
            s.cursor += 1
        # error events leave state untouched
    return s

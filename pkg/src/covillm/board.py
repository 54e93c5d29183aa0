"""Assembly board model: a table of typed slots with base-frame place points.

The default layout mimics a NATB1-style board: one slot per component
label (three categories, three sizes) laid out on a 3x3 grid beside the
pick area.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .classify import Category, ComponentLabel, Size
from .geometry import BasePoint


class BoardError(ValueError):
    pass


@dataclass(frozen=True)
class Slot:
    id: str
    accepts: ComponentLabel
    place: BasePoint
    occupied: bool = False

    def to_dict(self) -> dict:
        return {"id": self.id, "accepts": self.accepts.text(),
                "place": self.place.to_dict(), "occupied": self.occupied}

    @classmethod
    def from_dict(cls, d: dict) -> "Slot":
        return cls(id=d["id"], accepts=ComponentLabel.parse(d["accepts"]),
                   place=BasePoint.from_dict(d["place"]),
                   occupied=d.get("occupied", False))


@dataclass
class BoardConfig:
    slots: list[Slot] = field(default_factory=list)

    def __post_init__(self):
        ids = [s.id for s in self.slots]
        if len(set(ids)) != len(ids):
            raise BoardError("slot ids must be unique")
        points = {(s.place.x, s.place.y, s.place.z) for s in self.slots}
        if len(points) != len(self.slots):
            raise BoardError("slot place points must be distinct")

    def slot(self, slot_id: str) -> Slot:
        for s in self.slots:
            if s.id == slot_id:
                return s
        raise BoardError(f"unknown slot {slot_id!r}")

    def free_slots(self) -> list[Slot]:
        return sorted((s for s in self.slots if not s.occupied), key=lambda s: s.id)

    def first_free_for(self, label: ComponentLabel,
                       taken: set[str] = frozenset()) -> Slot | None:
        for s in self.free_slots():
            if s.id not in taken and s.accepts == label:
                return s
        return None

    def occupy(self, slot_id: str) -> None:
        for i, s in enumerate(self.slots):
            if s.id == slot_id:
                if s.occupied:
                    raise BoardError(f"slot {slot_id!r} already occupied")
                self.slots[i] = replace(s, occupied=True)
                return
        raise BoardError(f"unknown slot {slot_id!r}")

    def copy(self) -> "BoardConfig":
        return BoardConfig(slots=list(self.slots))

    def to_dict(self) -> dict:
        return {"slots": [s.to_dict() for s in self.slots]}

    @classmethod
    def from_dict(cls, d: dict) -> "BoardConfig":
        return cls(slots=[Slot.from_dict(s) for s in d["slots"]])

    @classmethod
    def default(cls) -> "BoardConfig":
        """One slot per label on a 3x3 grid in the base frame, 60 mm pitch,
        offset away from the pick area."""
        slots = []
        for i, cat in enumerate([Category.GEAR, Category.CIRCULAR_PIN,
                                 Category.RECTANGULAR_PIN]):
            for j, size in enumerate([Size.SMALL, Size.MEDIUM, Size.BIG]):
                label = ComponentLabel(category=cat, size=size)
                slots.append(Slot(
                    id=f"{cat.value}-{size.value}",
                    accepts=label,
                    place=BasePoint(650.0 + 60.0 * i, -60.0 + 60.0 * j, 0.0),
                ))
        return cls(slots=slots)


def load_board(path) -> BoardConfig:
    with open(path) as fh:
        return BoardConfig.from_dict(json.load(fh))


def save_board(board: BoardConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(board.to_dict(), fh, indent=2, sort_keys=True)

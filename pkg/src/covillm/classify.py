"""Operator classification: a constrained spatial-descriptor grammar and a
deterministic associator that binds each statement to one localized candidate.

Grammar, one statement per line (case-insensitive)::

    <size> <category> : <descriptor>

    size       := small | medium | big
    category   := gear | circular_pin | rectangular_pin   (underscore or space)
    descriptor := top-left .. bottom-right                (3x3 grid over the ROI)
                | leftmost | rightmost | topmost | bottommost | center
                | <N>th from left | <N>th from top
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .localize import Candidate, Rect


class Category(enum.Enum):
    GEAR = "gear"
    CIRCULAR_PIN = "circular_pin"
    RECTANGULAR_PIN = "rectangular_pin"


class Size(enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    BIG = "big"


@dataclass(frozen=True)
class ComponentLabel:
    category: Category
    size: Size

    def text(self) -> str:
        """Canonical display form, e.g. "small rectangular pin"."""
        return f"{self.size.value} {self.category.value.replace('_', ' ')}"

    @classmethod
    def parse(cls, text: str) -> "ComponentLabel":
        words = text.strip().lower().replace("_", " ").split()
        if len(words) < 2:
            raise ClassificationParseError(f"cannot parse component label {text!r}")
        size_word, cat_words = words[0], "_".join(words[1:])
        try:
            return cls(category=Category(cat_words), size=Size(size_word))
        except ValueError:
            raise ClassificationParseError(
                f"cannot parse component label {text!r}") from None


_GRID_ROWS = {"top": 1, "middle": 2, "bottom": 3}
_GRID_COLS = {"left": 1, "center": 2, "middle": 2, "right": 3}
_EXTREMA = ("leftmost", "rightmost", "topmost", "bottommost", "center")
_ORDINAL_RE = re.compile(r"^(\d+)(?:st|nd|rd|th)\s+from\s+(left|top)$")


@dataclass(frozen=True)
class SpatialDescriptor:
    """Exactly one of: grid cell, ordinal rank along an axis, or extremum."""

    kind: str                       # "grid" | "ordinal" | "extremum"
    row: int | None = None          # grid: 1..3
    col: int | None = None
    axis: str | None = None         # ordinal: "x" | "y"
    rank: int | None = None         # ordinal: 1-based
    extremum: str | None = None

    def text(self) -> str:
        if self.kind == "grid":
            rows = {1: "top", 2: "middle", 3: "bottom"}
            cols = {1: "left", 2: "center", 3: "right"}
            return f"{rows[self.row]}-{cols[self.col]}"
        if self.kind == "ordinal":
            n = self.rank
            suffix = "th" if 10 <= n % 100 <= 20 else {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
            side = "left" if self.axis == "x" else "top"
            return f"{n}{suffix} from {side}"
        return self.extremum

    @classmethod
    def parse(cls, text: str) -> "SpatialDescriptor":
        t = text.strip().lower()
        if t in _EXTREMA:
            return cls(kind="extremum", extremum=t)
        m = _ORDINAL_RE.match(t)
        if m:
            rank = int(m.group(1))
            if rank < 1:
                raise ClassificationParseError(f"ordinal rank must be >= 1: {text!r}")
            axis = "x" if m.group(2) == "left" else "y"
            return cls(kind="ordinal", axis=axis, rank=rank)
        parts = t.split("-")
        if len(parts) == 2 and parts[0] in _GRID_ROWS and parts[1] in _GRID_COLS:
            return cls(kind="grid", row=_GRID_ROWS[parts[0]], col=_GRID_COLS[parts[1]])
        raise ClassificationParseError(f"unknown spatial descriptor {text!r}")


@dataclass(frozen=True)
class ClassificationStatement:
    label: ComponentLabel
    where: SpatialDescriptor

    def text(self) -> str:
        return f"{self.label.text()}: {self.where.text()}"


class ClassificationParseError(ValueError):
    def __init__(self, message: str, line_no: int | None = None, line: str | None = None):
        self.line_no = line_no
        self.line = line
        super().__init__(message)


class AmbiguousDescriptorError(RuntimeError):
    """A descriptor matched several candidates it cannot choose between."""

    def __init__(self, statement: ClassificationStatement, candidate_ids: list[int]):
        self.statement = statement
        self.candidate_ids = candidate_ids
        super().__init__(
            f"ambiguous: {statement.text()!r} matches candidates {candidate_ids}")


@dataclass
class AssociationResult:
    bindings: list[tuple[ClassificationStatement, int]]
    unmatched: list[ClassificationStatement]
    unclaimed: list[int]

    def to_dict(self) -> dict:
        return {
            "bindings": [{"statement": s.text(), "candidate_id": cid}
                         for s, cid in self.bindings],
            "unmatched": [s.text() for s in self.unmatched],
            "unclaimed": list(self.unclaimed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssociationResult":
        return cls(
            bindings=[(parse_statement(b["statement"]), b["candidate_id"])
                      for b in d["bindings"]],
            unmatched=[parse_statement(s) for s in d["unmatched"]],
            unclaimed=list(d["unclaimed"]),
        )


def parse_statement(line: str) -> ClassificationStatement:
    if ":" not in line:
        raise ClassificationParseError(f"missing ':' in {line!r}")
    left, right = line.split(":", 1)
    return ClassificationStatement(label=ComponentLabel.parse(left),
                                   where=SpatialDescriptor.parse(right))


def parse_classification(text: str) -> list[ClassificationStatement]:
    """Parse line-oriented operator input; blank lines are skipped.  Errors
    carry the 1-based line number and the offending text, never a guess."""
    statements = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            statements.append(parse_statement(line))
        except ClassificationParseError as exc:
            raise ClassificationParseError(
                f"line {line_no}: {exc}", line_no=line_no, line=line) from None
    return statements


def _grid_cell(cand: Candidate, region: Rect) -> tuple[int, int]:
    col = min(2, int((cand.c_x - region.x0) / region.width * 3))
    row = min(2, int((cand.c_y - region.y0) / region.height * 3))
    return row + 1, col + 1


def _match(stmt: ClassificationStatement, cands: list[Candidate],
           bound: set[int], region: Rect) -> Candidate | None:
    """Resolve one descriptor.  Ordinals and extrema rank over the FULL
    candidate list (the operator describes the scene as seen); a descriptor
    resolving to an already-bound candidate falls to unmatched.  Grid cells
    choose among unbound members of the cell."""
    d = stmt.where
    if d.kind == "grid":
        hits = [c for c in cands if c.id not in bound
                and _grid_cell(c, region) == (d.row, d.col)]
        if len(hits) > 1:
            raise AmbiguousDescriptorError(stmt, [c.id for c in hits])
        return hits[0] if hits else None
    if d.kind == "ordinal":
        if d.rank > len(cands):
            return None
        if d.axis == "x":
            key = lambda c: (c.c_x, c.c_y)
        else:
            key = lambda c: (c.c_y, c.c_x)
        hit = sorted(cands, key=key)[d.rank - 1]
        return None if hit.id in bound else hit
    # extremum
    if not cands:
        return None
    if d.extremum == "center":
        cx = (region.x0 + region.x1) / 2.0
        cy = (region.y0 + region.y1) / 2.0
        key = lambda c: (c.c_x - cx) ** 2 + (c.c_y - cy) ** 2
        best = min(key(c) for c in cands)
        hits = [c for c in cands if key(c) == best]
    else:
        coord = {"leftmost": (lambda c: c.c_x, min),
                 "rightmost": (lambda c: c.c_x, max),
                 "topmost": (lambda c: c.c_y, min),
                 "bottommost": (lambda c: c.c_y, max)}[d.extremum]
        get, agg = coord
        best = agg(get(c) for c in cands)
        hits = [c for c in cands if get(c) == best]
    if len(hits) > 1:  # extrema must be strict
        raise AmbiguousDescriptorError(stmt, [c.id for c in hits])
    return None if hits[0].id in bound else hits[0]


def associate(stmts: list[ClassificationStatement], cands: list[Candidate],
              region: Rect) -> AssociationResult:
    """Bind statements to candidates greedily in statement order; each
    candidate binds at most once (injective bindings)."""
    bound: set[int] = set()
    bindings: list[tuple[ClassificationStatement, int]] = []
    unmatched: list[ClassificationStatement] = []
    for stmt in stmts:
        hit = _match(stmt, cands, bound, region)
        if hit is None:
            unmatched.append(stmt)
        else:
            bindings.append((stmt, hit.id))
            bound.add(hit.id)
    return AssociationResult(bindings=bindings, unmatched=unmatched,
                             unclaimed=[c.id for c in cands if c.id not in bound])

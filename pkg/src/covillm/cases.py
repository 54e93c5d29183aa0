"""Benchmark cases: the three-level product catalog, component geometry for
the NATB1-style board parts, and bundle builders that take a product from
scene synthesis through localization and classification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .board import BoardConfig
from .classify import (AssociationResult, Category, ComponentLabel, Size,
                       associate, parse_classification)
from .filters import FilterParams
from .frames import DepthFrame
from .geometry import ComponentFootprintSpec, GeometryContext
from .localize import Candidate, LocalizationParams, Rect, localize
from .synth import Footprint, SceneComponent, SceneSpec, synthesize_frame

DEFAULT_SURFACE_DEPTH_MM = 400.0


@dataclass(frozen=True)
class ComponentGeometry:
    footprint: Footprint
    height_mm: float


# Desk-scale stand-ins for the task-board parts: gears and circular pins are
# cylinders, rectangular pins are cuboids.  Extents keep every part inside
# the contour area/aspect filters at the 400 mm working distance.
COMPONENT_GEOMETRY: dict[ComponentLabel, ComponentGeometry] = {
    ComponentLabel(Category.GEAR, Size.SMALL):
        ComponentGeometry(Footprint("circle", d_mm=20), 20.0),
    ComponentLabel(Category.GEAR, Size.MEDIUM):
        ComponentGeometry(Footprint("circle", d_mm=30), 22.0),
    ComponentLabel(Category.GEAR, Size.BIG):
        ComponentGeometry(Footprint("circle", d_mm=40), 24.0),
    ComponentLabel(Category.CIRCULAR_PIN, Size.SMALL):
        ComponentGeometry(Footprint("circle", d_mm=12), 30.0),
    ComponentLabel(Category.CIRCULAR_PIN, Size.MEDIUM):
        ComponentGeometry(Footprint("circle", d_mm=16), 32.0),
    ComponentLabel(Category.CIRCULAR_PIN, Size.BIG):
        ComponentGeometry(Footprint("circle", d_mm=20), 34.0),
    ComponentLabel(Category.RECTANGULAR_PIN, Size.SMALL):
        ComponentGeometry(Footprint("rect", w_mm=10, h_mm=20), 25.0),
    ComponentLabel(Category.RECTANGULAR_PIN, Size.MEDIUM):
        ComponentGeometry(Footprint("rect", w_mm=12, h_mm=28), 26.0),
    ComponentLabel(Category.RECTANGULAR_PIN, Size.BIG):
        ComponentGeometry(Footprint("rect", w_mm=16, h_mm=36), 28.0),
}


def footprint_specs() -> list[ComponentFootprintSpec]:
    """Per-label footprint specs for the camera-height validity analysis."""
    out = []
    for label, geom in COMPONENT_GEOMETRY.items():
        ex, ey = geom.footprint.extents
        out.append(ComponentFootprintSpec(
            label=label.text(), height_mm=geom.height_mm,
            min_extent_mm=min(ex, ey), max_extent_mm=max(ex, ey)))
    return out


def _labels(*names: str) -> tuple[ComponentLabel, ...]:
    return tuple(ComponentLabel.parse(n) for n in names)


# Three case levels, three products each; list order is the assembly sequence.
PRODUCTS: dict[int, list[tuple[ComponentLabel, ...]]] = {
    1: [
        _labels("small gear", "small rectangular pin"),
        _labels("small gear", "medium rectangular pin"),
        _labels("medium gear", "small rectangular pin"),
    ],
    2: [
        _labels("small gear", "medium rectangular pin", "medium circular pin"),
        _labels("medium gear", "small rectangular pin", "medium circular pin"),
        _labels("medium gear", "medium circular pin", "small gear"),
    ],
    3: [
        _labels("big gear", "small gear", "small rectangular pin",
                "small circular pin"),
        _labels("big circular pin", "small gear", "medium rectangular pin",
                "medium circular pin"),
        _labels("big rectangular pin", "medium gear", "small rectangular pin",
                "small gear"),
    ],
}


def instruction_for(labels: tuple[ComponentLabel, ...]) -> str:
    return ", ".join(l.text() for l in labels)


_X_SLOTS = (-120.0, -40.0, 40.0, 120.0)


def build_scene(labels: tuple[ComponentLabel, ...], seed: int,
                surface_depth_mm: float = DEFAULT_SURFACE_DEPTH_MM,
                noise_sigma_mm: float = 0.0,
                dropout_rate: float = 0.0) -> SceneSpec:
    """Place the labeled components on the table at well-separated x slots
    (shuffled and jittered by seed) so spatial descriptors stay unambiguous."""
    if len(labels) > len(_X_SLOTS):
        raise ValueError(f"at most {len(_X_SLOTS)} components per scene")
    rng = np.random.default_rng(seed)
    xs = rng.permutation(_X_SLOTS)[:len(labels)]
    comps = []
    for label, x in zip(labels, xs):
        geom = COMPONENT_GEOMETRY[label]
        comps.append(SceneComponent(
            category=label.text(), footprint=geom.footprint,
            height_mm=geom.height_mm,
            x_mm=float(x + rng.uniform(-10, 10)),
            y_mm=float(rng.uniform(-60, 60))))
    return SceneSpec(surface_depth_mm=surface_depth_mm,
                     components=tuple(comps),
                     noise_sigma_mm=noise_sigma_mm,
                     dropout_rate=dropout_rate)


def classification_for_scene(scene: SceneSpec) -> str:
    """Grammar-valid operator statements from ground truth: each component
    described by its left-to-right rank on the table."""
    order = sorted(range(len(scene.components)),
                   key=lambda i: scene.components[i].x_mm)
    rank_of = {idx: r + 1 for r, idx in enumerate(order)}
    lines = []
    for i, comp in enumerate(scene.components):
        n = rank_of[i]
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n, "th")
        lines.append(f"{comp.category}: {n}{suffix} from left")
    return "\n".join(lines) + "\n"


@dataclass
class CaseBundle:
    """One fully staged scenario: scene, frame, localization, classification,
    and everything the planners need."""

    scene: SceneSpec
    frame: DepthFrame
    candidates: list[Candidate]
    d_s: float
    classification_text: str
    assoc: AssociationResult
    instruction: str
    geo: GeometryContext
    board: BoardConfig
    region: Rect


def build_bundle(labels: tuple[ComponentLabel, ...], seed: int,
                 geo: GeometryContext | None = None,
                 board: BoardConfig | None = None,
                 fp: FilterParams | None = None,
                 lp: LocalizationParams | None = None,
                 noise_sigma_mm: float = 0.0,
                 dropout_rate: float = 0.0) -> CaseBundle:
    geo = geo or GeometryContext.default()
    board = board or BoardConfig.default()
    fp = fp or FilterParams()
    lp = lp or LocalizationParams()
    scene = build_scene(labels, seed, noise_sigma_mm=noise_sigma_mm,
                        dropout_rate=dropout_rate)
    frame = synthesize_frame(scene, geo.intrinsics, seed)
    cands, d_s = localize([frame], fp, lp)
    region = lp.roi_for(frame)
    text = classification_for_scene(scene)
    assoc = associate(parse_classification(text), cands, region)
    return CaseBundle(scene=scene, frame=frame, candidates=cands, d_s=d_s,
                      classification_text=text, assoc=assoc,
                      instruction=instruction_for(labels), geo=geo,
                      board=board, region=region)


def product_bundle(level: int, product: int, seed: int = 0, **kw) -> CaseBundle:
    """Stage one catalog product (level and product are 1-based)."""
    if level not in PRODUCTS or not (1 <= product <= 3):
        raise ValueError("level and product must lie in 1..3")
    return build_bundle(PRODUCTS[level][product - 1], seed=seed, **kw)


def random_case_bundle(level: int, seed: int, **kw) -> CaseBundle:
    """A random product at the given complexity level: distinct labels drawn
    from the catalog, count matching the level (2, 3, or 4 components)."""
    rng = np.random.default_rng(seed)
    n = level + 1
    all_labels = sorted(COMPONENT_GEOMETRY, key=lambda l: l.text())
    picks = rng.choice(len(all_labels), size=n, replace=False)
    labels = tuple(all_labels[i] for i in picks)
    return build_bundle(labels, seed=seed, **kw)

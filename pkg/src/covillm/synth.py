"""Synthetic top-down depth scenes: the stand-in for a physical depth camera.

A scene is a flat table plane at ``surface_depth`` mm below the camera,
with raised components whose footprints live in table-plane millimeters.
The camera looks straight down: camera-frame x grows right, y grows down,
z along the optical axis.  A component of height h images at depth
``surface_depth - h`` over its projected footprint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .frames import MAX_DEPTH_MM, CameraIntrinsics, DepthFrame


class SceneError(ValueError):
    """Raised for invalid scene specifications."""


@dataclass(frozen=True)
class Footprint:
    """Axis-aligned rect or circle in table-plane mm, centered on the origin."""

    shape: str  # "rect" | "circle"
    w_mm: float = 0.0  # rect extents
    h_mm: float = 0.0
    d_mm: float = 0.0  # circle diameter

    def __post_init__(self):
        if self.shape == "rect":
            if self.w_mm <= 0 or self.h_mm <= 0:
                raise SceneError("rect footprint needs positive extents")
        elif self.shape == "circle":
            if self.d_mm <= 0:
                raise SceneError("circle footprint needs positive diameter")
        else:
            raise SceneError(f"unknown footprint shape {self.shape!r}")

    @property
    def extents(self) -> tuple[float, float]:
        """Bounding-box extents (x, y) in mm."""
        if self.shape == "rect":
            return (self.w_mm, self.h_mm)
        return (self.d_mm, self.d_mm)

    @property
    def area_mm2(self) -> float:
        if self.shape == "rect":
            return self.w_mm * self.h_mm
        return math.pi * (self.d_mm / 2.0) ** 2

    def to_dict(self) -> dict:
        if self.shape == "rect":
            return {"shape": "rect", "w_mm": self.w_mm, "h_mm": self.h_mm}
        return {"shape": "circle", "d_mm": self.d_mm}

    @classmethod
    def from_dict(cls, d: dict) -> "Footprint":
        if d.get("shape") == "rect":
            return cls("rect", w_mm=d["w_mm"], h_mm=d["h_mm"])
        if d.get("shape") == "circle":
            return cls("circle", d_mm=d["d_mm"])
        raise SceneError(f"unknown footprint {d!r}")


@dataclass(frozen=True)
class SceneComponent:
    category: str            # free-form label text, e.g. "small gear"
    footprint: Footprint
    height_mm: float         # above the table surface
    x_mm: float              # footprint center, table-plane mm
    y_mm: float

    def __post_init__(self):
        if self.height_mm <= 0:
            raise SceneError(f"component {self.category!r} needs positive height")

    def to_dict(self) -> dict:
        return {"category": self.category, "footprint": self.footprint.to_dict(),
                "height_mm": self.height_mm,
                "position": {"x_mm": self.x_mm, "y_mm": self.y_mm}}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneComponent":
        return cls(category=d["category"], footprint=Footprint.from_dict(d["footprint"]),
                   height_mm=d["height_mm"],
                   x_mm=d["position"]["x_mm"], y_mm=d["position"]["y_mm"])


@dataclass(frozen=True)
class SceneSpec:
    surface_depth_mm: float
    components: tuple[SceneComponent, ...] = ()
    noise_sigma_mm: float = 0.0
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.surface_depth_mm <= 0 or self.surface_depth_mm > MAX_DEPTH_MM:
            raise SceneError("surface depth out of range")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise SceneError("dropout_rate must lie in [0, 1)")
        if self.noise_sigma_mm < 0:
            raise SceneError("noise_sigma_mm must be non-negative")
        object.__setattr__(self, "components", tuple(self.components))
        self._check_overlap()

    def _check_overlap(self):
        comps = self.components
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                a, b = comps[i], comps[j]
                ax, ay = a.footprint.extents
                bx, by = b.footprint.extents
                if (abs(a.x_mm - b.x_mm) < (ax + bx) / 2.0
                        and abs(a.y_mm - b.y_mm) < (ay + by) / 2.0):
                    raise SceneError(
                        f"footprints of {a.category!r} and {b.category!r} overlap")

    def to_dict(self) -> dict:
        return {"surface_depth_mm": self.surface_depth_mm,
                "components": [c.to_dict() for c in self.components],
                "noise_sigma_mm": self.noise_sigma_mm,
                "dropout_rate": self.dropout_rate}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(surface_depth_mm=d["surface_depth_mm"],
                   components=tuple(SceneComponent.from_dict(c)
                                    for c in d.get("components", [])),
                   noise_sigma_mm=d.get("noise_sigma_mm", 0.0),
                   dropout_rate=d.get("dropout_rate", 0.0))

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GroundTruthObject:
    """Where a component should localize, for tests and evaluation."""

    category: str
    cx_px: float
    cy_px: float
    z_mm: int
    area_px: float


def _component_pixel_region(comp: SceneComponent, scene: SceneSpec,
                            intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Return (rows, cols) index arrays of pixels covered by the component's
    top surface.  A pixel is covered when its center backprojects (at the
    object-top depth) inside the footprint."""
    z = scene.surface_depth_mm - comp.height_mm
    if z <= 0:
        raise SceneError(f"component {comp.category!r} taller than the camera height")
    sx, sy = intr.f_x / z, intr.f_y / z
    ex, ey = comp.footprint.extents
    cx = intr.p_x + comp.x_mm * sx
    cy = intr.p_y + comp.y_mm * sy
    x0 = cx - ex / 2.0 * sx
    x1 = cx + ex / 2.0 * sx
    y0 = cy - ey / 2.0 * sy
    y1 = cy + ey / 2.0 * sy
    if x0 < 0 or y0 < 0 or x1 > intr.width - 1 or y1 > intr.height - 1:
        raise SceneError(f"component {comp.category!r} projects outside the frame")

    ix0, ix1 = int(math.ceil(x0)), int(math.floor(x1))
    iy0, iy1 = int(math.ceil(y0)), int(math.floor(y1))
    us, vs = np.meshgrid(np.arange(ix0, ix1 + 1), np.arange(iy0, iy1 + 1))
    if comp.footprint.shape == "rect":
        inside = np.ones(us.shape, dtype=bool)
    else:
        r_px_x = comp.footprint.d_mm / 2.0 * sx
        r_px_y = comp.footprint.d_mm / 2.0 * sy
        inside = (((us - cx) / r_px_x) ** 2 + ((vs - cy) / r_px_y) ** 2) <= 1.0
    return vs[inside], us[inside]


def scene_ground_truth(scene: SceneSpec, intr: CameraIntrinsics) -> list[GroundTruthObject]:
    """Expected localization result per component (noiseless geometry)."""
    out = []
    for comp in scene.components:
        rows, cols = _component_pixel_region(comp, scene, intr)
        z = scene.surface_depth_mm - comp.height_mm
        out.append(GroundTruthObject(
            category=comp.category,
            cx_px=float(np.mean(cols)),
            cy_px=float(np.mean(rows)),
            z_mm=int(round(z)),
            area_px=float(len(rows)),
        ))
    return out


def synthesize_frame(scene: SceneSpec, intr: CameraIntrinsics, seed: int) -> DepthFrame:
    """Render the scene to a depth frame, deterministically in (scene, intr, seed).

    Background pixels read the table depth; component pixels read
    ``surface_depth - height``.  Gaussian noise (rounded to mm) and an exact
    ``floor(dropout_rate * n_pixels)`` count of zeroed pixels come last.
    """
    depth = np.full((intr.height, intr.width),
                    round(scene.surface_depth_mm), dtype=np.float64)
    for comp in scene.components:
        rows, cols = _component_pixel_region(comp, scene, intr)
        depth[rows, cols] = scene.surface_depth_mm - comp.height_mm

    rng = np.random.default_rng(seed)
    if scene.noise_sigma_mm > 0:
        depth += rng.normal(0.0, scene.noise_sigma_mm, size=depth.shape)
    depth = np.clip(np.rint(depth), 1, MAX_DEPTH_MM)

    if scene.dropout_rate > 0:
        n = depth.size
        n_drop = int(math.floor(scene.dropout_rate * n))
        if n_drop:
            flat = rng.choice(n, size=n_drop, replace=False)
            depth.ravel()[flat] = 0

    return DepthFrame(intr.width, intr.height, depth.astype(np.uint16))

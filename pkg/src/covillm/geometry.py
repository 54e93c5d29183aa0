"""Rigid transforms and the pixel -> camera -> end-effector -> base chain,
plus the camera-height validity analysis used when staging a workspace.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .frames import CameraIntrinsics
from .localize import Candidate, LocalizationParams

ROTATION_TOL = 1e-9


class TransformError(ValueError):
    """Raised for matrices that are not proper rigid transforms."""


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation matrix + translation (mm), validated as SO(3) on construction."""

    r: np.ndarray  # (3, 3)
    t: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise TransformError("expected a 3x3 rotation and 3-vector translation")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ROTATION_TOL:
            raise TransformError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise TransformError("rotation determinant is not +1")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "RigidTransform":
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m

    def inverse(self) -> "RigidTransform":
        r_inv = self.r.T
        return RigidTransform(r_inv, -r_inv @ self.t)

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Apply to a homogeneous 4-vector; the unit lower row keeps the
        fourth component at exactly 1."""
        p = np.asarray(p, dtype=np.float64)
        out = np.empty(4)
        out[:3] = self.r @ p[:3] + self.t * p[3]
        out[3] = p[3]
        return out

    def to_dict(self) -> dict:
        return {"r": [float(v) for v in self.r.ravel()],
                "t": [float(v) for v in self.t]}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.array(d["r"], dtype=np.float64).reshape(3, 3),
                   np.array(d["t"], dtype=np.float64))


@dataclass(frozen=True)
class BasePoint:
    """Robot-base-frame location in mm (homogeneous fourth component = 1)."""

    x: float
    y: float
    z: float

    @classmethod
    def from_homogeneous(cls, p: np.ndarray) -> "BasePoint":
        p = np.asarray(p, dtype=np.float64)
        if abs(p[3] - 1.0) > 1e-12:
            raise TransformError("homogeneous coordinate not normalized")
        return cls(float(p[0]), float(p[1]), float(p[2]))

    def homogeneous(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, 1.0])

    def to_dict(self) -> dict:
        return {"x_mm": self.x, "y_mm": self.y, "z_mm": self.z}

    @classmethod
    def from_dict(cls, d: dict) -> "BasePoint":
        return cls(d["x_mm"], d["y_mm"], d["z_mm"])

    def distance(self, other: "BasePoint") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class ComponentFootprintSpec:
    """Planar extents and height used for camera-height feasibility checks."""

    label: str
    height_mm: float
    min_extent_mm: float
    max_extent_mm: float

    def __post_init__(self):
        if not (0 < self.min_extent_mm <= self.max_extent_mm):
            raise ValueError("need 0 < min extent <= max extent")


def backproject(c_x: float, c_y: float, z: float,
                intr: CameraIntrinsics) -> np.ndarray:
    """Pixel + depth -> camera-frame homogeneous point."""
    if z <= 0:
        raise TransformError("backprojection requires positive depth")
    return np.array([
        (c_x - intr.p_x) / intr.f_x * z,
        (c_y - intr.p_y) / intr.f_y * z,
        z,
        1.0,
    ])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Homogeneous product a . b (apply b first)."""
    return RigidTransform(a.r @ b.r, a.r @ b.t + a.t)


def pixel_to_base(cand: Candidate, intr: CameraIntrinsics,
                  t_ec: RigidTransform, t_be: RigidTransform) -> BasePoint:
    """Candidate pixel/depth -> robot base frame via the camera-to-end-effector
    and end-effector-to-base transforms."""
    p_cam = backproject(cand.c_x, cand.c_y, cand.z, intr)
    p_base = compose(t_be, t_ec).apply(p_cam)
    return BasePoint.from_homogeneous(p_base)


def project_to_pixel(p: BasePoint, intr: CameraIntrinsics,
                     t_ec: RigidTransform, t_be: RigidTransform
                     ) -> tuple[float, float, float]:
    """Inverse of pixel_to_base: base point -> (c_x, c_y, z)."""
    cam = compose(t_be, t_ec).inverse().apply(p.homogeneous())
    x, y, z = cam[:3]
    if z <= 0:
        raise TransformError("point is behind the camera")
    return (intr.p_x + intr.f_x * x / z, intr.p_y + intr.f_y * y / z, z)


def valid_camera_height_range(spec: ComponentFootprintSpec,
                              lp: LocalizationParams,
                              intr: CameraIntrinsics) -> tuple[float, float] | None:
    """Camera-height interval over which the component stays localizable:
    tall enough to clear the object threshold, and with a projected area
    inside the contour filter bounds.  Returns None when empty.

    Projected area uses the worst-case square footprint of the minimum
    planar extent: A(z) = min_extent^2 * f_x * f_y / z^2.
    """
    if not spec.height_mm > lp.h_m:
        return None
    aspect = spec.max_extent_mm / (spec.min_extent_mm + lp.epsilon)
    if aspect > lp.alpha_max:
        return None
    area_mm2 = spec.min_extent_mm ** 2
    ff = intr.f_x * intr.f_y
    # A(z) decreases with z: A(z) <= a_max gives the lower bound,
    # A(z) >= a_min the upper one.
    z_lo = math.sqrt(area_mm2 * ff / lp.a_max)
    z_hi = math.sqrt(area_mm2 * ff / lp.a_min)
    z_lo = max(z_lo, lp.d_min)
    z_hi = min(z_hi, lp.d_max)
    if z_lo > z_hi:
        return None
    return (z_lo, z_hi)


@dataclass(frozen=True, eq=False)
class GeometryContext:
    """Everything needed to map a candidate into the robot base frame."""

    intrinsics: CameraIntrinsics
    t_ec: RigidTransform
    t_be: RigidTransform

    def candidate_base_point(self, cand: Candidate) -> BasePoint:
        return pixel_to_base(cand, self.intrinsics, self.t_ec, self.t_be)

    def to_dict(self) -> dict:
        return {"intrinsics": self.intrinsics.to_dict(),
                "t_ec": self.t_ec.to_dict(),
                "t_be": self.t_be.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GeometryContext":
        return cls(intrinsics=CameraIntrinsics.from_dict(d["intrinsics"]),
                   t_ec=RigidTransform.from_dict(d["t_ec"]),
                   t_be=RigidTransform.from_dict(d["t_be"]))

    @classmethod
    def default(cls, intr: CameraIntrinsics | None = None) -> "GeometryContext":
        """Camera rigidly under the end effector, end effector 400 mm above a
        table centered 400 mm in front of the base."""
        return cls(
            intrinsics=intr or CameraIntrinsics.default(),
            t_ec=RigidTransform.identity(),
            t_be=RigidTransform(
                # camera optical frame (x right, y down, z forward/down) to a
                # base frame with z up: rotate pi about the x axis
                r=np.array([[1.0, 0.0, 0.0],
                            [0.0, -1.0, 0.0],
                            [0.0, 0.0, -1.0]]),
                t=np.array([400.0, 0.0, 400.0]),
            ),
        )


def load_transform_config(path) -> GeometryContext:
    """Transform configuration file: row-major R and t for T_EC plus the
    default simulated T_BE (and optional intrinsics)."""
    with open(path) as fh:
        d = json.load(fh)
    intr = (CameraIntrinsics.from_dict(d["intrinsics"])
            if "intrinsics" in d else CameraIntrinsics.default())
    return GeometryContext(
        intrinsics=intr,
        t_ec=RigidTransform.from_dict(d["t_ec"]),
        t_be=RigidTransform.from_dict(d["t_be"]),
    )


def save_transform_config(geo: GeometryContext, path) -> None:
    with open(path, "w") as fh:
        json.dump(geo.to_dict(), fh, indent=2, sort_keys=True)

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

sys.path.insert(0, str(Path(__file__).parent))

from covillm.frames import CameraIntrinsics
from covillm.geometry import RigidTransform


@pytest.fixture
def intr():
    return CameraIntrinsics.default()


@pytest.fixture
def small_intr():
    return CameraIntrinsics.default(width=160, height=120, focal=200.0)


def random_transform(rng: np.random.Generator, t_scale: float = 500.0) -> RigidTransform:
    r = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    t = rng.uniform(-t_scale, t_scale, size=3)
    return RigidTransform(r, t)


def random_intrinsics(rng: np.random.Generator) -> CameraIntrinsics:
    w = int(rng.integers(100, 1200))
    h = int(rng.integers(100, 1000))
    return CameraIntrinsics(
        f_x=float(rng.uniform(200, 1200)),
        f_y=float(rng.uniform(200, 1200)),
        p_x=float(rng.uniform(0, w - 1)),
        p_y=float(rng.uniform(0, h - 1)),
        width=w, height=h)

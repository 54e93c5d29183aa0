"""Object localization: surface-depth estimation, binary masking, and
contour-based candidate extraction on a refined depth frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage

from .filters import FilterParams, TemporalState, denoise
from .frames import DepthFrame

_EIGHT_CONN = np.ones((3, 3), dtype=int)


class SurfaceNotFound(RuntimeError):
    """No valid depth samples in the ROI: cannot estimate the table surface."""


@dataclass(frozen=True)
class Rect:
    """Inclusive pixel rectangle."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError("degenerate rectangle")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    def to_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}

    @classmethod
    def from_dict(cls, d: dict) -> "Rect":
        return cls(d["x0"], d["y0"], d["x1"], d["y1"])


@dataclass(frozen=True)
class LocalizationParams:
    d_min: float = 150.0       # mm, exclusive lower depth bound
    d_max: float = 2000.0      # mm, exclusive upper depth bound
    h_m: float = 10.0          # mm, minimum object height over the surface
    bin_width: float = 1.0     # mm, surface histogram bin
    a_min: float = 50.0        # px^2 contour area bounds
    a_max: float = 20000.0
    alpha_max: float = 4.0     # bbox aspect-ratio cap
    epsilon: float = 1e-6      # aspect-ratio division guard
    roi: Rect | None = None    # None = frame minus the default margin

    ROI_MARGIN = 20

    def __post_init__(self):
        if self.d_min >= self.d_max:
            raise ValueError("d_min must be below d_max")
        if self.h_m <= 0 or self.bin_width <= 0 or self.epsilon <= 0:
            raise ValueError("h_m, bin_width and epsilon must be positive")
        if self.a_min > self.a_max:
            raise ValueError("a_min must not exceed a_max")
        if self.alpha_max < 1.0:
            raise ValueError("alpha_max must be >= 1")

    def roi_for(self, frame: DepthFrame) -> Rect:
        if self.roi is not None:
            r = self.roi
            if r.x1 >= frame.width or r.y1 >= frame.height:
                raise ValueError("ROI extends outside the frame")
            return r
        m = min(self.ROI_MARGIN, (frame.width - 1) // 2, (frame.height - 1) // 2)
        return Rect(m, m, frame.width - 1 - m, frame.height - 1 - m)


@dataclass
class BinaryMask:
    width: int
    height: int
    bits: np.ndarray = field(repr=False)  # (height, width) bool

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            raise ValueError("mask shape mismatch")


@dataclass
class Contour:
    boundary: list[tuple[int, int]]      # ordered (x, y) boundary pixels
    area: int                            # interior pixel count
    bbox: tuple[int, int, int, int]      # x, y, w, h
    _rows: np.ndarray = field(repr=False)
    _cols: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Candidate:
    id: int
    c_x: float
    c_y: float
    z: int        # median object depth, mm
    area: int
    bbox: tuple[int, int, int, int]

    def to_dict(self) -> dict:
        x, y, w, h = self.bbox
        return {"id": self.id, "cx": self.c_x, "cy": self.c_y, "z_mm": self.z,
                "area_px": self.area, "bbox": {"x": x, "y": y, "w": w, "h": h}}

    @classmethod
    def from_dict(cls, d: dict) -> "Candidate":
        b = d["bbox"]
        return cls(id=d["id"], c_x=d["cx"], c_y=d["cy"], z=d["z_mm"],
                   area=d["area_px"], bbox=(b["x"], b["y"], b["w"], b["h"]))


def candidates_to_json(cands: list[Candidate]) -> str:
    """The localization export payload shown to the operator and the planner."""
    return json.dumps([c.to_dict() for c in cands], sort_keys=True)


def histogram_mode(values: np.ndarray, bin_width: float) -> float:
    """Center of the most-populated bin; bins are centered on multiples of
    bin_width so integer-mm data with a 1 mm bin returns the exact mode.
    Ties break toward the smaller depth."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise SurfaceNotFound("cannot take the mode of an empty sample set")
    idx = np.floor(values / bin_width + 0.5).astype(np.int64)
    bins, counts = np.unique(idx, return_counts=True)
    best = bins[np.argmax(counts)]  # unique() sorts, argmax takes first max
    return float(best * bin_width)


def create_binary_mask(d_f: DepthFrame, params: LocalizationParams
                       ) -> tuple[BinaryMask, float]:
    """Estimate the surface depth d_s from the ROI histogram mode and flag
    every in-ROI pixel nearer than t_obj = d_s - h_m (within depth bounds)."""
    roi = params.roi_for(d_f)
    depth = d_f.data.astype(np.float64)
    window = depth[roi.y0:roi.y1 + 1, roi.x0:roi.x1 + 1]
    valid = window[(window > params.d_min) & (window < params.d_max)]
    if valid.size == 0:
        raise SurfaceNotFound("surface not found: no valid depth samples in the ROI")
    d_s = histogram_mode(valid, params.bin_width)
    t_obj = d_s - params.h_m

    bits = np.zeros(depth.shape, dtype=bool)
    w = (window < t_obj) & (window > params.d_min) & (window < params.d_max)
    bits[roi.y0:roi.y1 + 1, roi.x0:roi.x1 + 1] = w
    return BinaryMask(d_f.width, d_f.height, bits), d_s


def _trace_boundary(region: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                    y_off: int, x_off: int) -> list[tuple[int, int]]:
    """Moore-neighbor tracing over one region (bool array local to its bbox).
    Returns absolute (x, y) pixels, clockwise, starting at the topmost of the
    leftmost-in-top-row pixels."""
    h, w = region.shape

    def filled(y, x):
        return 0 <= y < h and 0 <= x < w and region[y, x]

    start = (int(rows[0] - y_off), int(cols[0] - x_off))  # first in row-major order
    # clockwise neighborhood starting from west
    nbrs = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]
    boundary = [start]
    prev_dir = 0  # came from the west
    cur = start
    while True:
        found = None
        for k in range(8):
            d = (prev_dir + k) % 8
            dy, dx = nbrs[d]
            ny, nx = cur[0] + dy, cur[1] + dx
            if filled(ny, nx):
                found = (ny, nx)
                # next search backs up to the neighbor before the hit
                prev_dir = (d + 6) % 8 if d % 2 == 0 else (d + 7) % 8
                break
        if found is None:  # isolated pixel
            break
        if found == start and len(boundary) > 1:
            break
        if len(boundary) > 4 * (h * w):  # safety net; should never trigger
            break
        boundary.append(found)
        cur = found
    return [(x + x_off, y + y_off) for (y, x) in boundary]


def find_contours(mask: BinaryMask) -> list[Contour]:
    """One contour per 8-connected true-region; ordered by bbox (top, left)."""
    labels, n = ndimage.label(mask.bits, structure=_EIGHT_CONN)
    out = []
    for label_id in range(1, n + 1):
        rows, cols = np.nonzero(labels == label_id)
        y0, y1 = int(rows.min()), int(rows.max())
        x0, x1 = int(cols.min()), int(cols.max())
        region = (labels[y0:y1 + 1, x0:x1 + 1] == label_id)
        boundary = _trace_boundary(region, rows, cols, y0, x0)
        out.append(Contour(
            boundary=boundary,
            area=int(rows.size),
            bbox=(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            _rows=rows, _cols=cols,
        ))
    out.sort(key=lambda c: (c.bbox[1], c.bbox[0]))
    return out


def contour_centroid(c: Contour, mask: BinaryMask) -> tuple[float, float]:
    """Centroid from zeroth/first image moments over the region interior."""
    if c.area < 1:
        raise ValueError("contour has no interior")
    m00 = c._rows.size
    m10 = float(np.sum(c._cols))
    m01 = float(np.sum(c._rows))
    return m10 / m00, m01 / m00


def extract_objects(mask: BinaryMask, d_f: DepthFrame, d_s: float,
                    params: LocalizationParams) -> list[Candidate]:
    """Filter contours by area and aspect ratio; surviving regions become
    candidates with moment centroids and lower-median interior depths."""
    cands = []
    depth = d_f.data
    for contour in find_contours(mask):
        a = contour.area
        _, _, w, h = contour.bbox
        aspect = max(w, h) / (min(w, h) + params.epsilon)
        if not (params.a_min <= a <= params.a_max and aspect <= params.alpha_max):
            continue
        c_x, c_y = contour_centroid(contour, mask)
        vals = np.sort(depth[contour._rows, contour._cols])
        z = int(vals[(vals.size - 1) // 2])  # lower median: an observed sample
        cands.append(Candidate(id=len(cands), c_x=c_x, c_y=c_y, z=z,
                               area=a, bbox=contour.bbox))
    return cands


def localize(raw: Iterable[DepthFrame], fp: FilterParams, lp: LocalizationParams,
             state: TemporalState | None = None) -> tuple[list[Candidate], float]:
    """Full pipeline: denoise -> binary mask -> object extraction."""
    d_f = denoise(raw, fp, state)
    mask, d_s = create_binary_mask(d_f, lp)
    return extract_objects(mask, d_f, d_s, lp), d_s

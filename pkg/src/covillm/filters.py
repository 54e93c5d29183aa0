"""Denoising stage: disparity transforms plus spatial, temporal, and
hole-filling filters, composed as

    disparity_to_depth . hole_fill . temporal . spatial . depth_to_disparity

Filtering happens in disparity space; depth frames only exist at the
pipeline boundaries so millimeter quantization never accumulates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .frames import MAX_DEPTH_MM, DepthFrame, DisparityFrame, FrameError

#: Default depth<->disparity constant, pixel*mm.  Chosen so that the default
#: spatial/temporal edge threshold of 20 disparity units corresponds to a
#: ~16 mm depth step at a 400 mm working distance: surface noise (a few mm)
#: gets smoothed while 20 mm-tall object edges stay sharp.
DEFAULT_DISPARITY_K = 200000.0


class HoleMode(enum.Enum):
    FILL_FROM_LEFT = 0


@dataclass(frozen=True)
class FilterParams:
    spatial_alpha: float = 0.5
    spatial_delta: float = 20.0        # disparity units
    spatial_iterations: int = 2
    temporal_alpha: float = 0.4
    temporal_delta: float = 20.0       # disparity units
    hole_mode: HoleMode = HoleMode.FILL_FROM_LEFT
    disparity_k: float = DEFAULT_DISPARITY_K

    def __post_init__(self):
        if not (0.0 < self.spatial_alpha <= 1.0 and 0.0 < self.temporal_alpha <= 1.0):
            raise ValueError("alpha weights must lie in (0, 1]")
        if self.spatial_delta <= 0 or self.temporal_delta <= 0:
            raise ValueError("edge thresholds must be positive")
        if self.spatial_iterations < 1:
            raise ValueError("spatial_iterations must be >= 1")
        if self.disparity_k <= 0:
            raise ValueError("disparity_k must be positive")


@dataclass
class TemporalState:
    """Per-pixel last-accepted disparity and validity, carried across frames."""

    width: int
    height: int
    value: np.ndarray = field(default=None, repr=False)
    valid: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.value is None:
            self.value = np.zeros((self.height, self.width), dtype=np.float64)
        if self.valid is None:
            self.valid = np.zeros((self.height, self.width), dtype=bool)


def depth_to_disparity(frame: DepthFrame, k: float) -> DisparityFrame:
    """disparity = k / depth on valid pixels; holes stay 0."""
    if k <= 0:
        raise ValueError("k must be positive")
    depth = frame.data.astype(np.float64)
    out = np.zeros_like(depth)
    valid = depth > 0
    out[valid] = k / depth[valid]
    return DisparityFrame(frame.width, frame.height, out)


def disparity_to_depth(frame: DisparityFrame, k: float) -> DepthFrame:
    """depth = round(k / disparity) mm on valid pixels; holes stay 0."""
    if k <= 0:
        raise ValueError("k must be positive")
    disp = frame.data
    out = np.zeros(disp.shape, dtype=np.float64)
    valid = disp > 0
    out[valid] = np.clip(np.rint(k / disp[valid]), 1, MAX_DEPTH_MM)
    return DepthFrame(frame.width, frame.height, out.astype(np.uint16))


def _pass_along_columns(data: np.ndarray, cols: Iterable[int],
                        alpha: float, delta: float) -> None:
    """One directional pass, scanning columns in the given order.  Each row
    carries an EMA state over its valid samples; invalid samples are skipped
    and never written."""
    h = data.shape[0]
    prev = np.zeros(h)
    prev_valid = np.zeros(h, dtype=bool)
    for j in cols:
        cur = data[:, j]
        valid = cur > 0
        smooth = valid & prev_valid & (np.abs(cur - prev) <= delta)
        cur[smooth] = alpha * cur[smooth] + (1.0 - alpha) * prev[smooth]
        prev[valid] = cur[valid]
        prev_valid |= valid


def spatial_filter(frame: DisparityFrame, params: FilterParams) -> DisparityFrame:
    """Edge-preserving smoother: per iteration, four directional 1-D EMA
    passes (left-right, right-left, top-bottom, bottom-top).  Consecutive
    valid samples closer than spatial_delta blend; larger steps (edges)
    pass through untouched."""
    data = frame.data.copy()
    a, d = params.spatial_alpha, params.spatial_delta
    w, h = frame.width, frame.height
    for _ in range(params.spatial_iterations):
        _pass_along_columns(data, range(w), a, d)
        _pass_along_columns(data, range(w - 1, -1, -1), a, d)
        dt = data.T
        _pass_along_columns(dt, range(h), a, d)
        _pass_along_columns(dt, range(h - 1, -1, -1), a, d)
    return DisparityFrame(w, h, data)


def temporal_filter(state: TemporalState, frame: DisparityFrame,
                    params: FilterParams) -> DisparityFrame:
    """Per-pixel EMA across frames with hole persistence.

    valid + close to history -> blend; valid + far -> accept as-is;
    invalid with valid history -> last value persists.  The state is
    updated to the returned frame (single writer per stream).
    """
    if (state.height, state.width) != (frame.height, frame.width):
        raise FrameError("temporal state dimensions do not match the frame")
    cur = frame.data
    valid = cur > 0
    close = valid & state.valid & (np.abs(cur - state.value) <= params.temporal_delta)

    out = np.where(valid, cur, 0.0)
    out[close] = params.temporal_alpha * cur[close] \
        + (1.0 - params.temporal_alpha) * state.value[close]
    persist = ~valid & state.valid
    out[persist] = state.value[persist]

    out_valid = valid | persist
    state.value = np.where(out_valid, out, 0.0)
    state.valid = out_valid
    return DisparityFrame(frame.width, frame.height, out)


def hole_fill(frame: DisparityFrame, mode: HoleMode = HoleMode.FILL_FROM_LEFT) -> DisparityFrame:
    """Scanline fill: every hole takes the nearest valid value to its left in
    the same row.  Rows with an invalid prefix keep those leading holes."""
    if mode is not HoleMode.FILL_FROM_LEFT:
        raise ValueError(f"unsupported hole mode {mode!r}")
    data = frame.data
    valid = data > 0
    cols = np.arange(frame.width)[None, :]
    # index of the nearest valid pixel at-or-left of each position; a leading
    # run of holes maps to column 0, which is itself invalid there (value 0).
    idx = np.where(valid, cols, 0)
    idx = np.maximum.accumulate(idx, axis=1)
    out = np.take_along_axis(data, idx, axis=1)
    return DisparityFrame(frame.width, frame.height, out)


def denoise(raw: Iterable[DepthFrame], params: FilterParams,
            state: TemporalState | None = None) -> DepthFrame:
    """Run the full filter chain over a frame stream; returns the refined
    depth frame for the latest raw frame."""
    result = None
    for frame in raw:
        if state is None:
            state = TemporalState(frame.width, frame.height)
        disp = depth_to_disparity(frame, params.disparity_k)
        disp = spatial_filter(disp, params)
        disp = temporal_filter(state, disp, params)
        result = disp
    if result is None:
        raise ValueError("denoise requires at least one frame")
    filled = hole_fill(result, params.hole_mode)
    return disparity_to_depth(filled, params.disparity_k)

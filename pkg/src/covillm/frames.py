"""Depth and disparity frame containers plus the on-disk frame format.

Depth is stored as integer millimeters with 0 marking an invalid sample
(hole).  Disparity frames hold real values so intermediate filtering does
not quantize; 0 is invalid there too.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAX_DEPTH_MM = 65535
FRAME_MAGIC = b"CVLM"


class FrameError(ValueError):
    """Raised for malformed frames or frame files."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: focal lengths and principal point in pixels."""

    f_x: float
    f_y: float
    p_x: float
    p_y: float
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.f_x <= 0 or self.f_y <= 0:
            raise FrameError("focal lengths must be positive")
        if not (0 <= self.p_x < self.width and 0 <= self.p_y < self.height):
            raise FrameError("principal point outside the image")

    @classmethod
    def default(cls, width: int = 640, height: int = 480, focal: float = 600.0) -> "CameraIntrinsics":
        return cls(f_x=focal, f_y=focal, p_x=width / 2.0, p_y=height / 2.0,
                   width=width, height=height)

    def to_dict(self) -> dict:
        return {"f_x": self.f_x, "f_y": self.f_y, "p_x": self.p_x, "p_y": self.p_y,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(f_x=d["f_x"], f_y=d["f_y"], p_x=d["p_x"], p_y=d["p_y"],
                   width=int(d["width"]), height=int(d["height"]))


@dataclass
class DepthFrame:
    """Row-major integer-millimeter depth samples; 0 = invalid."""

    width: int
    height: int
    data: np.ndarray = field(repr=False)  # (height, width) uint16

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.shape != (self.height, self.width):
            raise FrameError(
                f"data shape {self.data.shape} does not match {self.height}x{self.width}")
        if self.data.dtype != np.uint16:
            if np.any(self.data < 0) or np.any(self.data > MAX_DEPTH_MM):
                raise FrameError("depth samples must lie in [0, 65535] mm")
            self.data = self.data.astype(np.uint16)

    @classmethod
    def constant(cls, width: int, height: int, depth_mm: int) -> "DepthFrame":
        return cls(width, height, np.full((height, width), depth_mm, dtype=np.uint16))

    def valid_mask(self) -> np.ndarray:
        return self.data > 0

    def copy(self) -> "DepthFrame":
        return DepthFrame(self.width, self.height, self.data.copy())


@dataclass
class DisparityFrame:
    """Row-major real disparity values (pixel-disparity units); 0 = invalid."""

    width: int
    height: int
    data: np.ndarray = field(repr=False)  # (height, width) float64

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.height, self.width):
            raise FrameError(
                f"data shape {self.data.shape} does not match {self.height}x{self.width}")
        if np.any(self.data < 0):
            raise FrameError("disparity samples must be non-negative")

    def valid_mask(self) -> np.ndarray:
        return self.data > 0

    def copy(self) -> "DisparityFrame":
        return DisparityFrame(self.width, self.height, self.data.copy())


def write_frame(frame: DepthFrame, path) -> None:
    """Write the binary frame format: "CVLM" magic, u16 width/height (LE),
    then width*height little-endian u16 mm samples."""
    with open(path, "wb") as fh:
        fh.write(FRAME_MAGIC)
        fh.write(struct.pack("<HH", frame.width, frame.height))
        fh.write(frame.data.astype("<u2").tobytes())


def frame_to_bytes(frame: DepthFrame) -> bytes:
    return (FRAME_MAGIC + struct.pack("<HH", frame.width, frame.height)
            + frame.data.astype("<u2").tobytes())


def frame_from_bytes(blob: bytes) -> DepthFrame:
    if len(blob) < 8 or blob[:4] != FRAME_MAGIC:
        raise FrameError("bad frame header")
    width, height = struct.unpack("<HH", blob[4:8])
    expected = 8 + 2 * width * height
    if len(blob) != expected:
        raise FrameError(
            f"truncated frame payload: expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<u2", offset=8).reshape(height, width)
    return DepthFrame(width, height, data.copy())


def read_frame(path) -> DepthFrame:
    with open(path, "rb") as fh:
        return frame_from_bytes(fh.read())


def write_pgm(frame: DepthFrame, path) -> None:
    """Human-readable P2 portable graymap export for eyeballing frames."""
    with open(path, "w") as fh:
        fh.write(f"P2\n{frame.width} {frame.height}\n{MAX_DEPTH_MM}\n")
        for row in frame.data:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")

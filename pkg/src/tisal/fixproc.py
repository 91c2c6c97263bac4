"""Fixation maps, Gaussian-smoothed density maps, and the SALF raster format.

The ground-truth pipeline: discrete fixation records are overlaid into a
per-pixel hit-count map, then smoothed with an isotropic Gaussian whose
standard deviation corresponds to one degree of visual angle. Smoothed maps
(and model predictions) travel as SALF rasters: little-endian binary with a
4-byte magic, u32 width, u32 height, and float32 row-major values.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .data_model import FixationRecord

SALF_MAGIC = b"SALF"

#: Gaussian kernels are cut off at this many standard deviations.
KERNEL_TRUNCATE_SIGMAS = 4.0


class FixprocError(Exception):
    pass


class NoFixations(FixprocError):
    def __init__(self):
        super().__init__("no fixation records to process")


class NonPositiveInput(FixprocError):
    def __init__(self, name: str, value: float):
        super().__init__(f"{name} must be > 0, got {value}")


class BadRaster(FixprocError):
    pass


class Normalization(enum.Enum):
    SUM_ONE = "sum_one"
    MAX_ONE = "max_one"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FixationMap:
    """Integer hit counts per pixel; sum equals the number of records."""

    width: int
    height: int
    hits: np.ndarray

    def __post_init__(self):
        if self.hits.shape != (self.height, self.width):
            raise ValueError(f"hits shape {self.hits.shape} != (height, width)")
        if self.hits.dtype.kind not in "iu" or (self.hits < 0).any():
            raise ValueError("hits must be nonnegative integers")
        _freeze(self.hits)

    @property
    def total(self) -> int:
        return int(self.hits.sum())

    @property
    def usable(self) -> bool:
        return self.total > 0


@dataclass(frozen=True)
class DensityMap:
    """Continuous nonnegative ground-truth map with a declared normalization."""

    width: int
    height: int
    values: np.ndarray
    normalization: Normalization

    def __post_init__(self):
        v = self.values
        if v.shape != (self.height, self.width):
            raise ValueError(f"values shape {v.shape} != (height, width)")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("density values must be finite and nonnegative")
        if self.normalization is Normalization.SUM_ONE and abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"SUM_ONE map sums to {v.sum()}, not 1")
        if self.normalization is Normalization.MAX_ONE and not math.isclose(v.max(), 1.0):
            raise ValueError(f"MAX_ONE map peaks at {v.max()}, not 1")
        _freeze(v)


@dataclass(frozen=True)
class SaliencyMap:
    """Model prediction; finite nonnegative values, no normalization promise."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.shape != (self.height, self.width):
            raise ValueError(f"values shape {v.shape} != (height, width)")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("saliency values must be finite and nonnegative")
        _freeze(v)


def _pixel_index(coord: float, size: int) -> int:
    # round half up, then keep the boundary half-pixel inside the grid
    return min(int(math.floor(coord + 0.5)), size - 1)


def aggregate(records: list[FixationRecord], width: int, height: int) -> FixationMap:
    """Overlay fixation records into a per-pixel hit-count map."""
    if not records:
        raise NoFixations()
    hits = np.zeros((height, width), dtype=np.int64)
    for rec in records:
        if not (0 <= rec.x < width and 0 <= rec.y < height):
            raise ValueError(f"record out of bounds: ({rec.x}, {rec.y})")
        hits[_pixel_index(rec.y, height), _pixel_index(rec.x, width)] += 1
    return FixationMap(width=width, height=height, hits=hits)


def smooth(hits: np.ndarray, sigma_px: float) -> np.ndarray:
    """Gaussian smoothing used for density maps: isotropic sigma in pixels,
    kernel truncated at KERNEL_TRUNCATE_SIGMAS, zero padding at borders."""
    return gaussian_filter(
        hits.astype(np.float64),
        sigma=sigma_px,
        mode="constant",
        cval=0.0,
        truncate=KERNEL_TRUNCATE_SIGMAS,
    )


def density_map(fm: FixationMap, sigma_px: float,
                normalization: Normalization = Normalization.SUM_ONE) -> DensityMap:
    """Smooth a fixation map into a continuous density map."""
    if not fm.usable:
        raise NoFixations()
    if sigma_px <= 0:
        raise NonPositiveInput("sigma_px", sigma_px)
    values = smooth(fm.hits, sigma_px)
    if normalization is Normalization.SUM_ONE:
        values = values / values.sum()
    else:
        values = values / values.max()
    return DensityMap(width=fm.width, height=fm.height, values=values,
                      normalization=normalization)


def degrees_to_sigma(pixels_per_degree: float, degrees: float = 1.0) -> float:
    """Convert a kernel size in degrees of visual angle to pixels."""
    if pixels_per_degree <= 0:
        raise NonPositiveInput("pixels_per_degree", pixels_per_degree)
    if degrees <= 0:
        raise NonPositiveInput("degrees", degrees)
    return pixels_per_degree * degrees


def geometry_to_pixels_per_degree(viewing_distance_cm: float,
                                  screen_width_cm: float,
                                  screen_width_px: int) -> float:
    """Pixels per degree of visual angle from the acquisition geometry:
    2 * distance * tan(0.5 deg) physical centimeters per degree, converted
    at the screen's pixel pitch."""
    for name, value in (("viewing_distance_cm", viewing_distance_cm),
                        ("screen_width_cm", screen_width_cm),
                        ("screen_width_px", screen_width_px)):
        if value <= 0:
            raise NonPositiveInput(name, value)
    cm_per_degree = 2.0 * viewing_distance_cm * math.tan(math.radians(0.5))
    return cm_per_degree * screen_width_px / screen_width_cm


def salf_write(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-D map as a SALF raster (magic, u32 w, u32 h, f32 row-major)."""
    if values.ndim != 2:
        raise BadRaster(f"expected a 2-D array, got shape {values.shape}")
    height, width = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(SALF_MAGIC)
        fh.write(struct.pack("<II", width, height))
        fh.write(payload)


def salf_read(path: str | Path) -> np.ndarray:
    """Read a SALF raster back as a float32 (height, width) array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != SALF_MAGIC:
        raise BadRaster(f"{path}: not a SALF raster")
    width, height = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * width * height
    if len(blob) != expected:
        raise BadRaster(f"{path}: expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=12)
    return data.reshape(height, width).copy()


def to_png(path: str | Path, values: np.ndarray) -> None:
    """Export a map as an 8-bit grayscale PNG, linearly scaled to [0, 255]."""
    lo = float(values.min())
    hi = float(values.max())
    if hi > lo:
        scaled = (values - lo) / (hi - lo) * 255.0
    else:
        scaled = np.zeros_like(values, dtype=np.float64)
    Image.fromarray(np.round(scaled).astype(np.uint8), mode="L").save(path)

"""Image attributes used to characterize dataset content diversity.

Four standard formulations: RMS contrast of the luma channel, the
Hasler-Suesstrunk colorfulness metric, spatial information as the RMS
magnitude of Sobel gradients on luma, and brightness as mean luma
(Rec.601 weights throughout).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import sobel

from .data_model import DatasetManifest

MIN_SIDE = 8

ATTRIBUTE_NAMES = ("contrast", "colorfulness", "spatial_information", "brightness")


class TooSmall(Exception):
    def __init__(self, shape):
        super().__init__(f"image {shape} smaller than {MIN_SIDE}x{MIN_SIDE}")


@dataclass(frozen=True)
class AttributeVector:
    contrast: float
    colorfulness: float
    spatial_information: float
    brightness: float

    def __post_init__(self):
        for name in ATTRIBUTE_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name}={value} must be finite and nonnegative")
        if self.brightness > 255:
            raise ValueError(f"brightness={self.brightness} above 255")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.contrast, self.colorfulness, self.spatial_information, self.brightness)


def _luma(image: np.ndarray) -> np.ndarray:
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    return 0.299 * r + 0.587 * g + 0.114 * b


def compute_attributes(image: np.ndarray) -> AttributeVector:
    """Compute the four attributes for an 8-bit RGB image array (H, W, 3)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an RGB array, got shape {image.shape}")
    if image.shape[0] < MIN_SIDE or image.shape[1] < MIN_SIDE:
        raise TooSmall(image.shape[:2])
    img = image.astype(np.float64)
    luma = _luma(img)

    contrast = float(luma.std())

    rg = img[..., 0] - img[..., 1]
    yb = 0.5 * (img[..., 0] + img[..., 1]) - img[..., 2]
    colorfulness = float(
        math.hypot(rg.std(), yb.std()) + 0.3 * math.hypot(rg.mean(), yb.mean())
    )

    gx = sobel(luma, axis=1)
    gy = sobel(luma, axis=0)
    spatial_information = float(np.sqrt((gx**2 + gy**2).mean()))

    return AttributeVector(
        contrast=contrast,
        colorfulness=colorfulness,
        spatial_information=spatial_information,
        brightness=float(luma.mean()),
    )


def load_image(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def attribute_histogram(manifest: DatasetManifest, bins: int = 20) -> dict:
    """Per-attribute normalized histograms and summary statistics over the
    distinct images of a manifest."""
    if not manifest.pairs:
        raise ValueError("manifest is empty")
    image_paths = sorted({p.image_path for p in manifest.pairs})
    vectors = [compute_attributes(load_image(p)) for p in image_paths]
    out = {"images": len(image_paths), "bins": bins, "attributes": {}}
    for i, name in enumerate(ATTRIBUTE_NAMES):
        values = np.array([v.as_tuple()[i] for v in vectors], dtype=np.float64)
        counts, edges = np.histogram(values, bins=bins)
        out["attributes"][name] = {
            "min": float(values.min()),
            "max": float(values.max()),
            "mean": float(values.mean()),
            "bin_edges": edges.tolist(),
            "bin_mass": (counts / counts.sum()).tolist(),
        }
    return out


def write_attribute_report(report: dict, out_dir: str | Path) -> None:
    """Write the histogram JSON plus one static PNG panel per attribute."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "attributes.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    fig, axes = plt.subplots(1, len(ATTRIBUTE_NAMES), figsize=(4 * len(ATTRIBUTE_NAMES), 3))
    for ax, name in zip(np.atleast_1d(axes), ATTRIBUTE_NAMES):
        entry = report["attributes"][name]
        edges = np.array(entry["bin_edges"])
        mass = np.array(entry["bin_mass"])
        ax.bar(edges[:-1], mass, width=np.diff(edges), align="edge")
        ax.set_title(name)
        ax.set_ylabel("mass")
    fig.tight_layout()
    fig.savefig(out_dir / "attributes.png", dpi=100)
    plt.close(fig)

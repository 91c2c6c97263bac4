"""Synthetic dataset generator for desk-scale runs and the test suite.

Each generated image contains one large bright circle (the bottom-up salient
object) and two small dark squares parked at distinct corner anchors; one
square is the "described" target. Texts follow per-condition templates and
fixation CSVs are sampled from Gaussian blobs planted on the relevant
objects, so every condition has a knowable ground truth:

  pure   - fixations mostly on the circle, no text
  type1  - general scene description, fixations spread widely
  type2  - text names the circle, fixations tightly on it
  type3  - text names the target square's corner, fixations on that square
  type4  - text names both objects, fixations split between them

The two corner squares are visually identical, so under type3 the text is
the only cue that disambiguates which square the viewers were sent to. Image
group 1 carries pure+type1, group 2 carries pure+type2..4, mirroring a
300+300x3 pair layout at images_per_group=300.

Everything is derived from integer seeds; the same spec and seed produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data_model import (
    ConditionType,
    DatasetManifest,
    IoFailure,
    load_manifest,
    save_manifest,
    MANIFEST_VERSION,
    TextImagePair,
)

CORNERS = ("top left", "top right", "bottom left", "bottom right")

GROUP1_CONDITIONS = (ConditionType.PURE, ConditionType.TYPE1_GENERAL)
GROUP2_CONDITIONS = (
    ConditionType.PURE,
    ConditionType.TYPE2_SALIENT,
    ConditionType.TYPE3_NONSALIENT,
    ConditionType.TYPE4_COMMON,
)


@dataclass(frozen=True)
class FixtureSpec:
    out_dir: Path
    images_per_group: int = 2
    subjects: int = 15
    fixations_per_subject: int = 4
    width: int = 64
    height: int = 48
    pixels_per_degree: float = 38.0

    def validate(self) -> None:
        if self.images_per_group < 1:
            raise ValueError("need at least 1 image per condition group")
        if self.subjects < 1 or self.fixations_per_subject < 1:
            raise ValueError("need at least 1 subject and 1 fixation each")
        if self.width < 32 or self.height < 32:
            raise ValueError("fixture images must be at least 32x32")


@dataclass(frozen=True)
class Scene:
    """Planted geometry of one fixture image (pixel coordinates)."""

    circle_cx: float
    circle_cy: float
    circle_r: float
    squares: tuple[tuple[float, float], ...]  # centers, target first
    square_side: float
    target_corner: str

    @property
    def target_bbox(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the described square."""
        cx, cy = self.squares[0]
        h = self.square_side / 2.0
        return (cx - h, cy - h, cx + h, cy + h)


def _corner_anchors(width: int, height: int, inset: float) -> dict[str, tuple[float, float]]:
    return {
        "top left": (inset, inset),
        "top right": (width - inset, inset),
        "bottom left": (inset, height - inset),
        "bottom right": (width - inset, height - inset),
    }


def _make_scene(rng: np.random.Generator, width: int, height: int) -> Scene:
    side = min(width, height) / 6.0
    anchors = _corner_anchors(width, height, inset=1.5 * side)
    corners = list(CORNERS)
    picks = rng.choice(len(corners), size=2, replace=False)
    target_corner = corners[int(picks[0])]
    distractor_corner = corners[int(picks[1])]
    cx = width / 2.0 + rng.uniform(-width / 8.0, width / 8.0)
    cy = height / 2.0 + rng.uniform(-height / 8.0, height / 8.0)
    return Scene(
        circle_cx=float(cx),
        circle_cy=float(cy),
        circle_r=min(width, height) / 4.0,
        squares=(anchors[target_corner], anchors[distractor_corner]),
        square_side=side,
        target_corner=target_corner,
    )


def _render_image(scene: Scene, rng: np.random.Generator,
                  width: int, height: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.zeros((height, width, 3), dtype=np.float64)
    # dark vertical gradient plus mild noise
    base = 30.0 + 25.0 * ys / max(height - 1, 1)
    img += base[..., None]
    img += rng.normal(0.0, 3.0, size=img.shape)

    inside = (xs - scene.circle_cx) ** 2 + (ys - scene.circle_cy) ** 2 <= scene.circle_r**2
    circle_color = np.array([230.0, 160.0 + rng.uniform(0, 60), 40.0])
    img[inside] = circle_color

    half = scene.square_side / 2.0
    square_color = np.array([90.0, 95.0, 110.0])
    for cx, cy in scene.squares:
        box = (np.abs(xs - cx) <= half) & (np.abs(ys - cy) <= half)
        img[box] = square_color

    return np.clip(img, 0, 255).astype(np.uint8)


def _texts_for(scene: Scene) -> dict[ConditionType, str]:
    corner = scene.target_corner
    return {
        ConditionType.PURE: "",
        ConditionType.TYPE1_GENERAL: (
            "a plain scene with one large bright circle and two small dark squares"
        ),
        ConditionType.TYPE2_SALIENT: (
            "the large bright circle in the middle of the picture"
        ),
        ConditionType.TYPE3_NONSALIENT: (
            f"the small dark square in the {corner} corner of the picture"
        ),
        ConditionType.TYPE4_COMMON: (
            f"both the large bright circle and the small dark square in the {corner} corner"
        ),
    }


# mixture weights: (circle, target square, uniform)
_FIXATION_MIX = {
    ConditionType.PURE: (0.85, 0.0, 0.15),
    ConditionType.TYPE1_GENERAL: (0.55, 0.0, 0.45),
    ConditionType.TYPE2_SALIENT: (0.95, 0.0, 0.05),
    ConditionType.TYPE3_NONSALIENT: (0.20, 0.80, 0.0),
    ConditionType.TYPE4_COMMON: (0.45, 0.45, 0.10),
}


def _sample_fixations(scene: Scene, condition: ConditionType,
                      rng: np.random.Generator, spec: FixtureSpec) -> list[tuple[str, float, float]]:
    w_circle, w_square, _ = _FIXATION_MIX[condition]
    sq_cx, sq_cy = scene.squares[0]
    sq_sigma = scene.square_side / 5.0
    out = []
    for s in range(spec.subjects):
        sid = f"s{s:02d}"
        for _ in range(spec.fixations_per_subject):
            u = rng.uniform()
            if u < w_circle:
                x = rng.normal(scene.circle_cx, scene.circle_r / 2.5)
                y = rng.normal(scene.circle_cy, scene.circle_r / 2.5)
            elif u < w_circle + w_square:
                x = rng.normal(sq_cx, sq_sigma)
                y = rng.normal(sq_cy, sq_sigma)
            else:
                x = rng.uniform(0, spec.width)
                y = rng.uniform(0, spec.height)
            x = min(max(x, 0.0), spec.width - 0.01)
            y = min(max(y, 0.0), spec.height - 0.01)
            out.append((sid, x, y))
    return out


def _write_fixation_csv(path: Path, rows: list[tuple[str, float, float]]) -> None:
    lines = ["subject_id,x,y,timestamp_ms,duration_ms"]
    for i, (sid, x, y) in enumerate(rows):
        lines.append(f"{sid},{x:.2f},{y:.2f},{250.0 * i:.1f},200.0")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc


def generate_fixtures(spec: FixtureSpec, seed: int) -> DatasetManifest:
    """Write a complete synthetic dataset under spec.out_dir and return its
    validated manifest. Deterministic: the same spec and seed produce
    byte-identical files."""
    spec.validate()
    root = Path(spec.out_dir)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "fixations").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(str(root), str(exc)) from exc

    pairs: list[TextImagePair] = []
    scenes: dict[str, dict] = {}
    for group_no, conditions in ((1, GROUP1_CONDITIONS), (2, GROUP2_CONDITIONS)):
        for idx in range(spec.images_per_group):
            image_id = f"g{group_no}i{idx:03d}"
            scene_rng = np.random.default_rng([seed, group_no, idx])
            scene = _make_scene(scene_rng, spec.width, spec.height)
            image = _render_image(scene, scene_rng, spec.width, spec.height)
            image_path = root / "images" / f"{image_id}.png"
            try:
                Image.fromarray(image, mode="RGB").save(image_path)
            except OSError as exc:
                raise IoFailure(str(image_path), str(exc)) from exc

            scenes[image_id] = {
                "circle": {"cx": scene.circle_cx, "cy": scene.circle_cy, "r": scene.circle_r},
                "squares": [{"cx": cx, "cy": cy} for cx, cy in scene.squares],
                "square_side": scene.square_side,
                "target_corner": scene.target_corner,
            }

            texts = _texts_for(scene)
            for cond_no, condition in enumerate(conditions):
                pair_id = f"{image_id}_{condition.value}"
                fix_rng = np.random.default_rng([seed, group_no, idx, cond_no])
                rows = _sample_fixations(scene, condition, fix_rng, spec)
                fixation_path = root / "fixations" / f"{pair_id}.csv"
                _write_fixation_csv(fixation_path, rows)
                pairs.append(TextImagePair(
                    pair_id=pair_id,
                    image_path=image_path.resolve(),
                    width=spec.width,
                    height=spec.height,
                    condition=condition,
                    text=texts[condition],
                    fixation_path=fixation_path.resolve(),
                ))

    manifest = DatasetManifest(
        version=MANIFEST_VERSION,
        pixels_per_degree=spec.pixels_per_degree,
        pairs=tuple(pairs),
    )
    save_manifest(manifest, root / "manifest.json", relative_to=root.resolve())
    try:
        (root / "scenes.json").write_text(
            json.dumps(scenes, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoFailure(str(root / "scenes.json"), str(exc)) from exc
    return load_manifest(root / "manifest.json")


def load_scenes(out_dir: str | Path) -> dict[str, Scene]:
    """Read back the planted geometry written next to a generated manifest."""
    raw = json.loads((Path(out_dir) / "scenes.json").read_text(encoding="utf-8"))
    out = {}
    for image_id, entry in raw.items():
        out[image_id] = Scene(
            circle_cx=entry["circle"]["cx"],
            circle_cy=entry["circle"]["cy"],
            circle_r=entry["circle"]["r"],
            squares=tuple((sq["cx"], sq["cy"]) for sq in entry["squares"]),
            square_side=entry["square_side"],
            target_corner=entry["target_corner"],
        )
    return out

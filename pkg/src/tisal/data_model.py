"""Dataset schema: text-image pairs, condition types, manifests, and splits.

A dataset is described by a JSON manifest listing text-image pairs. Each pair
points at an RGB image and a fixation CSV, and carries one of five condition
types: a pure (no text) viewing, or one of four text-description categories.
All values are validated on load and immutable afterwards, so they are safe
to share across threads.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1

#: Fixations this close to the border (as a fraction of the image dimension)
#: are clamped inside; anything further out is dropped as tracker noise.
BORDER_SLACK_FRACTION = 0.05

MIN_TEXT_WORDS = 5
MAX_TEXT_WORDS = 25
MIN_IMAGE_SIDE = 32


class DatasetError(Exception):
    """Base class for dataset validation and IO errors."""


class MissingFile(DatasetError):
    def __init__(self, name: str):
        super().__init__(f"referenced file does not exist: {name}")
        self.name = name


class SchemaViolation(DatasetError):
    def __init__(self, field_name: str, detail: str = ""):
        msg = f"manifest field invalid: {field_name}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.field = field_name


class ConditionTextMismatch(DatasetError):
    def __init__(self, pair_id: str, detail: str):
        super().__init__(f"pair {pair_id!r}: {detail}")
        self.pair_id = pair_id


class EmptyCondition(DatasetError):
    def __init__(self, tag: "ConditionType"):
        super().__init__(
            f"condition stratum {tag.value!r} has fewer than 2 images; cannot split"
        )
        self.tag = tag


class MalformedRow(DatasetError):
    def __init__(self, line_no: int, detail: str = ""):
        super().__init__(f"malformed fixation row at line {line_no}: {detail}")
        self.line_no = line_no


class AllRowsOutOfBounds(DatasetError):
    def __init__(self, path: str):
        super().__init__(f"every fixation row in {path} is out of bounds")


class IoFailure(DatasetError):
    def __init__(self, path: str, detail: str = ""):
        super().__init__(f"io failure at {path}: {detail}")
        self.path = path


class ConditionType(enum.Enum):
    """The five viewing conditions a text-image pair can belong to."""

    PURE = "pure"
    TYPE1_GENERAL = "type1"
    TYPE2_SALIENT = "type2"
    TYPE3_NONSALIENT = "type3"
    TYPE4_COMMON = "type4"

    @property
    def requires_text(self) -> bool:
        return self is not ConditionType.PURE


def _word_count(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class TextImagePair:
    pair_id: str
    image_path: Path
    width: int
    height: int
    condition: ConditionType
    text: str
    fixation_path: Path

    def validate(self) -> None:
        if not self.pair_id:
            raise SchemaViolation("pair_id", "empty")
        if self.width < MIN_IMAGE_SIDE or self.height < MIN_IMAGE_SIDE:
            raise SchemaViolation(
                "width/height", f"{self.width}x{self.height} below {MIN_IMAGE_SIDE}"
            )
        words = _word_count(self.text)
        if self.condition is ConditionType.PURE:
            if words != 0:
                raise ConditionTextMismatch(
                    self.pair_id, f"pure pair carries text {self.text!r}"
                )
        else:
            if not (MIN_TEXT_WORDS <= words <= MAX_TEXT_WORDS):
                raise ConditionTextMismatch(
                    self.pair_id,
                    f"{self.condition.value} text has {words} words, "
                    f"expected {MIN_TEXT_WORDS}-{MAX_TEXT_WORDS}",
                )


@dataclass(frozen=True)
class FixationRecord:
    subject_id: str
    x: float
    y: float
    timestamp_ms: float
    duration_ms: float


@dataclass(frozen=True)
class DatasetManifest:
    version: int
    pixels_per_degree: float
    pairs: tuple[TextImagePair, ...] = field(default_factory=tuple)

    def validate(self, check_files: bool = True) -> None:
        if self.version != MANIFEST_VERSION:
            raise SchemaViolation("version", f"expected {MANIFEST_VERSION}, got {self.version}")
        if not (self.pixels_per_degree > 0) or not math.isfinite(self.pixels_per_degree):
            raise SchemaViolation("pixels_per_degree", "must be a positive finite number")
        seen: set[str] = set()
        for pair in self.pairs:
            pair.validate()
            if pair.pair_id in seen:
                raise SchemaViolation("pair_id", f"duplicate {pair.pair_id!r}")
            seen.add(pair.pair_id)
            if check_files:
                if not pair.image_path.is_file():
                    raise MissingFile(str(pair.image_path))
                if not pair.fixation_path.is_file():
                    raise MissingFile(str(pair.fixation_path))

    def by_condition(self) -> dict[ConditionType, list[TextImagePair]]:
        out: dict[ConditionType, list[TextImagePair]] = {c: [] for c in ConditionType}
        for pair in self.pairs:
            out[pair.condition].append(pair)
        return out

    def pair(self, pair_id: str) -> TextImagePair:
        for p in self.pairs:
            if p.pair_id == pair_id:
                return p
        raise KeyError(pair_id)


_PAIR_FIELDS = {"pair_id", "image_path", "width", "height", "condition", "text", "fixation_path"}


def _pair_from_json(obj: dict, base_dir: Path) -> TextImagePair:
    if not isinstance(obj, dict):
        raise SchemaViolation("pairs", "pair entry is not an object")
    missing = _PAIR_FIELDS - set(obj)
    if missing:
        raise SchemaViolation(sorted(missing)[0], "missing")
    extra = set(obj) - _PAIR_FIELDS
    if extra:
        raise SchemaViolation(sorted(extra)[0], "unknown field")
    try:
        condition = ConditionType(obj["condition"])
    except ValueError:
        raise SchemaViolation("condition", f"unknown tag {obj['condition']!r}") from None
    try:
        width = int(obj["width"])
        height = int(obj["height"])
    except (TypeError, ValueError):
        raise SchemaViolation("width/height", "not integers") from None
    if not isinstance(obj["text"], str) or not isinstance(obj["pair_id"], str):
        raise SchemaViolation("pair_id/text", "not strings")
    return TextImagePair(
        pair_id=obj["pair_id"],
        image_path=(base_dir / obj["image_path"]).resolve(),
        width=width,
        height=height,
        condition=condition,
        text=obj["text"],
        fixation_path=(base_dir / obj["fixation_path"]).resolve(),
    )


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    """Load and validate a manifest JSON file.

    Relative image/fixation paths are resolved against the manifest's own
    directory. Raises MissingFile, SchemaViolation, or ConditionTextMismatch
    on the first invalid entry.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaViolation("<document>", str(exc)) from exc
    if not isinstance(raw, dict):
        raise SchemaViolation("<document>", "top level is not an object")
    for key in ("version", "pixels_per_degree", "pairs"):
        if key not in raw:
            raise SchemaViolation(key, "missing")
    if not isinstance(raw["pairs"], list):
        raise SchemaViolation("pairs", "not a list")
    base_dir = path.parent
    pairs = tuple(_pair_from_json(p, base_dir) for p in raw["pairs"])
    manifest = DatasetManifest(
        version=int(raw["version"]),
        pixels_per_degree=float(raw["pixels_per_degree"]),
        pairs=pairs,
    )
    manifest.validate(check_files=check_files)
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path,
                  relative_to: str | Path | None = None) -> None:
    """Write a manifest as JSON. With relative_to set, file paths are stored
    relative to that directory (the fixture generator uses the output root so
    generated trees are relocatable)."""
    path = Path(path)

    def _fmt(p: Path) -> str:
        if relative_to is not None:
            return p.relative_to(Path(relative_to).resolve()).as_posix()
        return str(p)

    doc = {
        "version": manifest.version,
        "pixels_per_degree": manifest.pixels_per_degree,
        "pairs": [
            {
                "pair_id": p.pair_id,
                "image_path": _fmt(p.image_path),
                "width": p.width,
                "height": p.height,
                "condition": p.condition.value,
                "text": p.text,
                "fixation_path": _fmt(p.fixation_path),
            }
            for p in manifest.pairs
        ],
    }
    try:
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc


def split_dataset(manifest: DatasetManifest, train_fraction: float,
                  seed: int) -> tuple[list[str], list[str]]:
    """Split pair ids into train/test, stratified and free of image leakage.

    Underlying images (pairs sharing image_path) are the unit of assignment:
    every condition of one image lands on the same side. Images are grouped
    by their set of conditions and each group is split at train_fraction, so
    per-condition proportions follow the requested ratio. Deterministic for a
    given seed.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if not manifest.pairs:
        raise ValueError("manifest is empty")

    by_image: dict[Path, list[TextImagePair]] = {}
    for pair in manifest.pairs:
        by_image.setdefault(pair.image_path, []).append(pair)

    strata: dict[tuple[str, ...], list[Path]] = {}
    for image, pairs in by_image.items():
        signature = tuple(sorted({p.condition.value for p in pairs}))
        strata.setdefault(signature, []).append(image)

    rng = random.Random(seed)
    train_ids: list[str] = []
    test_ids: list[str] = []
    for signature in sorted(strata):
        images = sorted(strata[signature])
        if len(images) < 2:
            raise EmptyCondition(ConditionType(signature[0]))
        rng.shuffle(images)
        n_train = min(max(round(train_fraction * len(images)), 1), len(images) - 1)
        train_images = set(images[:n_train])
        for image in images:
            bucket = train_ids if image in train_images else test_ids
            bucket.extend(p.pair_id for p in by_image[image])
    return sorted(train_ids), sorted(test_ids)


def load_fixations(path: str | Path, width: int, height: int) -> list[FixationRecord]:
    """Parse a fixation CSV, clamping slight border overshoot and dropping
    far outliers.

    A coordinate within BORDER_SLACK_FRACTION of the image dimension outside
    the valid range is clamped to the nearest in-bounds value (trackers emit
    slight overshoot); anything further out is dropped and counted in a
    logged warning tally. Raises MalformedRow on unparseable rows and
    AllRowsOutOfBounds if no row survives.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc
    if not lines or lines[0].strip() != "subject_id,x,y,timestamp_ms,duration_ms":
        raise MalformedRow(1, "missing or wrong header")

    x_slack = BORDER_SLACK_FRACTION * width
    y_slack = BORDER_SLACK_FRACTION * height
    x_max = math.nextafter(float(width), 0.0)
    y_max = math.nextafter(float(height), 0.0)

    records: list[FixationRecord] = []
    dropped = 0
    n_rows = 0
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        n_rows += 1
        fields = line.split(",")
        if len(fields) != 5:
            raise MalformedRow(line_no, f"expected 5 fields, got {len(fields)}")
        try:
            rec = FixationRecord(
                subject_id=fields[0],
                x=float(fields[1]),
                y=float(fields[2]),
                timestamp_ms=float(fields[3]),
                duration_ms=float(fields[4]),
            )
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc)) from exc
        if rec.duration_ms < 0:
            raise MalformedRow(line_no, "negative duration")
        if (-x_slack <= rec.x <= width + x_slack) and (-y_slack <= rec.y <= height + y_slack):
            records.append(replace(
                rec,
                x=min(max(rec.x, 0.0), x_max),
                y=min(max(rec.y, 0.0), y_max),
            ))
        else:
            dropped += 1
    if dropped:
        logger.warning("%s: dropped %d/%d out-of-bounds fixation rows", path, dropped, n_rows)
    if n_rows and not records:
        raise AllRowsOutOfBounds(str(path))
    return records

"""The seven saliency evaluation metrics and their batch report.

Location-based metrics (AUC-Judd, shuffled AUC, NSS, information gain) score
the prediction at discrete fixated pixels; distribution-based metrics (CC,
SIM, KL) compare the prediction and the smoothed ground truth as continuous
distributions. Conventions follow the common saliency-benchmark reference
code: natural-log KL with epsilon 2.2204e-16 in the KL(gt || pred)
direction, base-2 information gain against a center-prior baseline, AUC
thresholds swept over the saliency values at fixated pixels with ties
counted as above-threshold, and trapezoidal ROC integration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fixproc import DensityMap, FixationMap, Normalization, SaliencyMap

#: Epsilon used by KL and IG, the customary double-precision machine epsilon.
EPSILON = 2.2204e-16

DEFAULT_SAUC_SHUFFLES = 100
IG_BASELINE_ID = "center-prior-v1"

_U64 = (1 << 64) - 1


class MetricError(Exception):
    pass


class ShapeMismatch(MetricError):
    def __init__(self, a, b):
        super().__init__(f"shape mismatch: {a} vs {b}")


class ZeroVariance(MetricError):
    def __init__(self, which: str):
        super().__init__(f"{which} map has zero variance")
        self.which = which


class ZeroMass(MetricError):
    def __init__(self, which: str):
        super().__init__(f"{which} map has zero mass")
        self.which = which


class NoFixations(MetricError):
    def __init__(self):
        super().__init__("fixation map has no fixations")


class AllPixelsFixated(MetricError):
    def __init__(self):
        super().__init__("every pixel is fixated; AUC needs negatives")


class EmptyPool(MetricError):
    def __init__(self):
        super().__init__("negatives pool contains no fixation locations")


def _check_shapes(a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatch((a.height, a.width), (b.height, b.width))


def _values(m) -> np.ndarray:
    return np.asarray(m.values, dtype=np.float64)


def cc(pred: SaliencyMap, gt: DensityMap) -> float:
    """Pearson linear correlation between the two maps over all pixels."""
    _check_shapes(pred, gt)
    p = _values(pred).ravel()
    g = _values(gt).ravel()
    dp = p - p.mean()
    dg = g - g.mean()
    var_p = float((dp * dp).mean())
    var_g = float((dg * dg).mean())
    if var_p == 0.0:
        raise ZeroVariance("pred")
    if var_g == 0.0:
        raise ZeroVariance("gt")
    cov = float((dp * dg).mean())
    return cov / math.sqrt(var_p * var_g)


def nss(pred: SaliencyMap, fm: FixationMap) -> float:
    """Mean z-scored saliency at fixated pixels, weighted by hit count."""
    _check_shapes(pred, fm)
    if not fm.usable:
        raise NoFixations()
    p = _values(pred)
    std = float(p.std())
    if std == 0.0:
        raise ZeroVariance("pred")
    z = (p - p.mean()) / std
    hits = fm.hits
    return float((z * hits).sum() / hits.sum())


def _roc_area(pos_vals: np.ndarray, neg_vals: np.ndarray) -> float:
    """Trapezoidal ROC area with thresholds at the distinct positive values
    plus the two infinities; a sample counts as detected when value >=
    threshold."""
    thresholds = np.unique(pos_vals)[::-1]
    tpr = [0.0]
    fpr = [0.0]
    for th in thresholds:
        tpr.append(float((pos_vals >= th).mean()))
        fpr.append(float((neg_vals >= th).mean()))
    tpr.append(1.0)
    fpr.append(1.0)
    return float(np.trapezoid(tpr, fpr))


def auc_judd(pred: SaliencyMap, fm: FixationMap) -> float:
    """ROC area with fixated pixels as positives and all others as negatives."""
    _check_shapes(pred, fm)
    pos_mask = fm.hits > 0
    if not pos_mask.any():
        raise NoFixations()
    if pos_mask.all():
        raise AllPixelsFixated()
    p = _values(pred)
    return _roc_area(p[pos_mask], p[~pos_mask])


class SplitMix64:
    """The documented sAUC sampling stream.

    state_{k+1} = (state_k + 0x9E3779B97F4A7C15) mod 2^64, and each output is
    state_{k+1} mixed by: z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
    z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31 (all mod 2^64).
    Pool indices are next() mod pool_size, drawn shuffle-major then
    sample-minor, so any implementation can replicate the draws.
    """

    def __init__(self, seed: int):
        self.state = seed & _U64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _U64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
        return z ^ (z >> 31)


def _pool_locations(pool: list[FixationMap]) -> np.ndarray:
    """All fixation locations in the pool as (row, col) pairs, one entry per
    recorded fixation (hit counts expand into repeats)."""
    chunks = []
    for fm in pool:
        rows, cols = np.nonzero(fm.hits)
        counts = fm.hits[rows, cols]
        chunks.append(np.repeat(np.stack([rows, cols], axis=1), counts, axis=0))
    if not chunks:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(chunks, axis=0)


def shuffled_auc(pred: SaliencyMap, fm: FixationMap,
                 negatives_pool: list[FixationMap],
                 shuffles: int = DEFAULT_SAUC_SHUFFLES, seed: int = 0) -> float:
    """AUC with negatives resampled from other images' fixation locations.

    Each shuffle draws (with replacement, via the SplitMix64 stream) as many
    pool locations as there are fixated pixels, scores the prediction there
    as negatives, and the mean ROC area over shuffles is returned.
    """
    _check_shapes(pred, fm)
    if shuffles < 1:
        raise ValueError("shuffles must be >= 1")
    pos_mask = fm.hits > 0
    if not pos_mask.any():
        raise NoFixations()
    locations = _pool_locations(negatives_pool)
    if locations.shape[0] == 0:
        raise EmptyPool()
    p = _values(pred)
    pos_vals = p[pos_mask]
    n_pos = pos_vals.size
    rng = SplitMix64(seed)
    total = 0.0
    for _ in range(shuffles):
        idx = [rng.next() % locations.shape[0] for _ in range(n_pos)]
        neg_vals = p[locations[idx, 0], locations[idx, 1]]
        total += _roc_area(pos_vals, neg_vals)
    return total / shuffles


def _normalized(m, which: str) -> np.ndarray:
    v = _values(m)
    total = v.sum()
    if total <= 0:
        raise ZeroMass(which)
    return v / total


def kl_div(pred: SaliencyMap, gt: DensityMap) -> float:
    """KL(gt || pred) over sum-normalized maps, natural log, epsilon-guarded."""
    _check_shapes(pred, gt)
    p = _normalized(pred, "pred")
    g = _normalized(gt, "gt")
    total = float((g * np.log(EPSILON + g / (p + EPSILON))).sum())
    # the epsilon guard can leave an O(n*eps) negative residue for equal maps
    return max(total, 0.0)


def sim(pred: SaliencyMap, gt: DensityMap) -> float:
    """Histogram intersection of the two sum-normalized maps."""
    _check_shapes(pred, gt)
    p = _normalized(pred, "pred")
    g = _normalized(gt, "gt")
    return float(np.minimum(p, g).sum())


def info_gain(pred: SaliencyMap, fm: FixationMap, baseline: DensityMap) -> float:
    """Mean log2 advantage of the prediction over a baseline at fixations."""
    _check_shapes(pred, fm)
    _check_shapes(pred, baseline)
    if not fm.usable:
        raise NoFixations()
    p = _normalized(pred, "pred")
    b = _normalized(baseline, "baseline")
    gain = np.log2(p + EPSILON) - np.log2(b + EPSILON)
    hits = fm.hits
    return float((gain * hits).sum() / hits.sum())


def center_prior(width: int, height: int, sigma: float | None = None) -> DensityMap:
    """The default IG baseline: an isotropic Gaussian at the image center
    with sigma = min(width, height) / 3, normalized to sum one."""
    if sigma is None:
        sigma = min(width, height) / 3.0
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    values = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2))
    return DensityMap(width=width, height=height, values=values / values.sum(),
                      normalization=Normalization.SUM_ONE)


@dataclass(frozen=True)
class EvalConfig:
    sauc_shuffles: int = DEFAULT_SAUC_SHUFFLES
    sauc_seed: int = 0
    ig_baseline_id: str = IG_BASELINE_ID


@dataclass(frozen=True)
class MetricReport:
    """Scores for one (prediction, ground truth) pair. Metrics that could not
    be computed are None here and carry their reason in `failures`; they are
    never silently reported as zero."""

    auc_j: float | None
    sauc: float | None
    cc: float | None
    ig: float | None
    kl: float | None
    nss: float | None
    sim: float | None
    sauc_seed: int
    sauc_shuffles: int
    ig_baseline_id: str
    failures: dict[str, str] = field(default_factory=dict)

    _BOUNDS = {
        "auc_j": (0.0, 1.0),
        "sauc": (0.0, 1.0),
        "cc": (-1.0, 1.0),
        "sim": (0.0, 1.0),
        "kl": (0.0, math.inf),
    }

    def __post_init__(self):
        for name in ("auc_j", "sauc", "cc", "ig", "kl", "nss", "sim"):
            value = getattr(self, name)
            if value is None:
                if name not in self.failures:
                    raise ValueError(f"{name} absent without a recorded reason")
                continue
            if not math.isfinite(value):
                raise ValueError(f"{name} is not finite: {value}")
            lo, hi = self._BOUNDS.get(name, (-math.inf, math.inf))
            if not (lo - 1e-9 <= value <= hi + 1e-9):
                raise ValueError(f"{name}={value} outside [{lo}, {hi}]")

    def to_json(self) -> dict:
        doc = {
            name: getattr(self, name)
            for name in ("auc_j", "sauc", "cc", "ig", "kl", "nss", "sim")
        }
        doc.update(
            sauc_seed=self.sauc_seed,
            sauc_shuffles=self.sauc_shuffles,
            ig_baseline_id=self.ig_baseline_id,
            failures=dict(self.failures),
        )
        return doc


METRIC_COLUMNS = ("auc_j", "sauc", "cc", "ig", "kl", "nss", "sim")


def evaluate_all(pred: SaliencyMap, fm: FixationMap, gt: DensityMap,
                 pool: list[FixationMap], cfg: EvalConfig = EvalConfig(),
                 baseline: DensityMap | None = None) -> MetricReport:
    """Run all seven metrics, recording any per-metric failure by reason."""
    _check_shapes(pred, fm)
    _check_shapes(pred, gt)
    if baseline is None:
        baseline = center_prior(pred.width, pred.height)
    results: dict[str, float | None] = {}
    failures: dict[str, str] = {}

    def attempt(name: str, fn):
        try:
            results[name] = fn()
        except MetricError as exc:
            results[name] = None
            failures[name] = f"{type(exc).__name__}: {exc}"

    attempt("auc_j", lambda: auc_judd(pred, fm))
    attempt("sauc", lambda: shuffled_auc(pred, fm, pool, cfg.sauc_shuffles, cfg.sauc_seed))
    attempt("cc", lambda: cc(pred, gt))
    attempt("ig", lambda: info_gain(pred, fm, baseline))
    attempt("kl", lambda: kl_div(pred, gt))
    attempt("nss", lambda: nss(pred, fm))
    attempt("sim", lambda: sim(pred, gt))
    return MetricReport(
        auc_j=results["auc_j"], sauc=results["sauc"], cc=results["cc"],
        ig=results["ig"], kl=results["kl"], nss=results["nss"], sim=results["sim"],
        sauc_seed=cfg.sauc_seed, sauc_shuffles=cfg.sauc_shuffles,
        ig_baseline_id=cfg.ig_baseline_id, failures=failures,
    )


def write_report_json(path: str | Path, pair_id: str, report: MetricReport) -> None:
    doc = {"pair_id": pair_id, **report.to_json()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_reports_csv(path: str | Path,
                      rows: list[tuple[str, str, MetricReport]]) -> None:
    """Batch CSV: pair_id, condition, then the seven metric columns. Absent
    metrics serialize as empty cells."""
    lines = ["pair_id,condition," + ",".join(METRIC_COLUMNS)]
    for pair_id, condition, report in rows:
        cells = [pair_id, condition]
        for name in METRIC_COLUMNS:
            value = getattr(report, name)
            cells.append("" if value is None else f"{value:.6f}")
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

"""Experiment protocols: per-condition finetuning, joint finetuning, and
joint from-scratch training, each evaluated on held-out splits averaged over
seeded repeats, plus the head-count and loss-function ablation grids.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import ConditionType, DatasetManifest, load_fixations, split_dataset
from .attributes import load_image
from .fixproc import FixationMap, Normalization, aggregate, degrees_to_sigma, density_map
from .metrics import METRIC_COLUMNS, EvalConfig, MetricReport, evaluate_all
from .model import ModelConfig, TGSalNet, load_checkpoint
from .training import Protocol, TrainConfig, TrainingError, build_examples, train

AVERAGED_LABEL = "averaged"

#: Column headers in the customary report order; arrows mark the better
#: direction (KL is the only dissimilarity metric).
COLUMN_HEADERS = ("AUC-J↑", "sAUC↑", "CC↑", "IG↑",
                  "KL↓", "NSS↑", "SIM↑")


class MissingCheckpoint(TrainingError):
    def __init__(self, protocol: Protocol):
        super().__init__(
            f"{protocol.value} requires a pretraining checkpoint path "
            "(run a desk-scale pretrain first)"
        )


@dataclass
class ResultRow:
    label: str
    condition: str
    n_pairs: int
    repeats: int
    means: dict[str, float | None]
    absent: dict[str, int] = field(default_factory=dict)


def manifest_subset(manifest: DatasetManifest, pair_ids: set[str]) -> DatasetManifest:
    pairs = tuple(p for p in manifest.pairs if p.pair_id in pair_ids)
    return dataclasses.replace(manifest, pairs=pairs)


def evaluate_pairs(net: TGSalNet, manifest: DatasetManifest, pair_ids: list[str],
                   eval_cfg: EvalConfig = EvalConfig(), sigma_degrees: float = 1.0,
                   blank_text: bool = False) -> dict[str, tuple[str, MetricReport]]:
    """Score the model on each listed pair. The sAUC negatives pool for one
    pair holds the fixation maps of the *other underlying images* in the
    evaluated set."""
    sigma = degrees_to_sigma(manifest.pixels_per_degree, sigma_degrees)
    pairs = [manifest.pair(pid) for pid in pair_ids]
    fms: dict[str, FixationMap] = {}
    for pair in pairs:
        records = load_fixations(pair.fixation_path, pair.width, pair.height)
        fms[pair.pair_id] = aggregate(records, pair.width, pair.height)

    out: dict[str, tuple[str, MetricReport]] = {}
    for pair in pairs:
        fm = fms[pair.pair_id]
        gt = density_map(fm, sigma, Normalization.SUM_ONE)
        pool = [fms[other.pair_id] for other in pairs
                if other.image_path != pair.image_path]
        image = load_image(pair.image_path)
        pred = net.predict(image, "" if blank_text else pair.text)
        report = evaluate_all(pred, fm, gt, pool, eval_cfg)
        out[pair.pair_id] = (pair.condition.value, report)
    return out


def summarize(label: str, condition: str,
              reports: list[MetricReport], repeats: int = 1) -> ResultRow:
    means: dict[str, float | None] = {}
    absent: dict[str, int] = {}
    for name in METRIC_COLUMNS:
        values = [getattr(r, name) for r in reports]
        present = [v for v in values if v is not None]
        absent_count = len(values) - len(present)
        if absent_count:
            absent[name] = absent_count
        means[name] = float(np.mean(present)) if present else None
    return ResultRow(label=label, condition=condition, n_pairs=len(reports),
                     repeats=repeats, means=means, absent=absent)


def _merge_rows(label: str, condition: str, rows: list[ResultRow]) -> ResultRow:
    """Average per-repeat rows into one reported row."""
    means: dict[str, float | None] = {}
    absent: dict[str, int] = {}
    for name in METRIC_COLUMNS:
        values = [r.means[name] for r in rows if r.means[name] is not None]
        means[name] = float(np.mean(values)) if values else None
        count = sum(r.absent.get(name, 0) for r in rows)
        if count:
            absent[name] = count
    return ResultRow(label=label, condition=condition,
                     n_pairs=sum(r.n_pairs for r in rows) // max(len(rows), 1),
                     repeats=len(rows), means=means, absent=absent)


def _train_and_eval(manifest: DatasetManifest, model_cfg: ModelConfig,
                    train_cfg: TrainConfig, train_ids: list[str],
                    test_ids: list[str], checkpoint: Path | None,
                    eval_cfg: EvalConfig, sigma_degrees: float,
                    blank_text: bool = False):
    net = load_checkpoint(checkpoint) if checkpoint is not None else None
    examples = build_examples(manifest, model_cfg, train_ids, sigma_degrees)
    result = train(examples, model_cfg, train_cfg, net=net, blank_text=blank_text)
    scored = evaluate_pairs(result.net, manifest, test_ids, eval_cfg,
                            sigma_degrees, blank_text=blank_text)
    return result, scored


def run_protocol(protocol: Protocol, manifest: DatasetManifest,
                 model_cfg: ModelConfig, train_cfg: TrainConfig,
                 pretrain_checkpoint: str | Path | None = None,
                 train_fraction: float = 0.8,
                 eval_cfg: EvalConfig = EvalConfig(),
                 sigma_degrees: float = 1.0,
                 repeats: int | None = None) -> list[ResultRow]:
    """Run one experiment protocol end to end and return per-condition rows
    (plus an averaged row for joint protocols), each the mean over seeded
    repeats of held-out evaluation."""
    if protocol in (Protocol.INDIVIDUAL_FINETUNE, Protocol.JOINT_FINETUNE):
        if pretrain_checkpoint is None:
            raise MissingCheckpoint(protocol)
        pretrain_checkpoint = Path(pretrain_checkpoint)
        if not pretrain_checkpoint.is_file():
            raise MissingCheckpoint(protocol)
    else:
        pretrain_checkpoint = None
    repeats = train_cfg.repeats if repeats is None else repeats

    present = [c for c in ConditionType if any(p.condition is c for p in manifest.pairs)]
    per_condition: dict[str, list[ResultRow]] = {c.value: [] for c in present}
    averaged: list[ResultRow] = []

    for r in range(repeats):
        repeat_cfg = dataclasses.replace(train_cfg, seed=train_cfg.seed + r)
        if protocol is Protocol.INDIVIDUAL_FINETUNE:
            for condition in present:
                ids = {p.pair_id for p in manifest.pairs if p.condition is condition}
                sub = manifest_subset(manifest, ids)
                train_ids, test_ids = split_dataset(sub, train_fraction, repeat_cfg.seed)
                _, scored = _train_and_eval(
                    sub, model_cfg, repeat_cfg, train_ids, test_ids,
                    pretrain_checkpoint, eval_cfg, sigma_degrees)
                reports = [rep for _, rep in scored.values()]
                per_condition[condition.value].append(
                    summarize(protocol.value, condition.value, reports))
        else:
            train_ids, test_ids = split_dataset(manifest, train_fraction, repeat_cfg.seed)
            _, scored = _train_and_eval(
                manifest, model_cfg, repeat_cfg, train_ids, test_ids,
                pretrain_checkpoint, eval_cfg, sigma_degrees)
            all_reports = []
            for condition in present:
                reports = [rep for cond, rep in scored.values()
                           if cond == condition.value]
                if reports:
                    per_condition[condition.value].append(
                        summarize(protocol.value, condition.value, reports))
                all_reports.extend(reports)
            averaged.append(summarize(protocol.value, AVERAGED_LABEL, all_reports))

    rows = [_merge_rows(protocol.value, cond, cond_rows)
            for cond, cond_rows in per_condition.items() if cond_rows]
    if averaged:
        rows.append(_merge_rows(protocol.value, AVERAGED_LABEL, averaged))
    return rows


def run_ablation_grid(manifest: DatasetManifest, base_cfg: ModelConfig,
                      train_cfg: TrainConfig,
                      heads: tuple[int, ...] = (2, 4, 8),
                      losses: tuple[str, ...] = ("l1", "l2", "cc_mse"),
                      train_fraction: float = 0.8,
                      eval_cfg: EvalConfig = EvalConfig(),
                      sigma_degrees: float = 1.0,
                      repeats: int = 1) -> list[ResultRow]:
    """Head-count and loss-function grids, each run as a joint from-scratch
    protocol and reported as one averaged row per variant."""
    rows: list[ResultRow] = []
    for n_heads in heads:
        cfg = dataclasses.replace(base_cfg, attention_heads=n_heads)
        got = run_protocol(Protocol.JOINT_SCRATCH, manifest, cfg, train_cfg,
                           train_fraction=train_fraction, eval_cfg=eval_cfg,
                           sigma_degrees=sigma_degrees, repeats=repeats)
        row = next(r for r in got if r.condition == AVERAGED_LABEL)
        row.label = f"heads={n_heads}"
        rows.append(row)
    for kind in losses:
        cfg_t = dataclasses.replace(train_cfg, loss_kind=kind)
        got = run_protocol(Protocol.JOINT_SCRATCH, manifest, base_cfg, cfg_t,
                           train_fraction=train_fraction, eval_cfg=eval_cfg,
                           sigma_degrees=sigma_degrees, repeats=repeats)
        row = next(r for r in got if r.condition == AVERAGED_LABEL)
        row.label = f"loss={kind}"
        rows.append(row)
    return rows


def _fmt(value: float | None) -> str:
    return "absent" if value is None else f"{value:.4f}"


def render_markdown(rows: list[ResultRow], title: str = "Results") -> str:
    lines = [f"## {title}", ""]
    lines.append("| Run | Condition | " + " | ".join(COLUMN_HEADERS) + " |")
    lines.append("|" + "---|" * (2 + len(COLUMN_HEADERS)))
    for row in rows:
        cells = [row.label, row.condition]
        cells += [_fmt(row.means[name]) for name in METRIC_COLUMNS]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    return "\n".join(lines)


def rows_to_csv(path: str | Path, rows: list[ResultRow]) -> None:
    lines = ["label,condition,n_pairs,repeats," + ",".join(METRIC_COLUMNS)]
    for row in rows:
        cells = [row.label, row.condition, str(row.n_pairs), str(row.repeats)]
        for name in METRIC_COLUMNS:
            value = row.means[name]
            cells.append("" if value is None else f"{value:.6f}")
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

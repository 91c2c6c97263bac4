"""Loss, learning-rate schedule, and the training loop.

The training objective is alpha * (1 - CC) + beta * MSE between the
predicted map and the ground-truth density map, with alpha=0.06 and beta=1
by default. The CC term's denominator is floored at a small epsilon during
training so early constant-output phases do not blow up; evaluation-time CC
(in the metrics module) has no such guard and errors on zero variance
instead. L1 and plain MSE objectives are available for the loss-ablation
grid. The learning rate anneals from 1e-4 to 1e-5 on a cosine.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.nn import functional as F

from .data_model import DatasetManifest, TextImagePair, load_fixations
from .fixproc import aggregate, degrees_to_sigma, smooth
from .model import ModelConfig, TGSalNet
from .attributes import load_image
from .model.net import preprocess_images


class TrainingError(Exception):
    pass


class ShapeMismatch(TrainingError):
    def __init__(self, a, b):
        super().__init__(f"shape mismatch: {a} vs {b}")


class Divergence(TrainingError):
    def __init__(self, step: int):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


class Protocol(enum.Enum):
    INDIVIDUAL_FINETUNE = "individual_finetune"
    JOINT_FINETUNE = "joint_finetune"
    JOINT_SCRATCH = "joint_scratch"


LOSS_KINDS = ("cc_mse", "l1", "l2")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.06
    beta: float = 1.0
    variance_epsilon: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("loss weights cannot both be zero")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr_start: float = 1e-4
    lr_end: float = 1e-5
    schedule: str = "cosine"
    batch_size: int = 8
    seed: int = 0
    protocol: Protocol = Protocol.JOINT_SCRATCH
    repeats: int = 10
    loss_kind: str = "cc_mse"
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.lr_end > self.lr_start:
            raise ValueError("lr_end must not exceed lr_start")
        if self.repeats < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs, batch_size, and repeats must be positive")
        if self.schedule != "cosine":
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")


def correlation(pred: torch.Tensor, gt: torch.Tensor,
                variance_epsilon: float = 0.0) -> torch.Tensor:
    """Per-sample Pearson correlation, averaged over the batch. The epsilon
    floors the denominator so constant maps yield 0 instead of NaN."""
    p = pred.reshape(pred.shape[0], -1)
    g = gt.reshape(gt.shape[0], -1)
    dp = p - p.mean(dim=1, keepdim=True)
    dg = g - g.mean(dim=1, keepdim=True)
    cov = (dp * dg).mean(dim=1)
    denom = torch.sqrt((dp * dp).mean(dim=1) * (dg * dg).mean(dim=1))
    denom = denom.clamp_min(variance_epsilon) if variance_epsilon > 0 else denom
    return (cov / denom).clamp(-1.0, 1.0).mean()


def loss(pred: torch.Tensor, gt: torch.Tensor,
         cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """alpha * (1 - CC) + beta * MSE over (B, ...) map batches."""
    if pred.shape != gt.shape:
        raise ShapeMismatch(tuple(pred.shape), tuple(gt.shape))
    cc = correlation(pred, gt, cfg.variance_epsilon)
    mse = ((gt - pred) ** 2).mean()
    return cfg.alpha * (1.0 - cc) + cfg.beta * mse


def l1_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    if pred.shape != gt.shape:
        raise ShapeMismatch(tuple(pred.shape), tuple(gt.shape))
    return (gt - pred).abs().mean()


def l2_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    if pred.shape != gt.shape:
        raise ShapeMismatch(tuple(pred.shape), tuple(gt.shape))
    return ((gt - pred) ** 2).mean()


def make_loss(kind: str, cfg: LossConfig):
    if kind == "cc_mse":
        return lambda pred, gt: loss(pred, gt, cfg)
    if kind == "l1":
        return l1_loss
    if kind == "l2":
        return l2_loss
    raise ValueError(f"unknown loss kind {kind!r}")


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Cosine annealing from lr_start to lr_end; exact at both endpoints."""
    if not (0 <= step <= total_steps) or total_steps < 1:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    factor = 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
    return cfg.lr_start * factor + cfg.lr_end * (1.0 - factor)


@dataclass(frozen=True)
class TrainingExample:
    pair_id: str
    condition: str
    image: torch.Tensor  # (3, S, S) preprocessed
    target: torch.Tensor  # (1, S, S) max-normalized density at input size
    text: str


def build_examples(manifest: DatasetManifest, model_cfg: ModelConfig,
                   pair_ids: list[str] | None = None,
                   sigma_degrees: float = 1.0) -> list[TrainingExample]:
    """Tensorize pairs: images resized to the model input, targets built by
    smoothing the fixation map at one degree of visual angle, resizing, and
    peak-normalizing so the sigmoid head regresses onto [0, 1]."""
    wanted = set(pair_ids) if pair_ids is not None else None
    sigma = degrees_to_sigma(manifest.pixels_per_degree, sigma_degrees)
    size = model_cfg.input_size
    examples = []
    for pair in manifest.pairs:
        if wanted is not None and pair.pair_id not in wanted:
            continue
        image = load_image(pair.image_path)
        x = preprocess_images(image)
        x = F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)
        records = load_fixations(pair.fixation_path, pair.width, pair.height)
        fm = aggregate(records, pair.width, pair.height)
        density = smooth(fm.hits, sigma)
        target = torch.from_numpy(density).to(torch.float32)[None, None]
        target = F.interpolate(target, size=(size, size), mode="bilinear",
                               align_corners=False)
        peak = target.max()
        if peak > 0:
            target = target / peak
        examples.append(TrainingExample(
            pair_id=pair.pair_id,
            condition=pair.condition.value,
            image=x[0],
            target=target[0],
            text=pair.text,
        ))
    return examples


@dataclass
class TrainResult:
    net: TGSalNet
    history: list[dict]

    def write_history(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.history:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def train(examples: list[TrainingExample], model_cfg: ModelConfig,
          train_cfg: TrainConfig, net: TGSalNet | None = None,
          blank_text: bool = False,
          val_fn=None) -> TrainResult:
    """Run the optimization schedule over tensorized examples.

    Deterministic for a given seed: model init, data order, and optimizer
    state all flow from train_cfg.seed. With blank_text the text input is
    emptied (the pure-image training mode). val_fn, when given, is called
    with the net after each epoch and must return a JSON-able dict merged
    into that epoch's history record. Raises Divergence when the loss stops
    being finite.
    """
    if not examples:
        raise ValueError("no training examples")
    torch.manual_seed(train_cfg.seed)
    if net is None:
        net = TGSalNet(model_cfg)
    if net.cfg.freeze_encoders:
        for param in net.encoder_parameters():
            param.requires_grad_(False)
    trainable = [p for p in net.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=train_cfg.lr_start)
    loss_fn = make_loss(train_cfg.loss_kind, train_cfg.loss)

    order_rng = random.Random(train_cfg.seed)
    steps_per_epoch = math.ceil(len(examples) / train_cfg.batch_size)
    total_steps = train_cfg.epochs * steps_per_epoch

    images = torch.stack([ex.image for ex in examples])
    targets = torch.stack([ex.target for ex in examples])
    texts = ["" if blank_text else ex.text for ex in examples]

    history: list[dict] = []
    step = 0
    net.train()
    for epoch in range(train_cfg.epochs):
        indices = list(range(len(examples)))
        order_rng.shuffle(indices)
        epoch_loss = 0.0
        epoch_lr = lr_at(step, total_steps, train_cfg)
        for start in range(0, len(indices), train_cfg.batch_size):
            batch = indices[start:start + train_cfg.batch_size]
            lr = lr_at(step, total_steps, train_cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            pred = net(images[batch], [texts[i] for i in batch])
            batch_loss = loss_fn(pred, targets[batch])
            if not torch.isfinite(batch_loss):
                raise Divergence(step)
            optimizer.zero_grad()
            batch_loss.backward()
            optimizer.step()
            epoch_loss += float(batch_loss.detach()) * len(batch)
            step += 1
        record = {
            "epoch": epoch,
            "lr": epoch_lr,
            "train_loss": epoch_loss / len(examples),
        }
        if val_fn is not None:
            record.update(val_fn(net))
        history.append(record)
    net.eval()
    return TrainResult(net=net, history=history)


def training_correlation(net: TGSalNet, examples: list[TrainingExample],
                         blank_text: bool = False) -> float:
    """Mean per-example CC between predictions and targets, for capacity and
    overfit checks."""
    net.eval()
    with torch.no_grad():
        images = torch.stack([ex.image for ex in examples])
        texts = ["" if blank_text else ex.text for ex in examples]
        pred = net(images, texts)
        targets = torch.stack([ex.target for ex in examples])
        total = 0.0
        for i in range(len(examples)):
            total += float(correlation(pred[i:i + 1], targets[i:i + 1]))
    return total / len(examples)

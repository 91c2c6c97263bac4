"""Hierarchical image encoder.

A stack of stride-2 stages produces a feature pyramid whose spatial size
halves per level; the terminal stage feeds an attention-pooling block (a
residual self-attention over the deepest grid, replacing any terminal max
pooling) that emits the bottleneck feature. The desk profile is a small CNN
trained from scratch; the production profile mirrors a ResNet-50-shaped
stack and expects externally supplied pretrained weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import ModelConfig
from .fusion import MultiHeadAttention


class BadShape(Exception):
    def __init__(self, detail: str):
        super().__init__(detail)


@dataclass(frozen=True)
class ImageFeaturePyramid:
    """Encoder outputs: levels ordered shallow-to-deep plus the bottleneck."""

    levels: tuple[torch.Tensor, ...]
    bottleneck: torch.Tensor

    def __post_init__(self):
        if len(self.levels) < 2:
            raise BadShape("pyramid needs at least 2 levels")
        for shallow, deep in zip(self.levels, self.levels[1:]):
            expect = (-(-shallow.shape[-2] // 2), -(-shallow.shape[-1] // 2))
            if tuple(deep.shape[-2:]) != expect:
                raise BadShape(
                    f"level {tuple(deep.shape[-2:])} does not halve {tuple(shallow.shape[-2:])}"
                )
        if tuple(self.bottleneck.shape[-2:]) != tuple(self.levels[-1].shape[-2:]):
            raise BadShape("bottleneck must match the deepest level's grid")

    @property
    def spatial_sizes(self) -> tuple[int, ...]:
        return tuple(level.shape[-1] for level in self.levels)


def _group_norm(channels: int) -> nn.GroupNorm:
    for groups in (8, 4, 2, 1):
        if channels % groups == 0:
            return nn.GroupNorm(groups, channels)
    raise AssertionError("unreachable")


def _conv_block(in_ch: int, out_ch: int, stride: int, kernel: int = 3) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2),
        _group_norm(out_ch),
        nn.ReLU(inplace=True),
    )


class AttentionPool(nn.Module):
    """Residual self-attention over the deepest grid's positions."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(channels, channels, channels, heads,
                                       zero_init_out=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        v = x.flatten(2).transpose(1, 2)
        v = v + self.attn(v, v)
        return v.transpose(1, 2).reshape(b, c, h, w)


class ToyImageEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.encoder_widths
        stem_kernel = 7 if cfg.stem_stride == 4 else 3
        self.stem = _conv_block(3, widths[0], cfg.stem_stride, kernel=stem_kernel)
        self.stages = nn.ModuleList(
            nn.Sequential(
                _conv_block(widths[i - 1], widths[i], stride=2),
                _conv_block(widths[i], widths[i], stride=1),
            )
            for i in range(1, len(widths))
        )
        self.attnpool = AttentionPool(widths[-1], cfg.attnpool_heads)

    def forward(self, images: torch.Tensor) -> ImageFeaturePyramid:
        if images.ndim != 4 or images.shape[1] != 3:
            raise BadShape(f"expected (B, 3, H, W), got {tuple(images.shape)}")
        if images.shape[-1] != self.cfg.input_size or images.shape[-2] != self.cfg.input_size:
            raise BadShape(
                f"expected {self.cfg.input_size}px square input, got {tuple(images.shape[-2:])}"
            )
        levels = [self.stem(images)]
        for stage in self.stages:
            levels.append(stage(levels[-1]))
        return ImageFeaturePyramid(levels=tuple(levels),
                                   bottleneck=self.attnpool(levels[-1]))

"""Feature fusion blocks of the decoder.

Three block families, all upsampling by 2x per level:

  - global fusion: the sentence feature is broadcast over the bottleneck
    grid, concatenated channel-wise, and upsampled;
  - local fusion: the skip and upsampled features are concatenated and
    convolved, then a residual self-attention over spatial positions and a
    residual cross-attention against the word features refine the grid
    before upsampling;
  - refinement: the same concat-conv-upsample path with no attention and no
    text input, used at high resolutions where attention would be wasteful.

Upsampling is bilinear interpolation followed by a convolution (transposed
convolutions underperform here). Attention output projections start at zero,
so every attention block is exactly the identity at initialization.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F


class DimMismatch(Exception):
    def __init__(self, detail: str):
        super().__init__(detail)


class MultiHeadAttention(nn.Module):
    """Plain multi-head scaled dot-product attention.

    Queries come from a grid of q_dim vectors, keys/values from kv_dim
    vectors; with zero_init_out the output projection starts at zero so a
    residual caller is the identity at initialization.
    """

    def __init__(self, q_dim: int, kv_dim: int, width: int, heads: int,
                 zero_init_out: bool = False):
        super().__init__()
        if width % heads:
            raise DimMismatch(f"heads {heads} must divide attention width {width}")
        self.heads = heads
        self.head_dim = width // heads
        self.q_proj = nn.Linear(q_dim, width)
        self.k_proj = nn.Linear(kv_dim, width)
        self.v_proj = nn.Linear(kv_dim, width)
        self.out_proj = nn.Linear(width, q_dim)
        if zero_init_out:
            nn.init.zeros_(self.out_proj.weight)
            nn.init.zeros_(self.out_proj.bias)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, query: torch.Tensor, kv: torch.Tensor,
                key_mask: torch.Tensor | None = None,
                need_weights: bool = False):
        if query.ndim != 3 or kv.ndim != 3:
            raise DimMismatch("attention inputs must be (B, N, C)")
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(kv))
        v = self._split(self.v_proj(kv))
        scores = q @ k.transpose(-2, -1) * self.head_dim**-0.5
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        weights = scores.softmax(dim=-1)
        out = weights @ v
        out = out.transpose(1, 2).reshape(query.shape[0], query.shape[1], -1)
        out = self.out_proj(out)
        if need_weights:
            return out, weights
        return out


class FusionAttention(nn.Module):
    """Residual self-attention over spatial positions followed by residual
    cross-attention with the word features as keys/values."""

    def __init__(self, width: int, text_dim: int, heads: int):
        super().__init__()
        self.self_attn = MultiHeadAttention(width, width, width, heads,
                                            zero_init_out=True)
        self.cross_attn = MultiHeadAttention(width, text_dim, width, heads,
                                             zero_init_out=True)

    def forward(self, v: torch.Tensor, t_local: torch.Tensor,
                text_mask: torch.Tensor | None = None) -> torch.Tensor:
        if v.shape[0] != t_local.shape[0]:
            raise DimMismatch("grid and text batches differ")
        v = v + self.self_attn(v, v)
        v = v + self.cross_attn(v, t_local, key_mask=text_mask)
        return v


def _group_norm(channels: int) -> nn.GroupNorm:
    for groups in (8, 4, 2, 1):
        if channels % groups == 0:
            return nn.GroupNorm(groups, channels)
    raise AssertionError("unreachable")


class UpsampleBlock(nn.Module):
    """Bilinear 2x followed by a 3x3 convolution."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm = _group_norm(out_ch)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.act(self.norm(self.conv(x)))


class GlobalTextFusion(nn.Module):
    """Concatenate the broadcast sentence feature onto the bottleneck grid
    and upsample. With use_text=False the text slice is removed entirely
    (the "w/o global" ablation)."""

    def __init__(self, bottleneck_ch: int, text_dim: int, out_ch: int,
                 use_text: bool = True):
        super().__init__()
        self.use_text = use_text
        in_ch = bottleneck_ch + (text_dim if use_text else 0)
        self.up = UpsampleBlock(in_ch, out_ch)

    def forward(self, bottleneck: torch.Tensor,
                t_global: torch.Tensor | None) -> torch.Tensor:
        if self.use_text:
            if t_global is None:
                raise DimMismatch("global fusion requires a sentence feature")
            if t_global.shape[0] != bottleneck.shape[0]:
                raise DimMismatch("bottleneck and text batches differ")
            b, _, h, w = bottleneck.shape
            tiled = t_global[:, :, None, None].expand(b, t_global.shape[1], h, w)
            bottleneck = torch.cat([bottleneck, tiled], dim=1)
        return self.up(bottleneck)


class _ConcatConv(nn.Module):
    def __init__(self, up_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(up_ch + skip_ch, out_ch, 3, padding=1)
        self.norm = _group_norm(out_ch)
        self.act = nn.ReLU(inplace=True)

    def forward(self, f_up: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        if f_up.shape[-2:] != skip.shape[-2:]:
            raise DimMismatch(
                f"decoder features {tuple(f_up.shape[-2:])} and skip "
                f"{tuple(skip.shape[-2:])} must share spatial size"
            )
        return self.act(self.norm(self.conv(torch.cat([f_up, skip], dim=1))))


class LocalTextFusion(nn.Module):
    """Skip fusion with text attention: conv(concat), attention against the
    word features, then upsample. With use_attention=False the attention
    module is removed (the "w/o local" ablation) and the block degrades to
    the plain refinement path."""

    def __init__(self, up_ch: int, skip_ch: int, width: int, text_dim: int,
                 heads: int, use_attention: bool = True):
        super().__init__()
        self.fuse = _ConcatConv(up_ch, skip_ch, width)
        self.attn = FusionAttention(width, text_dim, heads) if use_attention else None
        self.up = UpsampleBlock(width, width)

    def forward(self, f_up: torch.Tensor, skip: torch.Tensor,
                t_local: torch.Tensor | None,
                text_mask: torch.Tensor | None = None) -> torch.Tensor:
        x = self.fuse(f_up, skip)
        if self.attn is not None:
            if t_local is None:
                raise DimMismatch("local fusion requires word features")
            b, c, h, w = x.shape
            v = x.flatten(2).transpose(1, 2)
            v = self.attn(v, t_local, text_mask)
            x = v.transpose(1, 2).reshape(b, c, h, w)
        return self.up(x)


class Refinement(nn.Module):
    """Attention-free decoder level: conv(concat) then upsample. No text
    pathway exists by construction."""

    def __init__(self, up_ch: int, skip_ch: int, width: int):
        super().__init__()
        self.fuse = _ConcatConv(up_ch, skip_ch, width)
        self.up = UpsampleBlock(width, width)

    def forward(self, f_up: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        return self.up(self.fuse(f_up, skip))

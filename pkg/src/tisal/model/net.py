"""The full text-guided saliency network.

Composition: hierarchical image encoder -> global text fusion at the
bottleneck -> local text fusion at the configured low-resolution decoder
levels -> attention-free refinement at the remaining levels -> 1-channel
sigmoid head at the input resolution, rescaled back to the original image
size. Passing an empty text routes through the learned null embedding and
is the pure-image mode of the same network.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..fixproc import SaliencyMap
from .config import ModelConfig
from .encoder import ImageFeaturePyramid, ToyImageEncoder
from .fusion import GlobalTextFusion, LocalTextFusion, Refinement, UpsampleBlock
from .text import TextFeatures, TokenSequence, ToyTextEncoder


def preprocess_images(images: np.ndarray) -> torch.Tensor:
    """uint8 (B, H, W, 3) or (H, W, 3) -> float32 (B, 3, H, W) in [-1, 1]."""
    if images.ndim == 3:
        images = images[None]
    x = torch.from_numpy(np.ascontiguousarray(images)).to(torch.float32) / 255.0
    return (x - 0.5).div_(0.5).permute(0, 3, 1, 2)


class TGSalNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.image_encoder = ToyImageEncoder(cfg)
        self.text_encoder = ToyTextEncoder(cfg)
        widths = cfg.encoder_widths
        self.gtff = GlobalTextFusion(
            widths[-1], cfg.text_embed_dim, cfg.decoder_width,
            use_text=cfg.use_global_fusion,
        )
        stages: list[nn.Module] = []
        for k in range(cfg.n_skip_stages):
            skip_ch = widths[cfg.n_levels - 2 - k]
            if k in cfg.ltff_levels:
                stages.append(LocalTextFusion(
                    cfg.decoder_width, skip_ch, cfg.decoder_width,
                    cfg.text_embed_dim, cfg.attention_heads,
                    use_attention=cfg.use_local_fusion,
                ))
            else:
                stages.append(Refinement(cfg.decoder_width, skip_ch, cfg.decoder_width))
        self.stages = nn.ModuleList(stages)
        self.extra_up = nn.ModuleList(
            UpsampleBlock(cfg.decoder_width, cfg.decoder_width)
            for _ in range(cfg.n_extra_upsamples)
        )
        self.head = nn.Conv2d(cfg.decoder_width, 1, 1)

    @property
    def uses_text(self) -> bool:
        return self.cfg.use_global_fusion or (
            self.cfg.use_local_fusion and bool(self.cfg.ltff_levels)
        )

    def encoder_parameters(self):
        """Parameters covered by the freeze-encoders flag (IFE plus TFE)."""
        yield from self.image_encoder.parameters()
        yield from self.text_encoder.parameters()

    def encode_image(self, images: torch.Tensor) -> ImageFeaturePyramid:
        return self.image_encoder(images)

    def encode_text(self, text: str) -> tuple[TokenSequence, TextFeatures]:
        sequences, features = self.text_encoder([text])
        return sequences[0], features

    def decode(self, pyramid: ImageFeaturePyramid,
               text: TextFeatures | None) -> torch.Tensor:
        t_global = text.global_vec if (text is not None and self.cfg.use_global_fusion) else None
        x = self.gtff(pyramid.bottleneck, t_global)
        for k, stage in enumerate(self.stages):
            skip = pyramid.levels[self.cfg.n_levels - 2 - k]
            if isinstance(stage, LocalTextFusion):
                t_local = text.local if text is not None else None
                t_mask = text.mask if text is not None else None
                x = stage(x, skip, t_local, t_mask)
            else:
                x = stage(x, skip)
        for up in self.extra_up:
            x = up(x)
        return torch.sigmoid(self.head(x))

    def forward(self, images: torch.Tensor,
                texts: list[str] | None = None) -> torch.Tensor:
        """images: (B, 3, S, S) preprocessed; texts: one string per image
        (None or "" selects the pure-image mode). Returns (B, 1, S, S) maps
        with values in (0, 1)."""
        pyramid = self.encode_image(images)
        text_features = None
        if self.uses_text:
            if texts is None:
                texts = [""] * images.shape[0]
            if len(texts) != images.shape[0]:
                raise ValueError("one text per image required")
            _, text_features = self.text_encoder(texts)
            if text_features.global_vec.dtype != images.dtype:
                text_features = TextFeatures(
                    global_vec=text_features.global_vec.to(images.dtype),
                    local=text_features.local.to(images.dtype),
                    mask=text_features.mask,
                    is_null=text_features.is_null,
                )
        return self.decode(pyramid, text_features)

    @torch.no_grad()
    def predict(self, image: np.ndarray, text: str = "") -> SaliencyMap:
        """End-to-end inference on one uint8 RGB image at its native size."""
        was_training = self.training
        self.eval()
        try:
            height, width = image.shape[:2]
            x = preprocess_images(image)
            x = F.interpolate(x, size=(self.cfg.input_size, self.cfg.input_size),
                              mode="bilinear", align_corners=False)
            out = self.forward(x, [text])
            out = F.interpolate(out, size=(height, width), mode="bilinear",
                                align_corners=False)
            values = out[0, 0].to(torch.float64).cpu().numpy()
        finally:
            self.train(was_training)
        return SaliencyMap(width=width, height=height, values=values)

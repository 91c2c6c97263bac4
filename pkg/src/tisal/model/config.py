"""Network configuration.

The architecture is profile-agnostic: the same fusion decoder runs on top of
a production-shaped encoder stack (224px input, ResNet-style widths) or the
small desk profile used for CPU tests. Pretrained backbone weights are not
bundled; encoders are pluggable and the desk profile trains from scratch.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

VALID_HEADS = (2, 4, 8)
MAX_TEXT_TOKENS = 77


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 224
    stem_stride: int = 4
    encoder_widths: tuple[int, ...] = (64, 128, 256, 512)
    decoder_width: int = 64
    attention_heads: int = 8
    attnpool_heads: int = 1
    ltff_levels: tuple[int, ...] = (0, 1)
    text_embed_dim: int = 64
    text_vocab: int = 512
    text_layers: int = 2
    max_text_tokens: int = MAX_TEXT_TOKENS
    use_global_fusion: bool = True
    use_local_fusion: bool = True
    freeze_encoders: bool = False

    def __post_init__(self):
        if self.attention_heads not in VALID_HEADS:
            raise ValueError(f"attention_heads must be one of {VALID_HEADS}")
        if self.decoder_width % self.attention_heads:
            raise ValueError(
                f"attention_heads={self.attention_heads} must divide "
                f"decoder_width={self.decoder_width}"
            )
        if len(self.encoder_widths) < 2:
            raise ValueError("need at least 2 encoder levels")
        if self.stem_stride not in (2, 4):
            raise ValueError("stem_stride must be 2 or 4")
        total_stride = self.stem_stride * 2 ** (len(self.encoder_widths) - 1)
        if self.input_size % total_stride:
            raise ValueError(
                f"input_size={self.input_size} not divisible by the encoder "
                f"stride {total_stride}"
            )
        last_stage = self.n_skip_stages - 1
        for level in self.ltff_levels:
            if not (0 <= level < last_stage):
                raise ValueError(
                    f"ltff level {level} invalid: the final decoder stage "
                    f"({last_stage}) and beyond must stay attention-free"
                )
        if self.text_embed_dim < 1 or self.text_vocab < 3 or self.text_layers < 1:
            raise ValueError("text encoder dimensions must be positive")

    @property
    def n_levels(self) -> int:
        return len(self.encoder_widths)

    @property
    def n_skip_stages(self) -> int:
        """Decoder stages that consume an encoder skip connection."""
        return self.n_levels - 1

    @property
    def n_extra_upsamples(self) -> int:
        """Skip-less 2x stages needed to get back to the input resolution."""
        return {2: 0, 4: 1}[self.stem_stride]

    @property
    def bottleneck_size(self) -> int:
        return self.input_size // (self.stem_stride * 2 ** (self.n_levels - 1))

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "ModelConfig":
        kwargs = dict(doc)
        for key in ("encoder_widths", "ltff_levels"):
            kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def desk_config(**overrides) -> ModelConfig:
    """Small CPU-friendly profile: 32px input, 3-stage encoder, tiny text
    transformer with a hashing tokenizer."""
    base = dict(
        input_size=32,
        stem_stride=2,
        encoder_widths=(16, 24, 32),
        decoder_width=24,
        attention_heads=8,
        ltff_levels=(0,),
        text_embed_dim=24,
        text_vocab=256,
        text_layers=2,
    )
    base.update(overrides)
    return ModelConfig(**base)


def production_config(**overrides) -> ModelConfig:
    """Production-shaped profile (224px, 4-stage encoder). Weights are still
    randomly initialized; swap in pretrained encoders before relying on it."""
    base = dict(
        input_size=224,
        stem_stride=4,
        encoder_widths=(256, 512, 1024, 2048),
        decoder_width=256,
        attention_heads=8,
        ltff_levels=(0, 1),
        text_embed_dim=512,
        text_vocab=49408,
        text_layers=4,
    )
    base.update(overrides)
    return ModelConfig(**base)

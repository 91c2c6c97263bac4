from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, desk_config, production_config
from .encoder import ImageFeaturePyramid, ToyImageEncoder
from .fusion import (
    FusionAttention,
    GlobalTextFusion,
    LocalTextFusion,
    MultiHeadAttention,
    Refinement,
)
from .net import TGSalNet, preprocess_images
from .text import TextFeatures, TokenSequence, ToyTextEncoder, tokenize

__all__ = [
    "FusionAttention",
    "GlobalTextFusion",
    "ImageFeaturePyramid",
    "LocalTextFusion",
    "ModelConfig",
    "MultiHeadAttention",
    "Refinement",
    "TGSalNet",
    "TextFeatures",
    "TokenSequence",
    "ToyImageEncoder",
    "ToyTextEncoder",
    "desk_config",
    "load_checkpoint",
    "preprocess_images",
    "production_config",
    "save_checkpoint",
    "tokenize",
]

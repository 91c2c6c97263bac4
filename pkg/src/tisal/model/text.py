"""Text tokenization and the pluggable text encoder.

The desk tokenizer hashes words with FNV-1a, so it needs no vocabulary file
and stays deterministic across processes. Token id 0 is reserved for the
empty-text null sequence and id 1 for padding; an empty text encodes through
a learned null embedding rather than a zero vector, which keeps the
pure-image mode inside the same network.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import torch
from torch import nn

from .config import ModelConfig

NULL_TOKEN = 0
PAD_TOKEN = 1
_FIRST_WORD_TOKEN = 2

_PUNCT = str.maketrans("", "", string.punctuation)


class DimMismatch(Exception):
    def __init__(self, detail: str):
        super().__init__(detail)


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[int, ...]

    def __post_init__(self):
        if not (1 <= len(self.tokens)):
            raise ValueError("token sequence must be non-empty")

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def is_null(self) -> bool:
        return self.tokens == (NULL_TOKEN,)


@dataclass(frozen=True)
class TextFeatures:
    """Sentence-level and word-level features for a batch of texts.

    global_vec: (B, d_t); local: (B, L_max, d_t); mask: (B, L_max) with True
    at real token positions; is_null: per-text flags.
    """

    global_vec: torch.Tensor
    local: torch.Tensor
    mask: torch.Tensor
    is_null: tuple[bool, ...]


def _fnv1a(word: str) -> int:
    h = 0xCBF29CE484222325
    for byte in word.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def tokenize(text: str, vocab: int, max_tokens: int = 77) -> TokenSequence:
    """Hash words to token ids, truncating to max_tokens. The empty text maps
    to the reserved null sequence of length 1."""
    words = [w.translate(_PUNCT) for w in text.lower().split()]
    words = [w for w in words if w]
    if not words:
        return TokenSequence((NULL_TOKEN,))
    span = vocab - _FIRST_WORD_TOKEN
    ids = [_FIRST_WORD_TOKEN + _fnv1a(w) % span for w in words[:max_tokens]]
    return TokenSequence(tuple(ids))


class _TextBlock(nn.Module):
    """Pre-norm transformer block: self-attention plus a small MLP."""

    def __init__(self, dim: int, heads: int = 2):
        super().__init__()
        if dim % heads:
            raise DimMismatch(f"text heads {heads} must divide dim {dim}")
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim))

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, key_padding_mask=pad_mask, need_weights=False)
        x = x + attn_out
        return x + self.mlp(self.norm2(x))


class ToyTextEncoder(nn.Module):
    """A small bidirectional transformer over hashed tokens.

    The word features are position-dependent (learned positional embeddings),
    and the sentence feature is the mean over real token positions. No
    dropout, so encoding is deterministic.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        dim = cfg.text_embed_dim
        self.token_embed = nn.Embedding(cfg.text_vocab, dim)
        self.pos_embed = nn.Parameter(torch.zeros(cfg.max_text_tokens, dim))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(_TextBlock(dim) for _ in range(cfg.text_layers))
        self.norm = nn.LayerNorm(dim)

    def forward(self, texts: list[str]) -> tuple[list[TokenSequence], TextFeatures]:
        sequences = [tokenize(t, self.cfg.text_vocab, self.cfg.max_text_tokens)
                     for t in texts]
        longest = max(seq.length for seq in sequences)
        device = self.pos_embed.device
        ids = torch.full((len(sequences), longest), PAD_TOKEN, dtype=torch.long,
                         device=device)
        mask = torch.zeros(len(sequences), longest, dtype=torch.bool, device=device)
        for i, seq in enumerate(sequences):
            ids[i, : seq.length] = torch.tensor(seq.tokens, dtype=torch.long,
                                                device=device)
            mask[i, : seq.length] = True

        x = self.token_embed(ids) + self.pos_embed[:longest]
        pad_mask = ~mask
        for block in self.blocks:
            x = block(x, pad_mask)
        x = self.norm(x)

        weights = mask.to(x.dtype)
        global_vec = (x * weights.unsqueeze(-1)).sum(dim=1) / weights.sum(
            dim=1, keepdim=True
        )
        return sequences, TextFeatures(
            global_vec=global_vec,
            local=x,
            mask=mask,
            is_null=tuple(seq.is_null for seq in sequences),
        )

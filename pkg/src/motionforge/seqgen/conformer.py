"""Conformer encoder with Transformer-XL style relative positional attention.

Length-preserving, full (non-causal) self-attention. All normalization is
position-wise so padded positions, when masked, cannot influence real ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ConfigError

PAPER_SPEECH_WIDTH = 512
PAPER_GENERATOR_WIDTH = 1024
DESK_WIDTH_DIVISOR = 4


@dataclass
class ConformerConfig:
    attention_dim: int
    heads: int = 2
    layers: int = 2
    dropout: float = 0.2

    def __post_init__(self):
        if self.attention_dim % self.heads:
            raise ConfigError(
                f"attention_dim {self.attention_dim} not divisible by heads {self.heads}"
            )

    @classmethod
    def speech_encoder(cls, desk: bool = True) -> "ConformerConfig":
        width = PAPER_SPEECH_WIDTH // DESK_WIDTH_DIVISOR if desk else PAPER_SPEECH_WIDTH
        return cls(attention_dim=width, heads=2, layers=4, dropout=0.2)

    @classmethod
    def motion_generator(cls, desk: bool = True) -> "ConformerConfig":
        width = PAPER_GENERATOR_WIDTH // DESK_WIDTH_DIVISOR if desk else PAPER_GENERATOR_WIDTH
        return cls(attention_dim=width, heads=2, layers=2, dropout=0.2)


class RelPositionalEncoding(nn.Module):
    """Sinusoidal embeddings for relative offsets T-1 .. -(T-1)."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, length: int, dtype, device) -> torch.Tensor:
        pos = torch.arange(length, dtype=dtype, device=device).unsqueeze(1)
        div = torch.exp(
            torch.arange(0, self.dim, 2, dtype=dtype, device=device)
            * -(math.log(10000.0) / self.dim)
        )
        pe_pos = torch.zeros(length, self.dim, dtype=dtype, device=device)
        pe_neg = torch.zeros(length, self.dim, dtype=dtype, device=device)
        pe_pos[:, 0::2] = torch.sin(pos * div)
        pe_pos[:, 1::2] = torch.cos(pos * div)
        pe_neg[:, 0::2] = torch.sin(-pos * div)
        pe_neg[:, 1::2] = torch.cos(-pos * div)
        pe = torch.cat([pe_pos.flip(0), pe_neg[1:]], dim=0)
        return pe.unsqueeze(0)  # (1, 2L-1, D)


class RelPositionAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.d_k = dim // heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.pos = nn.Linear(dim, dim, bias=False)
        self.out = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)
        self.bias_u = nn.Parameter(torch.zeros(heads, self.d_k))
        self.bias_v = nn.Parameter(torch.zeros(heads, self.d_k))

    @staticmethod
    def _rel_shift(x: torch.Tensor) -> torch.Tensor:
        # (B, H, T, 2T-1) -> (B, H, T, T), aligning relative offsets per query.
        b, h, t, _ = x.shape
        zero = x.new_zeros(b, h, t, 1)
        padded = torch.cat([zero, x], dim=-1).view(b, h, 2 * t, t)
        return padded[:, :, 1:].reshape(b, h, t, 2 * t - 1)[:, :, :, :t]

    def forward(self, x: torch.Tensor, pos_emb: torch.Tensor, mask=None) -> torch.Tensor:
        b, t, _ = x.shape
        q = self.q(x).view(b, t, self.heads, self.d_k).transpose(1, 2)
        k = self.k(x).view(b, t, self.heads, self.d_k).transpose(1, 2)
        v = self.v(x).view(b, t, self.heads, self.d_k).transpose(1, 2)
        p = self.pos(pos_emb).view(1, -1, self.heads, self.d_k).transpose(1, 2)

        content = (q + self.bias_u[None, :, None, :]) @ k.transpose(-2, -1)
        position = self._rel_shift((q + self.bias_v[None, :, None, :]) @ p.transpose(-2, -1))
        scores = (content + position) / math.sqrt(self.d_k)
        if mask is not None:
            scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        attn = self.drop(torch.softmax(scores, dim=-1))
        merged = (attn @ v).transpose(1, 2).reshape(b, t, -1)
        return self.out(merged)


class _FeedForward(nn.Module):
    def __init__(self, dim: int, dropout: float, expansion: int = 4):
        super().__init__()
        self.net = nn.Sequential(
            nn.LayerNorm(dim),
            nn.Linear(dim, dim * expansion),
            nn.SiLU(),
            nn.Dropout(dropout),
            nn.Linear(dim * expansion, dim),
            nn.Dropout(dropout),
        )

    def forward(self, x):
        return self.net(x)


class _ConvModule(nn.Module):
    def __init__(self, dim: int, dropout: float, kernel: int = 7):
        super().__init__()
        self.norm_in = nn.LayerNorm(dim)
        self.pointwise_in = nn.Conv1d(dim, 2 * dim, 1)
        self.depthwise = nn.Conv1d(dim, dim, kernel, padding=kernel // 2, groups=dim)
        self.norm_mid = nn.LayerNorm(dim)
        self.pointwise_out = nn.Conv1d(dim, dim, 1)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, mask=None):
        y = self.norm_in(x)
        y = y.transpose(1, 2)
        y = F.glu(self.pointwise_in(y), dim=1)
        if mask is not None:
            # Masked positions must look exactly like the zero padding the
            # depthwise conv would see past the sequence end.
            y = y * mask[:, None, :]
        y = self.depthwise(y).transpose(1, 2)
        y = F.silu(self.norm_mid(y)).transpose(1, 2)
        y = self.pointwise_out(y).transpose(1, 2)
        return self.drop(y)


class ConformerBlock(nn.Module):
    def __init__(self, cfg: ConformerConfig):
        super().__init__()
        self.ff1 = _FeedForward(cfg.attention_dim, cfg.dropout)
        self.norm_attn = nn.LayerNorm(cfg.attention_dim)
        self.attn = RelPositionAttention(cfg.attention_dim, cfg.heads, cfg.dropout)
        self.attn_drop = nn.Dropout(cfg.dropout)
        self.conv = _ConvModule(cfg.attention_dim, cfg.dropout)
        self.ff2 = _FeedForward(cfg.attention_dim, cfg.dropout)
        self.norm_out = nn.LayerNorm(cfg.attention_dim)

    def forward(self, x, pos_emb, mask=None):
        x = x + 0.5 * self.ff1(x)
        x = x + self.attn_drop(self.attn(self.norm_attn(x), pos_emb, mask))
        x = x + self.conv(x, mask)
        x = x + 0.5 * self.ff2(x)
        x = self.norm_out(x)
        if mask is not None:
            x = x * mask.unsqueeze(-1)
        return x


class ConformerEncoder(nn.Module):
    """Stack of conformer blocks; (B, T, D) -> (B, T, D)."""

    def __init__(self, cfg: ConformerConfig):
        super().__init__()
        self.cfg = cfg
        self.pos_enc = RelPositionalEncoding(cfg.attention_dim)
        self.blocks = nn.ModuleList(ConformerBlock(cfg) for _ in range(cfg.layers))

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        if x.shape[-1] != self.cfg.attention_dim:
            raise ValueError(
                f"input width {x.shape[-1]} != attention_dim {self.cfg.attention_dim}"
            )
        if mask is not None:
            x = x * mask.unsqueeze(-1)
        pos_emb = self.pos_enc(x.shape[1], x.dtype, x.device)
        for block in self.blocks:
            x = block(x, pos_emb, mask)
        return x

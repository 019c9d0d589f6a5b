"""Diffusion motion generator: conditioning assembly and the noise predictor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from ..errors import ConfigError
from .conformer import ConformerConfig, ConformerEncoder

# Concatenation layout of the generator input, fixed by contract.
INPUT_LAYOUT = ("speech", "start_motion", "start_feature", "noisy", "time")


@dataclass
class GeneratorWidths:
    speech: int = 128
    embed: int = 32  # per non-speech component

    @property
    def total(self) -> int:
        return self.speech + 4 * self.embed


@dataclass
class GeneratorConditioning:
    """Per-window conditioning: encoded control features plus the portrait's
    start motion latent and start (top pyramid) feature."""

    speech_features: torch.Tensor  # (B, T, c_s)
    start_motion: torch.Tensor  # (B, d_m)
    start_feature: torch.Tensor  # (B, h)

    @property
    def frames(self) -> int:
        return self.speech_features.shape[1]


def sinusoidal_time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """(B,) integer steps -> (B, dim) sinusoidal embedding."""
    half = dim // 2
    freqs = torch.exp(
        torch.arange(half, dtype=torch.float32, device=t.device)
        * -(math.log(10000.0) / max(half - 1, 1))
    )
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def build_generator_input(
    speech: torch.Tensor,
    start_motion_embed: torch.Tensor,
    start_feature_embed: torch.Tensor,
    noisy_embed: torch.Tensor,
    time_embed: torch.Tensor,
) -> torch.Tensor:
    """Concatenate conditioning streams in the fixed layout; all (B, T, *)."""
    t = speech.shape[1]
    parts = {
        "speech": speech,
        "start_motion": start_motion_embed,
        "start_feature": start_feature_embed,
        "noisy": noisy_embed,
        "time": time_embed,
    }
    for name, part in parts.items():
        if part.shape[1] != t:
            raise ConfigError(f"conditioning stream '{name}' length {part.shape[1]} != {t}")
    return torch.cat([parts[name] for name in INPUT_LAYOUT], dim=-1)


class DiffusionMotionGenerator(nn.Module):
    """Predicts the injected noise from the noisy latent and conditioning."""

    def __init__(
        self,
        motion_dim: int = 20,
        feature_dim: int = 128,
        widths: GeneratorWidths | None = None,
        conformer: ConformerConfig | None = None,
    ):
        super().__init__()
        self.motion_dim = motion_dim
        self.widths = widths or GeneratorWidths()
        self.conformer_cfg = conformer or ConformerConfig(
            attention_dim=self.widths.total, heads=2, layers=2, dropout=0.2
        )
        if self.conformer_cfg.attention_dim != self.widths.total:
            raise ConfigError(
                f"generator conformer width {self.conformer_cfg.attention_dim} != "
                f"conditioning total {self.widths.total}"
            )
        e = self.widths.embed
        self.lift_start_motion = nn.Linear(motion_dim, e)
        self.lift_start_feature = nn.Linear(feature_dim, e)
        self.lift_noisy = nn.Linear(motion_dim, e)
        self.lift_time = nn.Linear(e, e)
        self.encoder = ConformerEncoder(self.conformer_cfg)
        self.head = nn.Linear(self.widths.total, motion_dim)

    def forward(
        self, noisy: torch.Tensor, t, conditioning: GeneratorConditioning
    ) -> torch.Tensor:
        b, frames, _ = noisy.shape
        speech = conditioning.speech_features
        if speech.shape[1] != frames:
            raise ConfigError(
                f"speech features cover {speech.shape[1]} frames, noisy latent {frames}"
            )
        t = torch.as_tensor(t, device=noisy.device)
        if t.ndim == 0:
            t = t.expand(b)
        time_vec = self.lift_time(sinusoidal_time_embedding(t, self.widths.embed))
        expand = lambda v: v[:, None, :].expand(b, frames, v.shape[-1])
        x = build_generator_input(
            speech,
            expand(self.lift_start_motion(conditioning.start_motion)),
            expand(self.lift_start_feature(conditioning.start_feature)),
            self.lift_noisy(noisy),
            expand(time_vec),
        )
        return self.head(self.encoder(x))

"""Control-signal encoder: lift the 1-D 50 Hz signal to model width,
stride-2 downsample to the 25 fps frame rate, then a conformer stack."""

from __future__ import annotations

import torch
from torch import nn

from .conformer import ConformerConfig, ConformerEncoder


class ControlEncoder(nn.Module):
    def __init__(self, cfg: ConformerConfig | None = None):
        super().__init__()
        self.cfg = cfg or ConformerConfig.speech_encoder()
        width = self.cfg.attention_dim
        self.lift = nn.Conv1d(1, width, kernel_size=1)
        self.down = nn.Conv1d(
            width, width, kernel_size=4, stride=2, padding=1, padding_mode="replicate"
        )
        self.encoder = ConformerEncoder(self.cfg)

    @property
    def width(self) -> int:
        return self.cfg.attention_dim

    def lift_downsample(self, control: torch.Tensor) -> torch.Tensor:
        """(B, 2T) 50 Hz signal -> (B, T, width) pre-attention features."""
        if control.ndim == 1:
            control = control[None]
        if control.shape[-1] % 2:
            raise ValueError(f"control length must be even, got {control.shape[-1]}")
        x = self.lift(control[:, None, :])
        x = self.down(x)
        return x.transpose(1, 2)

    def forward(self, control: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        return self.encoder(self.lift_downsample(control), mask)

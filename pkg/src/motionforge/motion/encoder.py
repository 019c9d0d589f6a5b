"""Image encoder with feature pyramid, hierarchical aggregation, and the
motion/identity encoding heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ConfigError

# Dimensionalities of the explicit face representations this latent replaces;
# the learned motion code must stay more compact than either.
MORPHABLE_MODEL_DIM = 50
LANDMARK_DIM = 136


def pyramid_sides(resolution: int) -> list[int]:
    """Spatial sides: halve down to 4, then a final 1x1 level."""
    if resolution < 8 or resolution & (resolution - 1):
        raise ConfigError(f"resolution must be a power of two >= 8, got {resolution}")
    sides = []
    side = resolution
    while side >= 4:
        sides.append(side)
        side //= 2
    sides.append(1)
    return sides


@dataclass
class FeaturePyramid:
    levels: list[torch.Tensor] = field(default_factory=list)

    def __post_init__(self):
        if len(self.levels) < 3:
            raise ValueError("pyramid needs at least 3 levels")
        sides = self.sides
        if sides[-1] != 1:
            raise ValueError("last pyramid level must be 1x1")
        if any(a <= b for a, b in zip(sides, sides[1:])):
            raise ValueError(f"pyramid sides must strictly decrease, got {sides}")

    @property
    def sides(self) -> list[int]:
        return [lvl.shape[-1] for lvl in self.levels]

    def __len__(self) -> int:
        return len(self.levels)


def level_channels(resolution: int, base: int, hidden: int) -> list[int]:
    sides = pyramid_sides(resolution)
    widths = [min(hidden, base * (2**i)) for i in range(len(sides) - 1)]
    widths.append(hidden)
    return widths


class ImageEncoder(nn.Module):
    """Strided conv trunk emitting one feature map per pyramid level."""

    def __init__(self, resolution: int = 64, base: int = 24, hidden: int = 128):
        super().__init__()
        self.resolution = resolution
        self.sides = pyramid_sides(resolution)
        self.channels = level_channels(resolution, base, hidden)
        blocks = []
        c_prev = 3
        for i, c in enumerate(self.channels[:-1]):
            if i == 0:
                # Single conv at full resolution keeps the stem affordable.
                blocks.append(
                    nn.Sequential(nn.Conv2d(c_prev, c, 3, padding=1), nn.LeakyReLU(0.2))
                )
            else:
                blocks.append(
                    nn.Sequential(
                        nn.Conv2d(c_prev, c, 3, stride=2, padding=1),
                        nn.LeakyReLU(0.2),
                        nn.Conv2d(c, c, 3, padding=1),
                        nn.LeakyReLU(0.2),
                    )
                )
            c_prev = c
        self.blocks = nn.ModuleList(blocks)
        self.final = nn.Sequential(
            nn.Conv2d(c_prev, self.channels[-1], 4, stride=1, padding=0),
            nn.LeakyReLU(0.2),
        )

    def forward(self, frames: torch.Tensor) -> FeaturePyramid:
        if frames.shape[-1] != self.resolution or frames.shape[-2] != self.resolution:
            raise ValueError(
                f"expected {self.resolution}x{self.resolution} frames, got {tuple(frames.shape)}"
            )
        levels = []
        x = frames
        for block in self.blocks:
            x = block(x)
            levels.append(x)
        levels.append(self.final(x))
        return FeaturePyramid(levels=levels)


class HALAggregator(nn.Module):
    """Softmax-weighted sum of average-pooled, per-level projected features."""

    def __init__(self, channels: list[int], hidden: int):
        super().__init__()
        self.logits = nn.Parameter(torch.zeros(len(channels)))
        self.projections = nn.ModuleList(nn.Linear(c, hidden) for c in channels)

    @property
    def weights(self) -> torch.Tensor:
        return torch.softmax(self.logits, dim=0)

    def forward(self, pyramid: FeaturePyramid) -> torch.Tensor:
        if len(pyramid) != len(self.projections):
            raise ConfigError(
                f"pyramid has {len(pyramid)} levels but aggregator expects {len(self.projections)}"
            )
        weights = self.weights
        out = None
        for w, proj, level in zip(weights, self.projections, pyramid.levels):
            vec = proj(level.mean(dim=(2, 3)))
            out = w * vec if out is None else out + w * vec
        return out


class TopLevelAggregator(nn.Module):
    """Ablation stand-in for HAL: projects only the final 1x1 level."""

    def __init__(self, channels: list[int], hidden: int):
        super().__init__()
        self.n_levels = len(channels)
        self.projection = nn.Linear(channels[-1], hidden)

    def forward(self, pyramid: FeaturePyramid) -> torch.Tensor:
        if len(pyramid) != self.n_levels:
            raise ConfigError(
                f"pyramid has {len(pyramid)} levels but aggregator expects {self.n_levels}"
            )
        return self.projection(pyramid.levels[-1].mean(dim=(2, 3)))


def orthonormal_rows(raw: torch.Tensor) -> torch.Tensor:
    """Orthonormalize rows of (d_m, h) via QR with a deterministic sign fix."""
    q, r = torch.linalg.qr(raw.T, mode="reduced")
    sign = torch.sign(torch.diagonal(r))
    sign = torch.where(sign == 0, torch.ones_like(sign), sign)
    return (q * sign[None, :]).T


class MotionEncoder(nn.Module):
    """MLP trunk over the aggregated feature, then an FC or LMD projection."""

    def __init__(self, hidden: int = 128, motion_dim: int = 20, projector: str = "lmd"):
        super().__init__()
        if projector not in ("fc", "lmd"):
            raise ConfigError(f"projector must be 'fc' or 'lmd', got {projector!r}")
        self.projector = projector
        self.motion_dim = motion_dim
        # LayerNorm keeps the latent-path magnitude bounded, which the
        # renderer's sigmoid output depends on for stable training.
        self.trunk = nn.Sequential(
            nn.Linear(hidden, hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, hidden),
            nn.LayerNorm(hidden),
        )
        if projector == "fc":
            self.reduce = nn.Linear(hidden, motion_dim)
            self.expand = nn.Linear(motion_dim, hidden)
            self.raw_basis = None
        else:
            raw = torch.empty(motion_dim, hidden)
            nn.init.orthogonal_(raw)
            self.raw_basis = nn.Parameter(raw)

    @property
    def basis(self) -> torch.Tensor:
        if self.raw_basis is None:
            raise ConfigError("FC projector has no motion basis")
        return orthonormal_rows(self.raw_basis)

    def hidden_path(self, aggregated: torch.Tensor) -> torch.Tensor:
        return self.trunk(aggregated)

    def project(self, hidden_vec: torch.Tensor, basis: torch.Tensor | None = None) -> torch.Tensor:
        if self.projector == "fc":
            return self.reduce(hidden_vec)
        basis = self.basis if basis is None else basis
        return hidden_vec @ basis.T

    def encode(self, aggregated: torch.Tensor) -> torch.Tensor:
        return self.project(self.hidden_path(aggregated))

    def compose(self, coeffs: torch.Tensor, basis: torch.Tensor | None = None) -> torch.Tensor:
        """Displacement in hidden space from motion coefficients."""
        if self.projector == "fc":
            return self.expand(coeffs)
        basis = self.basis if basis is None else basis
        return coeffs @ basis


def compose_motion_direction(coeffs: torch.Tensor, basis: torch.Tensor) -> torch.Tensor:
    """Sum of basis directions weighted by coefficients (an isometry)."""
    return coeffs @ basis


class IdentityEncoder(nn.Module):
    """Head producing the unit-norm identity embedding from the top feature."""

    def __init__(self, hidden: int = 128, identity_dim: int = 64):
        super().__init__()
        self.head = nn.Sequential(
            nn.Linear(hidden, hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, identity_dim),
        )

    def forward(self, top_feature: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.head(top_feature), dim=-1)

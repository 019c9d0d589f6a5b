"""Warp-based frame renderer.

Per pyramid level the motion path (source latent path + motion displacement)
drives a small conv predictor over a coordinate grid to produce a flow field
and a sigmoid mask. The level's source features are warped by the flow, gated
by the mask, shifted by a style projection of the path, and converted toRGB;
the upsampled RGB contributions are summed and squashed to [0, 1].
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ConfigError
from .encoder import FeaturePyramid
from .warp import warp_bilinear


def _coord_grid(side: int, dtype, device) -> torch.Tensor:
    if side == 1:
        return torch.zeros(2, 1, 1, dtype=dtype, device=device)
    line = torch.linspace(-1.0, 1.0, side, dtype=dtype, device=device)
    gy, gx = torch.meshgrid(line, line, indexing="ij")
    return torch.stack([gx, gy])


class FlowMaskPredictor(nn.Module):
    """Flow/mask head per level: a global affine flow component plus two conv
    stages of local refinement, both driven by the broadcast motion path.

    The affine head lets whole-shape translation/scale/shear gradients pool
    into six parameters instead of crawling through per-pixel warp gradients.
    For levels wider than `max_pred_side` the conv part runs at reduced
    resolution and is bilinearly upsampled (flows are smooth).
    """

    def __init__(
        self,
        cond_dim: int,
        side: int,
        width: int = 24,
        max_pred_side: int = 32,
    ):
        super().__init__()
        self.side = side
        self.pred_side = min(side, max_pred_side)
        self.cond = nn.Linear(cond_dim, width)
        self.affine = nn.Linear(cond_dim, 6)
        nn.init.zeros_(self.affine.weight)
        nn.init.zeros_(self.affine.bias)
        self.conv1 = nn.Conv2d(width + 2, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, 3, 3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)

    def forward(self, cond_vec: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b = cond_vec.shape[0]
        side = self.pred_side
        cond = self.cond(cond_vec)[:, :, None, None].expand(-1, -1, side, side)
        grid = _coord_grid(side, cond_vec.dtype, cond_vec.device)
        grid = grid[None].expand(b, -1, -1, -1)
        h = F.leaky_relu(self.conv1(torch.cat([cond, grid], dim=1)), 0.2)
        out = self.conv2(h)
        if side != self.side:
            out = F.interpolate(
                out, size=(self.side, self.side), mode="bilinear", align_corners=False
            )
        full_grid = _coord_grid(self.side, cond_vec.dtype, cond_vec.device)
        affine = self.affine(cond_vec).view(b, 2, 3)
        aff_flow = torch.einsum("bij,jhw->bihw", affine[:, :, :2], full_grid)
        aff_flow = aff_flow + affine[:, :, 2][:, :, None, None]
        # Normalized-coordinate flow to pixels: half the level side per unit.
        flow = (aff_flow + out[:, :2]) * (self.side / 2.0)
        mask = torch.sigmoid(out[:, 2:3])
        return flow, mask


class Renderer(nn.Module):
    def __init__(self, channels: list[int], sides: list[int], hidden: int = 128):
        super().__init__()
        if len(channels) != len(sides):
            raise ConfigError("channels and sides must align")
        self.sides = list(sides)
        self.resolution = sides[0]
        # Conditioning = [source path + displacement, displacement] so the
        # predictors see the motion delta explicitly.
        cond_dim = 2 * hidden
        self.predictors = nn.ModuleList(
            FlowMaskPredictor(cond_dim, side) for side in sides
        )
        self.styles = nn.ModuleList(nn.Linear(cond_dim, c) for c in channels)
        self.to_rgb = nn.ModuleList(nn.Conv2d(c, 3, 3, padding=1) for c in channels)
        # Neutral start: the accumulated logit begins at zero (mid-gray output).
        for conv in self.to_rgb:
            nn.init.zeros_(conv.weight)
            nn.init.zeros_(conv.bias)

    def _check(self, pyramid: FeaturePyramid) -> None:
        if len(pyramid) != len(self.predictors):
            raise ConfigError(
                f"pyramid has {len(pyramid)} levels, renderer configured for {len(self.predictors)}"
            )
        if pyramid.sides != self.sides:
            raise ConfigError(f"pyramid sides {pyramid.sides} != renderer sides {self.sides}")

    def render(
        self,
        source_pyramid: FeaturePyramid,
        source_path: torch.Tensor,
        displacement: torch.Tensor,
        force_zero_flow: bool = False,
        force_unit_mask: bool = False,
    ) -> torch.Tensor:
        self._check(source_pyramid)
        cond_vec = torch.cat([source_path + displacement, displacement], dim=-1)
        acc = None
        for level, predictor, style, to_rgb in zip(
            source_pyramid.levels, self.predictors, self.styles, self.to_rgb
        ):
            flow, mask = predictor(cond_vec)
            if force_zero_flow:
                warped = level
            else:
                warped = warp_bilinear(level, flow)
            if not force_unit_mask:
                warped = mask * warped
            gated = warped + style(cond_vec)[:, :, None, None]
            rgb = to_rgb(gated)
            if rgb.shape[-1] != self.resolution:
                rgb = F.interpolate(
                    rgb, size=(self.resolution, self.resolution), mode="bilinear",
                    align_corners=False,
                )
            acc = rgb if acc is None else acc + rgb
        return torch.sigmoid(acc)

    def decode(self, source_pyramid: FeaturePyramid, path: torch.Tensor) -> torch.Tensor:
        """Plain encoder-decoder reconstruction: no warping, no masking."""
        self._check(source_pyramid)
        cond_vec = torch.cat([path, torch.zeros_like(path)], dim=-1)
        acc = None
        for level, style, to_rgb in zip(source_pyramid.levels, self.styles, self.to_rgb):
            gated = level + style(cond_vec)[:, :, None, None]
            rgb = to_rgb(gated)
            if rgb.shape[-1] != self.resolution:
                rgb = F.interpolate(
                    rgb, size=(self.resolution, self.resolution), mode="bilinear",
                    align_corners=False,
                )
            acc = rgb if acc is None else acc + rgb
        return torch.sigmoid(acc)

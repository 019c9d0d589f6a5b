"""Image augmentation for metric-learning candidates.

Applied only to identity-branch samples, never to reconstruction source/target
pairs (those must keep background and geometry intact for motion learning).
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F


def _rand(generator, *shape, lo=0.0, hi=1.0):
    return torch.rand(*shape, generator=generator) * (hi - lo) + lo


def augment_frames(frames: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """Horizontal flip, color jitter, light blur, and small shift/scale/rotate.

    frames: (B, 3, H, W) in [0, 1].
    """
    b, _, h, w = frames.shape
    out = frames

    flip = torch.rand(b, generator=generator) < 0.5
    if flip.any():
        flipped = torch.flip(out, dims=[-1])
        out = torch.where(flip[:, None, None, None], flipped, out)

    gain = _rand(generator, b, 3, 1, 1, lo=0.8, hi=1.2)
    bias = _rand(generator, b, 3, 1, 1, lo=-0.08, hi=0.08)
    out = out * gain + bias

    if float(torch.rand((), generator=generator)) < 0.5:
        kernel = torch.tensor([0.25, 0.5, 0.25], dtype=out.dtype)
        k2 = torch.outer(kernel, kernel).reshape(1, 1, 3, 3).repeat(3, 1, 1, 1)
        out = F.conv2d(F.pad(out, (1, 1, 1, 1), mode="replicate"), k2, groups=3)

    angle = _rand(generator, b, lo=-0.25, hi=0.25)
    scale = _rand(generator, b, lo=0.9, hi=1.1)
    shift = _rand(generator, b, 2, lo=-0.08, hi=0.08)
    cos, sin = torch.cos(angle) / scale, torch.sin(angle) / scale
    theta = torch.zeros(b, 2, 3, dtype=out.dtype)
    theta[:, 0, 0] = cos
    theta[:, 0, 1] = -sin
    theta[:, 1, 0] = sin
    theta[:, 1, 1] = cos
    theta[:, :, 2] = shift
    grid = F.affine_grid(theta, [b, 3, h, w], align_corners=False)
    out = F.grid_sample(out, grid, padding_mode="border", align_corners=False)

    return out.clamp(0.0, 1.0)

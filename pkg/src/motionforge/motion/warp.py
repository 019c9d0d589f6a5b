"""Differentiable bilinear warping with border-replicate padding.

Implemented by hand (gather + lerp) rather than grid_sample so that the
zero-flow case reproduces the input bit-exactly, which the renderer's
identity contract relies on.
"""

from __future__ import annotations

import torch


def _gather_2d(features: torch.Tensor, xi: torch.Tensor, yi: torch.Tensor) -> torch.Tensor:
    b, c, h, w = features.shape
    idx = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
    return features.reshape(b, c, h * w).gather(2, idx).reshape(b, c, h, w)


def warp_bilinear(features: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Sample `features` at (x + flow_x, y + flow_y), offsets in pixels.

    features: (B, C, H, W); flow: (B, 2, H, W) with channels (dx, dy).
    Out-of-range samples replicate the border.
    """
    if features.ndim != 4 or flow.ndim != 4:
        raise ValueError("warp expects 4-D feature and flow tensors")
    b, _, h, w = features.shape
    if flow.shape != (b, 2, h, w):
        raise ValueError(f"flow shape {tuple(flow.shape)} does not match features {(b, 2, h, w)}")

    dtype = features.dtype
    xs = torch.arange(w, dtype=dtype, device=features.device)
    ys = torch.arange(h, dtype=dtype, device=features.device)
    gx = xs.view(1, 1, w) + flow[:, 0]
    gy = ys.view(1, h, 1) + flow[:, 1]

    x0 = gx.floor()
    y0 = gy.floor()
    fx = (gx - x0).unsqueeze(1)
    fy = (gy - y0).unsqueeze(1)

    x0i = x0.long().clamp(0, w - 1)
    x1i = (x0.long() + 1).clamp(0, w - 1)
    y0i = y0.long().clamp(0, h - 1)
    y1i = (y0.long() + 1).clamp(0, h - 1)

    f00 = _gather_2d(features, x0i, y0i)
    f01 = _gather_2d(features, x1i, y0i)
    f10 = _gather_2d(features, x0i, y1i)
    f11 = _gather_2d(features, x1i, y1i)

    top = f00 + fx * (f01 - f00)
    bottom = f10 + fx * (f11 - f10)
    return top + fy * (bottom - top)

"""Deterministic rasterizer for the talking-shapes corpus.

A frame shows one "head" shape on a flat background. The head is an ellipse
or a regular polygon carrying two landmarks: a white "nose" dot located at
the transform pivot (so its pixel position is exactly ``x_pos * W`` for any
pose) and a dark "mouth" slot whose area grows linearly with the aperture
factor. Yaw and pitch are horizontal/vertical affine shears about the pivot,
roll is an in-plane rotation. Because the head's mass is offset below the
pivot, yaw shear displaces the visible centroid, which is what the analyzer
measures.

Everything is plain numpy; identical inputs produce bit-identical frames.
"""

from __future__ import annotations

import colorsys
import math

import numpy as np

# Canonical geometry. Coordinates (u, v) with v pointing down; the head body
# is centred at (0, HEAD_OFFSET) while all pose transforms pivot at (0, 0).
HEAD_OFFSET = 0.35
NOSE_RADIUS = 0.09
MOUTH_CENTER_V = 0.55
MOUTH_HALF_WIDTH = 0.38
MOUTH_HALF_HEIGHT_MAX = 0.20

# Family aspect (applied outside the canonical membership test).
ELLIPSE_ASPECT = (0.72, 0.85)
POLYGON_ASPECT = (0.78, 0.78)

# Flat reference colors. The analyzer relies on these being achromatic except
# for the body, whose HSV value/saturation are fixed so chroma is hue-invariant.
BG_GRAY = 0.55
MOUTH_GRAY = 0.02
NOSE_GRAY = 0.98
BODY_SAT = 0.85
BODY_VAL = 0.95
BODY_CHROMA = BODY_VAL * BODY_SAT

SUPERSAMPLE = 4
VALID_RESOLUTIONS = (32, 64, 128)

FACTOR_RANGES = {
    "yaw": (-0.6, 0.6),
    "pitch": (-0.4, 0.4),
    "roll": (-0.3, 0.3),
    "x_pos": (0.25, 0.75),
    "scale": (0.8, 1.2),
    "aperture": (0.0, 1.0),
}
FACTOR_NAMES = tuple(FACTOR_RANGES)

SHAPE_FAMILIES = ("ellipse",) + tuple(f"polygon-{k}" for k in range(3, 9))


def family_aspect(shape_family: str) -> tuple[float, float]:
    if shape_family == "ellipse":
        return ELLIPSE_ASPECT
    return POLYGON_ASPECT


def family_area(shape_family: str) -> float:
    """Area of the canonical (pre-aspect, pre-scale) head shape."""
    if shape_family == "ellipse":
        return math.pi
    k = polygon_sides(shape_family)
    return 0.5 * k * math.sin(2.0 * math.pi / k)


def polygon_sides(shape_family: str) -> int:
    if not shape_family.startswith("polygon-"):
        raise ValueError(f"unknown shape family: {shape_family!r}")
    k = int(shape_family.split("-")[1])
    if not 3 <= k <= 8:
        raise ValueError(f"polygon side count out of range: {k}")
    return k


def body_color(hue: float) -> np.ndarray:
    return np.asarray(colorsys.hsv_to_rgb(hue % 1.0, BODY_SAT, BODY_VAL), dtype=np.float64)


def mouth_canonical_area(aperture: float) -> float:
    return 4.0 * MOUTH_HALF_WIDTH * MOUTH_HALF_HEIGHT_MAX * aperture


def _head_mask(u: np.ndarray, v: np.ndarray, shape_family: str) -> np.ndarray:
    du = u
    dv = v - HEAD_OFFSET
    if shape_family == "ellipse":
        return du * du + dv * dv <= 1.0
    k = polygon_sides(shape_family)
    inradius = math.cos(math.pi / k)
    # Edge normals of a regular k-gon whose first vertex points up (-90 deg).
    inside = np.ones(u.shape, dtype=bool)
    for j in range(k):
        phi = -math.pi / 2.0 + math.pi / k + 2.0 * math.pi * j / k
        inside &= du * math.cos(phi) + dv * math.sin(phi) <= inradius
    return inside


_JITTER_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _jitter(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    cached = _JITTER_CACHE.get(resolution)
    if cached is None:
        n = resolution * SUPERSAMPLE
        rng = np.random.default_rng(0xA5A5 + resolution)
        cached = (rng.uniform(0.0, 1.0, (n, n)), rng.uniform(0.0, 1.0, (n, n)))
        _JITTER_CACHE[resolution] = cached
    return cached


def validate_factors(yaw, pitch, roll, x_pos, scale, aperture) -> None:
    values = dict(yaw=yaw, pitch=pitch, roll=roll, x_pos=x_pos, scale=scale, aperture=aperture)
    for name, value in values.items():
        lo, hi = FACTOR_RANGES[name]
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"factor '{name}' is not finite")
        if np.any(arr < lo) or np.any(arr > hi):
            raise ValueError(
                f"factor '{name}' out of range [{lo}, {hi}]: got {float(np.min(arr))}..{float(np.max(arr))}"
            )


def render_factors(identity, factors_at_frame, resolution: int) -> np.ndarray:
    """Rasterize one frame.

    ``identity`` is an IdentitySpec; ``factors_at_frame`` a 6-tuple
    (yaw, pitch, roll, x_pos, scale, aperture). Returns H x W x 3 float32 in [0, 1].
    """
    if resolution not in VALID_RESOLUTIONS:
        raise ValueError(f"resolution must be one of {VALID_RESOLUTIONS}, got {resolution}")
    yaw, pitch, roll, x_pos, scale, aperture = (float(f) for f in factors_at_frame)
    validate_factors(yaw, pitch, roll, x_pos, scale, aperture)

    res = resolution
    ss = SUPERSAMPLE
    n = res * ss
    # Stratified subsample positions with a fixed jitter pattern: breaks the
    # coherent aliasing a regular grid shows on thin axis-aligned features.
    jit_u, jit_v = _jitter(res)
    base = np.arange(n, dtype=np.float64)
    px = (base[None, :] + jit_u) / ss
    py = (base[:, None] + jit_v) / ss

    cx = x_pos * res
    cy = 0.5 * res
    radius = identity.base_size * scale * res / 2.0
    ax, ay = family_aspect(identity.shape_family)

    # Invert: pixel -> canonical. Forward is c + r*S . R(roll) . Sh_pitch . Sh_yaw.
    xs = (px - cx) / (radius * ax)
    ys = (py - cy) / (radius * ay)
    cos_r, sin_r = math.cos(roll), math.sin(roll)
    u2 = cos_r * xs + sin_r * ys
    v2 = -sin_r * xs + cos_r * ys
    v1 = v2 - math.tan(pitch) * u2
    u = u2 - math.tan(yaw) * v1
    v = v1

    head = _head_mask(u, v, identity.shape_family)
    nose = (u * u + v * v <= NOSE_RADIUS * NOSE_RADIUS) & head
    if aperture > 0.0:
        mouth = (
            (np.abs(u) <= MOUTH_HALF_WIDTH)
            & (np.abs(v - MOUTH_CENTER_V) <= MOUTH_HALF_HEIGHT_MAX * aperture)
            & head
            & ~nose
        )
    else:
        mouth = np.zeros_like(head)
    body = head & ~nose & ~mouth

    def frac(mask: np.ndarray) -> np.ndarray:
        return mask.reshape(res, ss, res, ss).mean(axis=(1, 3))

    f_body = frac(body)
    f_mouth = frac(mouth)
    f_nose = frac(nose)
    f_bg = 1.0 - f_body - f_mouth - f_nose

    color = body_color(identity.hue)
    frame = (
        f_bg[..., None] * BG_GRAY
        + f_mouth[..., None] * MOUTH_GRAY
        + f_nose[..., None] * NOSE_GRAY
        + f_body[..., None] * color[None, None, :]
    )
    return frame.astype(np.float32)

"""Frame and sequence metrics: PSNR, SSIM, identity-similarity proxy, and
control-sync correlation."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import UsageError
from ..synthdata import analyze
from ..synthdata.core import CONTROL_PER_FRAME

PSNR_CAP_DB = 100.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; identical images cap at 100 dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = 11,
    k1: float = 0.01,
    k2: float = 0.03,
    sigma: float = 1.5,
) -> float:
    """Mean local SSIM with a Gaussian window on channel-mean grayscale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a = a.mean(axis=2)
        b = b.mean(axis=2)
    if min(a.shape) < window:
        raise ValueError(f"image side {min(a.shape)} smaller than window {window}")

    truncate = ((window - 1) / 2.0) / sigma
    blur = lambda x: gaussian_filter(x, sigma, truncate=truncate)
    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b

    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def csim_proxy(a: np.ndarray, b: np.ndarray, identity_probe) -> float:
    """Cosine between probe embeddings of the two frames."""
    if not getattr(identity_probe, "trained", False):
        raise UsageError("identity probe must be trained before use")
    ea = identity_probe.embed_frame(a)
    eb = identity_probe.embed_frame(b)
    return float(np.dot(ea, eb) / (np.linalg.norm(ea) * np.linalg.norm(eb) + 1e-12))


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Pearson r, or None when either series is (numerically) constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if np.std(x) < 1e-12 or np.std(y) < 1e-12:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def sync_correlation(frames, control: np.ndarray, identity=None) -> float | None:
    """r between analyzer-extracted aperture and frame-paired control means.

    Returns the flagged null (None) when the control is constant.
    """
    control = np.asarray(control, dtype=np.float64)
    if len(control) != CONTROL_PER_FRAME * len(frames):
        raise ValueError(
            f"control length {len(control)} != {CONTROL_PER_FRAME} x {len(frames)} frames"
        )
    aperture = analyze.aperture_series(frames, identity)
    paired = control.reshape(-1, CONTROL_PER_FRAME).mean(axis=1)
    return pearson(aperture, paired)

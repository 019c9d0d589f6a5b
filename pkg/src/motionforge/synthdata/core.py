"""Corpus domain types and the procedural clip generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import render

CONTROL_RATE_HZ = 50
FRAME_RATE_FPS = 25
CONTROL_PER_FRAME = CONTROL_RATE_HZ // FRAME_RATE_FPS  # fixed 2:1 ratio

_IDENTITY_SALT = 101
_FACTOR_SALT = 202
_CONTROL_SALT = 303


@dataclass(frozen=True)
class IdentitySpec:
    """Appearance parameters of one synthetic identity."""

    id_index: int
    shape_family: str
    hue: float
    base_size: float

    def __post_init__(self):
        if self.shape_family not in render.SHAPE_FAMILIES:
            raise ValueError(f"unknown shape family: {self.shape_family!r}")
        if not 0.0 <= self.hue < 1.0:
            raise ValueError(f"hue out of [0, 1): {self.hue}")
        if not 0.3 <= self.base_size <= 0.6:
            raise ValueError(f"base_size out of [0.3, 0.6]: {self.base_size}")


@dataclass
class FactorTrack:
    """Per-frame ground-truth motion factors, all arrays of length T."""

    yaw: np.ndarray
    pitch: np.ndarray
    roll: np.ndarray
    x_pos: np.ndarray
    scale: np.ndarray
    aperture: np.ndarray

    def __post_init__(self):
        lengths = {len(getattr(self, name)) for name in render.FACTOR_NAMES}
        if len(lengths) != 1:
            raise ValueError(f"factor arrays must share length, got {lengths}")
        render.validate_factors(
            self.yaw, self.pitch, self.roll, self.x_pos, self.scale, self.aperture
        )

    def __len__(self) -> int:
        return len(self.yaw)

    def at(self, t: int) -> tuple[float, ...]:
        return tuple(float(getattr(self, name)[t]) for name in render.FACTOR_NAMES)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in render.FACTOR_NAMES}


@dataclass
class AttributeTrack:
    """Pose (yaw, pitch, roll) and camera (x_pos, scale) tracks, T x 3 and T x 2."""

    pose: np.ndarray
    camera: np.ndarray
    stats: dict | None = None  # per-attribute mean/std, train split only

    def __post_init__(self):
        if len(self.pose) != len(self.camera):
            raise ValueError("pose and camera tracks must share length")

    def __len__(self) -> int:
        return len(self.pose)


@dataclass
class SynthClip:
    identity: IdentitySpec
    frames: list[np.ndarray]
    factors: FactorTrack
    control: np.ndarray

    def __post_init__(self):
        if len(self.frames) != len(self.factors):
            raise ValueError("frames and factors must share length")
        if len(self.control) != CONTROL_PER_FRAME * len(self.frames):
            raise ValueError("control must have 2 samples per frame")

    def __len__(self) -> int:
        return len(self.frames)


_GOLDEN = 0.6180339887498949


def identity_for_index(corpus_seed: int, id_index: int) -> IdentitySpec:
    """Deterministic identity parameters for (corpus seed, id index).

    Hues are golden-ratio spaced around a seeded offset so any small set of
    identities stays well separated in color.
    """
    offset = float(np.random.default_rng([corpus_seed, _IDENTITY_SALT]).uniform(0.0, 1.0))
    rng = np.random.default_rng([corpus_seed, id_index, _IDENTITY_SALT])
    family = render.SHAPE_FAMILIES[id_index % len(render.SHAPE_FAMILIES)]
    hue = (offset + id_index * _GOLDEN) % 1.0
    base_size = float(rng.uniform(0.3, 0.6))
    return IdentitySpec(id_index=id_index, shape_family=family, hue=hue, base_size=base_size)


def _smooth_walk(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    start = rng.uniform(lo + 0.2 * span, hi - 0.2 * span)
    steps = rng.normal(0.0, 0.06 * span, size=n)
    walk = np.clip(start + np.cumsum(steps), lo, hi)
    kernel = np.ones(5) / 5.0
    padded = np.concatenate([np.full(2, walk[0]), walk, np.full(2, walk[-1])])
    return np.clip(np.convolve(padded, kernel, mode="valid"), lo, hi)


def _control_signal(rng: np.random.Generator, n_samples: int) -> np.ndarray:
    """Band-limited noise in [0, 1]: a sum of <= 5 seeded sinusoids."""
    n_sin = 5
    t = np.arange(n_samples, dtype=np.float64) / CONTROL_RATE_HZ
    freqs = rng.uniform(0.3, 3.0, size=n_sin)
    amps = 1.0 / (1.0 + np.arange(n_sin, dtype=np.float64))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_sin)
    raw = np.zeros(n_samples)
    for a, f, p in zip(amps, freqs, phases):
        raw += a * np.sin(2.0 * np.pi * f * t + p)
    return 0.5 + 0.5 * raw / amps.sum()


def aperture_from_control(control: np.ndarray) -> np.ndarray:
    """Moving average of the two 50 Hz samples paired to each frame."""
    pairs = control.reshape(-1, CONTROL_PER_FRAME)
    return pairs.mean(axis=1)


def gen_clip(
    corpus_seed: int,
    id_index: int,
    T: int,
    clip_index: int = 0,
    resolution: int = 64,
) -> SynthClip:
    """Generate one deterministic clip: frames, factor tracks, control signal."""
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    identity = identity_for_index(corpus_seed, id_index)

    rng_f = np.random.default_rng([corpus_seed, id_index, clip_index, _FACTOR_SALT])
    rng_c = np.random.default_rng([corpus_seed, id_index, clip_index, _CONTROL_SALT])

    control = _control_signal(rng_c, CONTROL_PER_FRAME * T)
    ranges = render.FACTOR_RANGES
    factors = FactorTrack(
        yaw=_smooth_walk(rng_f, T, *ranges["yaw"]),
        pitch=_smooth_walk(rng_f, T, *ranges["pitch"]),
        roll=_smooth_walk(rng_f, T, *ranges["roll"]),
        x_pos=_smooth_walk(rng_f, T, *ranges["x_pos"]),
        scale=_smooth_walk(rng_f, T, *ranges["scale"]),
        aperture=aperture_from_control(control),
    )
    frames = [render.render_factors(identity, factors.at(t), resolution) for t in range(T)]
    return SynthClip(identity=identity, frames=frames, factors=factors, control=control)


def extract_attributes(factors: FactorTrack) -> AttributeTrack:
    """Exact pose/camera attribute tracks (stands in for a pretrained extractor)."""
    pose = np.stack([factors.yaw, factors.pitch, factors.roll], axis=1)
    camera = np.stack([factors.x_pos, factors.scale], axis=1)
    return AttributeTrack(pose=pose, camera=camera)

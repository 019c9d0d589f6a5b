"""Motion-sequence container and its JSON wire format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FRAME_RATE_FPS = 25


@dataclass
class MotionSequence:
    """A clean motion-latent sequence at 25 fps: (T, d_m)."""

    latents: np.ndarray
    fps: int = FRAME_RATE_FPS

    def __post_init__(self):
        self.latents = np.asarray(self.latents, dtype=np.float32)
        if self.latents.ndim != 2:
            raise ValueError(f"latents must be (T, d_m), got shape {self.latents.shape}")
        if not np.all(np.isfinite(self.latents)):
            raise ValueError("latents must be finite")

    def __len__(self) -> int:
        return self.latents.shape[0]

    @property
    def motion_dim(self) -> int:
        return self.latents.shape[1]

    def save(self, path: str | Path) -> None:
        payload = {
            "d_m": self.motion_dim,
            "fps": self.fps,
            "latents": self.latents.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str | Path) -> "MotionSequence":
        with open(path) as fh:
            payload = json.load(fh)
        seq = cls(latents=np.asarray(payload["latents"], dtype=np.float32), fps=payload["fps"])
        if seq.motion_dim != payload["d_m"]:
            raise ValueError("d_m field does not match latent width")
        return seq

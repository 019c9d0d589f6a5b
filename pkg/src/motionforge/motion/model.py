"""Bundled stage-1 model: shared trunk, aggregation, motion/identity heads,
renderer, and checkpoint round-tripping."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from ..errors import ConfigError
from .encoder import (
    HALAggregator,
    IdentityEncoder,
    ImageEncoder,
    MotionEncoder,
    TopLevelAggregator,
    level_channels,
    pyramid_sides,
)
from .renderer import Renderer


@dataclass
class Stage1ModelConfig:
    resolution: int = 64
    hidden: int = 128
    motion_dim: int = 20
    identity_dim: int = 64
    projector: str = "lmd"
    base_channels: int = 24
    use_hal: bool = True
    separate_identity_trunk: bool = False

    @property
    def n_levels(self) -> int:
        return len(pyramid_sides(self.resolution))


class Stage1Model(nn.Module):
    def __init__(self, cfg: Stage1ModelConfig):
        super().__init__()
        self.cfg = cfg
        channels = level_channels(cfg.resolution, cfg.base_channels, cfg.hidden)
        sides = pyramid_sides(cfg.resolution)
        self.trunk = ImageEncoder(cfg.resolution, cfg.base_channels, cfg.hidden)
        self.id_trunk = (
            ImageEncoder(cfg.resolution, cfg.base_channels, cfg.hidden)
            if cfg.separate_identity_trunk
            else None
        )
        if cfg.use_hal:
            self.aggregator = HALAggregator(channels, cfg.hidden)
        else:
            self.aggregator = TopLevelAggregator(channels, cfg.hidden)
        self.motion = MotionEncoder(cfg.hidden, cfg.motion_dim, cfg.projector)
        self.identity = IdentityEncoder(cfg.hidden, cfg.identity_dim)
        self.renderer = Renderer(channels, sides, cfg.hidden)

    # --- encoding -----------------------------------------------------------
    def image_encode(self, frames: torch.Tensor):
        return self.trunk(frames)

    def motion_hidden(self, pyramid) -> torch.Tensor:
        """The latent-path vector w: trunk MLP over the aggregated pyramid."""
        return self.motion.hidden_path(self.aggregator(pyramid))

    def encode_motion(self, pyramid) -> tuple[torch.Tensor, torch.Tensor]:
        """(w, z_m): the hidden path vector and its projected motion latent."""
        w = self.motion_hidden(pyramid)
        return w, self.motion.project(w)

    def motion_latent(self, frames: torch.Tensor) -> torch.Tensor:
        _, z_m = self.encode_motion(self.image_encode(frames))
        return z_m

    def top_feature(self, pyramid) -> torch.Tensor:
        return pyramid.levels[-1].mean(dim=(2, 3))

    def identity_embed(self, frames: torch.Tensor, pyramid=None) -> torch.Tensor:
        if self.id_trunk is not None:
            pyramid = self.id_trunk(frames)
        elif pyramid is None:
            pyramid = self.image_encode(frames)
        return self.identity(self.top_feature(pyramid))

    # --- rendering ----------------------------------------------------------
    def displacement(self, z_m: torch.Tensor) -> torch.Tensor:
        return self.motion.compose(z_m)

    def render_frame(
        self,
        source_pyramid,
        source_path: torch.Tensor,
        displacement: torch.Tensor,
        **flags,
    ) -> torch.Tensor:
        return self.renderer.render(source_pyramid, source_path, displacement, **flags)

    def reenact_frame(self, source_pyramid, source_path, driving_frames) -> torch.Tensor:
        """Render the source under the motion extracted from driving frames."""
        _, z_m = self.encode_motion(self.image_encode(driving_frames))
        return self.render_frame(source_pyramid, source_path, self.displacement(z_m))


def tensor_checksum(t: torch.Tensor) -> str:
    return hashlib.sha256(t.detach().cpu().contiguous().numpy().tobytes()).hexdigest()


def save_stage1(
    model: Stage1Model,
    path: str | Path,
    config_hash: str = "",
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    torch.save(
        {"model_config": asdict(model.cfg), "state_dict": state, "extra": extra or {}},
        path / "weights.pt",
    )
    manifest = {
        "kind": "stage1",
        "config_hash": config_hash,
        "motion_dim": model.cfg.motion_dim,
        "n_levels": model.cfg.n_levels,
        "hidden": model.cfg.hidden,
        "projector": model.cfg.projector,
        "checksums": {name: tensor_checksum(t) for name, t in state.items()},
    }
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path


def load_manifest(path: str | Path) -> dict:
    with open(Path(path) / "manifest.json") as fh:
        return json.load(fh)


def load_stage1(
    path: str | Path, expected_config_hash: str | None = None
) -> tuple[Stage1Model, dict, dict]:
    path = Path(path)
    manifest = load_manifest(path)
    if manifest.get("kind") != "stage1":
        raise ConfigError(f"{path} is not a stage-1 checkpoint")
    if expected_config_hash is not None and manifest["config_hash"] != expected_config_hash:
        raise ConfigError(
            f"checkpoint config hash {manifest['config_hash']!r} does not match "
            f"expected {expected_config_hash!r}"
        )
    blob = torch.load(path / "weights.pt", weights_only=False)
    model = Stage1Model(Stage1ModelConfig(**blob["model_config"]))
    model.load_state_dict(blob["state_dict"])
    for name, t in model.state_dict().items():
        if tensor_checksum(t) != manifest["checksums"][name]:
            raise ConfigError(f"checksum mismatch for parameter {name!r}")
    model.eval()
    return model, manifest, blob.get("extra", {})

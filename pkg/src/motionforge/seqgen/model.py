"""Bundled stage-2 model (control encoder, variance adapter, diffusion motion
generator) with attribute-normalization state and checkpointing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from ..errors import ConfigError
from ..motion.model import tensor_checksum
from .adapter import VarianceAdapter
from .conformer import ConformerConfig
from .control import ControlEncoder
from .generator import DiffusionMotionGenerator, GeneratorConditioning, GeneratorWidths


@dataclass
class Stage2ModelConfig:
    motion_dim: int = 20
    feature_dim: int = 128  # stage-1 hidden width feeding the start feature
    speech_width: int = 128
    embed_width: int = 32
    se_layers: int = 4
    dmg_layers: int = 2
    heads: int = 2
    dropout: float = 0.2
    T_steps: int = 1000
    ddim_steps: int = 50
    window: int = 50
    adapter_rnn_hidden: int = 64

    def __post_init__(self):
        if self.ddim_steps > self.T_steps:
            raise ConfigError(
                f"ddim_steps ({self.ddim_steps}) cannot exceed T_steps ({self.T_steps})"
            )


class Stage2Model(nn.Module):
    def __init__(self, cfg: Stage2ModelConfig):
        super().__init__()
        self.cfg = cfg
        se_cfg = ConformerConfig(
            attention_dim=cfg.speech_width,
            heads=cfg.heads,
            layers=cfg.se_layers,
            dropout=cfg.dropout,
        )
        widths = GeneratorWidths(speech=cfg.speech_width, embed=cfg.embed_width)
        dmg_cfg = ConformerConfig(
            attention_dim=widths.total, heads=cfg.heads, layers=cfg.dmg_layers,
            dropout=cfg.dropout,
        )
        self.control_encoder = ControlEncoder(se_cfg)
        self.adapter = VarianceAdapter(cfg.speech_width, cfg.adapter_rnn_hidden)
        self.generator = DiffusionMotionGenerator(
            motion_dim=cfg.motion_dim,
            feature_dim=cfg.feature_dim,
            widths=widths,
            conformer=dmg_cfg,
        )
        # Attribute and latent standardization state, fitted on the train split.
        self.register_buffer("pose_mean", torch.zeros(3))
        self.register_buffer("pose_std", torch.ones(3))
        self.register_buffer("camera_mean", torch.zeros(2))
        self.register_buffer("camera_std", torch.ones(2))
        self.register_buffer("latent_mean", torch.zeros(cfg.motion_dim))
        self.register_buffer("latent_std", torch.ones(cfg.motion_dim))

    def set_latent_stats(self, mean: torch.Tensor, std: torch.Tensor) -> None:
        self.latent_mean.copy_(mean)
        self.latent_std.copy_(std.clamp_min(1e-4))

    def set_attribute_stats(self, pose: torch.Tensor, camera: torch.Tensor) -> None:
        """pose: (N, 3), camera: (N, 2) stacked over the train split."""
        self.pose_mean.copy_(pose.mean(dim=0))
        self.pose_std.copy_(pose.std(dim=0).clamp_min(1e-4))
        self.camera_mean.copy_(camera.mean(dim=0))
        self.camera_std.copy_(camera.std(dim=0).clamp_min(1e-4))

    def normalize_attrs(self, pose: torch.Tensor, camera: torch.Tensor) -> dict:
        return {
            "pose": (pose - self.pose_mean) / self.pose_std,
            "camera": (camera - self.camera_mean) / self.camera_std,
        }

    def conditioned_features(
        self,
        control: torch.Tensor,
        gt_attrs: dict | None = None,
        override_attrs: dict | None = None,
    ):
        feats = self.control_encoder(control)
        return self.adapter(feats, gt_attrs=gt_attrs, override_attrs=override_attrs)

    def predict_noise(self, noisy, t, conditioning: GeneratorConditioning):
        return self.generator(noisy, t, conditioning)


def stage1_fingerprint(manifest: dict) -> str:
    """Stable digest of a stage-1 checkpoint's parameter checksums."""
    blob = json.dumps(manifest["checksums"], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_stage2(
    model: Stage2Model,
    path: str | Path,
    config_hash: str = "",
    stage1_print: str = "",
    ema_state: dict | None = None,
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    torch.save(
        {
            "model_config": asdict(model.cfg),
            "state_dict": state,
            "ema_state_dict": ema_state or {},
            "extra": extra or {},
        },
        path / "weights.pt",
    )
    manifest = {
        "kind": "stage2",
        "config_hash": config_hash,
        "stage1_fingerprint": stage1_print,
        "motion_dim": model.cfg.motion_dim,
        "T_steps": model.cfg.T_steps,
        "ddim_steps": model.cfg.ddim_steps,
        "checksums": {name: tensor_checksum(t) for name, t in state.items()},
    }
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path


def load_stage2(
    path: str | Path,
    expected_config_hash: str | None = None,
    use_ema: bool = True,
) -> tuple[Stage2Model, dict, dict]:
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "stage2":
        raise ConfigError(f"{path} is not a stage-2 checkpoint")
    if expected_config_hash is not None and manifest["config_hash"] != expected_config_hash:
        raise ConfigError(
            f"checkpoint config hash {manifest['config_hash']!r} does not match "
            f"expected {expected_config_hash!r}"
        )
    blob = torch.load(path / "weights.pt", weights_only=False)
    model = Stage2Model(Stage2ModelConfig(**blob["model_config"]))
    model.load_state_dict(blob["state_dict"])
    if use_ema and blob.get("ema_state_dict"):
        model.load_state_dict(blob["ema_state_dict"])
    model.eval()
    return model, manifest, blob.get("extra", {})

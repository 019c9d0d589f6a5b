"""Inference: video-driven reenactment (stage-1 only) and control-driven
generation (stage-1 + stage-2 with DDIM sampling)."""

from __future__ import annotations

import numpy as np
import torch

from ..errors import ConfigError, UsageError
from ..seqgen import (
    GeneratorConditioning,
    MotionSequence,
    ddim_sample,
    make_schedule,
    stage1_fingerprint,
)
from ..synthdata.core import CONTROL_PER_FRAME


def _to_tensor(frame: np.ndarray, resolution: int) -> torch.Tensor:
    frame = np.asarray(frame, dtype=np.float32)
    if frame.shape[:2] != (resolution, resolution):
        raise ConfigError(
            f"frame resolution {frame.shape[:2]} does not match checkpoint "
            f"resolution {resolution}"
        )
    return torch.from_numpy(frame).permute(2, 0, 1)[None]


def _to_numpy(frames: torch.Tensor) -> list[np.ndarray]:
    return [f.permute(1, 2, 0).numpy().astype(np.float32) for f in frames]


def reenact(source: np.ndarray, driving, stage1_model, chunk: int = 32) -> list[np.ndarray]:
    """Render the source portrait under each driving frame's motion.

    Needs only a trained stage-1 model; no additional training or state.
    """
    res = stage1_model.cfg.resolution
    with torch.no_grad():
        src = _to_tensor(source, res)
        pyr_s = stage1_model.image_encode(src)
        w_s = stage1_model.motion_hidden(pyr_s)
        outputs: list[np.ndarray] = []
        for lo in range(0, len(driving), chunk):
            batch = torch.cat([_to_tensor(f, res) for f in driving[lo : lo + chunk]])
            pyr_d = stage1_model.image_encode(batch)
            _, z_m = stage1_model.encode_motion(pyr_d)
            n = batch.shape[0]
            pred = stage1_model.render_frame(
                pyr_s.__class__(levels=[lvl.expand(n, -1, -1, -1) for lvl in pyr_s.levels]),
                w_s.expand(n, -1),
                stage1_model.displacement(z_m),
            )
            outputs.extend(_to_numpy(pred))
    return outputs


def render_motion_sequence(
    stage1_model, source: np.ndarray, latents: torch.Tensor, chunk: int = 32
) -> list[np.ndarray]:
    """Frame-by-frame rendering of a motion-latent sequence onto the source."""
    res = stage1_model.cfg.resolution
    with torch.no_grad():
        src = _to_tensor(source, res)
        pyr_s = stage1_model.image_encode(src)
        w_s = stage1_model.motion_hidden(pyr_s)
        outputs: list[np.ndarray] = []
        for lo in range(0, latents.shape[0], chunk):
            z = latents[lo : lo + chunk]
            n = z.shape[0]
            pred = stage1_model.render_frame(
                pyr_s.__class__(levels=[lvl.expand(n, -1, -1, -1) for lvl in pyr_s.levels]),
                w_s.expand(n, -1),
                stage1_model.displacement(z),
            )
            outputs.extend(_to_numpy(pred))
    return outputs


def generate(
    source: np.ndarray,
    control: np.ndarray,
    seed: int,
    stage1_model,
    stage2_model,
    overrides: dict[str, np.ndarray] | None = None,
    stage1_manifest: dict | None = None,
    stage2_manifest: dict | None = None,
) -> tuple[list[np.ndarray], MotionSequence]:
    """Control-driven generation: encode control, apply the variance adapter,
    DDIM-sample latent windows, render frame by frame.

    Long controls are generated as sequential windows; each window re-seeds
    its start-motion conditioning from the previous window's final latent.
    Overrides are raw attribute tracks keyed 'pose' (T, 3) / 'camera' (T, 2).
    """
    if stage2_model is None:
        raise UsageError("generation requires a stage-2 checkpoint")
    if stage1_manifest is not None and stage2_manifest is not None:
        expected = stage2_manifest.get("stage1_fingerprint", "")
        if expected and stage1_fingerprint(stage1_manifest) != expected:
            raise ConfigError(
                "stage-2 checkpoint was trained against a different stage-1 checkpoint"
            )

    control = np.asarray(control, dtype=np.float64)
    if len(control) % CONTROL_PER_FRAME:
        raise UsageError(f"control length must be even, got {len(control)}")
    total_frames = len(control) // CONTROL_PER_FRAME
    window = stage2_model.cfg.window
    res = stage1_model.cfg.resolution

    if overrides is not None:
        for key, track in overrides.items():
            if len(track) != total_frames:
                raise UsageError(
                    f"override '{key}' has {len(track)} frames, control implies {total_frames}"
                )

    schedule = make_schedule(stage2_model.cfg.T_steps)
    with torch.no_grad():
        src = _to_tensor(source, res)
        pyr_s = stage1_model.image_encode(src)
        _, z_m_source = stage1_model.encode_motion(pyr_s)
        start_feature = stage1_model.top_feature(pyr_s)
        start_motion = (z_m_source - stage2_model.latent_mean) / stage2_model.latent_std

        all_latents = []
        for wi, lo in enumerate(range(0, total_frames, window)):
            hi = min(lo + window, total_frames)
            seg = torch.from_numpy(
                control[CONTROL_PER_FRAME * lo : CONTROL_PER_FRAME * hi]
            ).float()[None]
            override_attrs = None
            if overrides is not None:
                override_attrs = {}
                if "pose" in overrides:
                    pose = torch.from_numpy(np.asarray(overrides["pose"][lo:hi])).float()[None]
                    override_attrs["pose"] = (
                        pose - stage2_model.pose_mean
                    ) / stage2_model.pose_std
                if "camera" in overrides:
                    cam = torch.from_numpy(np.asarray(overrides["camera"][lo:hi])).float()[None]
                    override_attrs["camera"] = (
                        cam - stage2_model.camera_mean
                    ) / stage2_model.camera_std
            feats, _, _ = stage2_model.conditioned_features(
                seg, override_attrs=override_attrs
            )
            cond = GeneratorConditioning(
                speech_features=feats,
                start_motion=start_motion,
                start_feature=start_feature,
            )
            latents = ddim_sample(
                stage2_model.predict_noise,
                cond,
                schedule,
                shape=(1, hi - lo, stage2_model.cfg.motion_dim),
                steps=stage2_model.cfg.ddim_steps,
                eta=0.0,
                seed=seed + wi,
            )
            all_latents.append(latents[0])
            start_motion = latents[0, -1][None]

        latents = torch.cat(all_latents)
        raw_latents = latents * stage2_model.latent_std + stage2_model.latent_mean
        frames = render_motion_sequence(stage1_model, source, raw_latents)
    sequence = MotionSequence(latents=raw_latents.numpy())
    return frames, sequence

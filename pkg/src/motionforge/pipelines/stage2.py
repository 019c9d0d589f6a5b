"""Stage-2 training: diffusion over frozen motion-encoder latent sequences,
conditioned on encoded control features through the variance adapter."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..config import RunConfig, config_hash
from ..errors import ConfigError
from ..motion import load_stage1, tensor_checksum
from ..seqgen import (
    EmaTracker,
    GeneratorConditioning,
    Stage2Model,
    Stage2ModelConfig,
    diffusion_loss,
    make_schedule,
    q_sample,
    save_stage2,
    stage1_fingerprint,
)
from ..seqgen.adapter import ATTRIBUTE_ORDER
from ..synthdata import store
from ..synthdata.core import CONTROL_PER_FRAME, extract_attributes
from .data import CorpusCache


class LatentCache:
    """Per-clip motion latents, top features, attributes, and control signals
    produced once by the frozen stage-1 encoder."""

    def __init__(self, stage1_model, cache: CorpusCache, chunk: int = 64):
        self.latents: list[torch.Tensor] = []
        self.top_feats: list[torch.Tensor] = []
        self.pose: list[torch.Tensor] = []
        self.camera: list[torch.Tensor] = []
        self.control: list[np.ndarray] = []
        self.splits: list[str] = []
        with torch.no_grad():
            for clip in cache.clips:
                zs, feats = [], []
                for lo in range(0, len(clip), chunk):
                    frames = clip.frames_float(range(lo, min(lo + chunk, len(clip))))
                    pyr = stage1_model.image_encode(frames)
                    _, z_m = stage1_model.encode_motion(pyr)
                    zs.append(z_m)
                    feats.append(stage1_model.top_feature(pyr))
                attrs = extract_attributes(clip.factors)
                self.latents.append(torch.cat(zs))
                self.top_feats.append(torch.cat(feats))
                self.pose.append(torch.from_numpy(attrs.pose).float())
                self.camera.append(torch.from_numpy(attrs.camera).float())
                self.control.append(clip.control)
                self.splits.append(clip.split)
        self.train_indices = [i for i, s in enumerate(self.splits) if s == "train"]

    def latent_stats(self) -> tuple[torch.Tensor, torch.Tensor]:
        stacked = torch.cat([self.latents[i] for i in self.train_indices])
        return stacked.mean(dim=0), stacked.std(dim=0).clamp_min(1e-4)

    def attribute_stats(self) -> tuple[torch.Tensor, torch.Tensor]:
        pose = torch.cat([self.pose[i] for i in self.train_indices])
        camera = torch.cat([self.camera[i] for i in self.train_indices])
        return pose, camera

    def sample_windows(self, rng: np.random.Generator, batch: int, window: int):
        m0, control, pose, camera, feats = [], [], [], [], []
        for _ in range(batch):
            ci = int(rng.choice(self.train_indices))
            max_start = len(self.latents[ci]) - window
            if max_start < 0:
                raise ConfigError(
                    f"clip {ci} has {len(self.latents[ci])} frames < window {window}"
                )
            start = int(rng.integers(0, max_start + 1))
            sl = slice(start, start + window)
            m0.append(self.latents[ci][sl])
            pose.append(self.pose[ci][sl])
            camera.append(self.camera[ci][sl])
            feats.append(self.top_feats[ci][start])
            c = self.control[ci][CONTROL_PER_FRAME * start : CONTROL_PER_FRAME * (start + window)]
            control.append(torch.from_numpy(c).float())
        return (
            torch.stack(m0),
            torch.stack(control),
            torch.stack(pose),
            torch.stack(camera),
            torch.stack(feats),
        )


def train_generator_stage(
    run_cfg: RunConfig,
    stage1_ckpt: str | Path,
    corpus_root: str | Path | None = None,
    out_dir: str | Path = "runs/stage2",
    log=None,
) -> tuple[Path, dict]:
    cfg = run_cfg.stage2
    cfg.validate()
    stage1_model, stage1_manifest, _ = load_stage1(stage1_ckpt)
    stage1_model.eval()
    for p in stage1_model.parameters():
        p.requires_grad_(False)
    frozen_checksums = {n: tensor_checksum(t) for n, t in stage1_model.state_dict().items()}

    corpus = store.load_corpus(corpus_root or run_cfg.corpus.path)
    cache = CorpusCache(corpus)
    latent_cache = LatentCache(stage1_model, cache)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    model = Stage2Model(
        Stage2ModelConfig(
            motion_dim=stage1_model.cfg.motion_dim,
            feature_dim=stage1_model.cfg.hidden,
            speech_width=cfg.speech_width,
            embed_width=cfg.embed_width,
            se_layers=cfg.se_layers,
            dmg_layers=cfg.dmg_layers,
            heads=cfg.heads,
            dropout=cfg.dropout,
            T_steps=cfg.T_steps,
            ddim_steps=cfg.ddim_steps,
            window=cfg.window,
            adapter_rnn_hidden=cfg.adapter_rnn_hidden,
        )
    )
    pose_all, camera_all = latent_cache.attribute_stats()
    model.set_attribute_stats(pose_all, camera_all)
    mean, std = latent_cache.latent_stats()
    model.set_latent_stats(mean, std)

    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    ema = EmaTracker(model, decay=cfg.ema_decay)
    schedule = make_schedule(cfg.T_steps)

    history = {"step": [], "diff": [], "var_pose": [], "var_camera": []}
    for step in range(cfg.steps):
        m0, control, pose, camera, start_feats = latent_cache.sample_windows(
            rng, cfg.batch_size, cfg.window
        )
        m0 = (m0 - model.latent_mean) / model.latent_std
        gt_attrs = model.normalize_attrs(pose, camera)

        t = torch.randint(1, cfg.T_steps + 1, (cfg.batch_size,))
        eps = torch.randn_like(m0)
        m_t = q_sample(m0, t, eps, schedule)

        feats, _, var_losses = model.conditioned_features(control, gt_attrs=gt_attrs)
        cond = GeneratorConditioning(
            speech_features=feats, start_motion=m0[:, 0], start_feature=start_feats
        )
        eps_hat = model.predict_noise(m_t, t, cond)
        l_diff = diffusion_loss(eps, eps_hat)
        total = l_diff + cfg.lambda_gen * sum(var_losses.values())

        opt.zero_grad()
        total.backward()
        opt.step()
        ema.update(model)

        if step % cfg.eval_every == 0 or step == cfg.steps - 1:
            for p in stage1_model.parameters():
                if p.grad is not None:
                    raise ConfigError("frozen stage-1 parameters received gradients")
            history["step"].append(step)
            history["diff"].append(float(l_diff))
            history["var_pose"].append(float(var_losses["pose"]))
            history["var_camera"].append(float(var_losses["camera"]))
            if log:
                log(
                    f"stage2 step {step}: diff={float(l_diff):.4f} "
                    f"var_pose={float(var_losses['pose']):.4f} "
                    f"var_camera={float(var_losses['camera']):.4f}"
                )

    # Stage separation: the frozen encoder must be bit-identical after training.
    for name, t_ in stage1_model.state_dict().items():
        if tensor_checksum(t_) != frozen_checksums[name]:
            raise ConfigError(f"stage-1 parameter {name!r} changed during stage-2 training")

    model.eval()
    out_dir = Path(out_dir)
    ckpt_dir = save_stage2(
        model,
        out_dir / "stage2_ckpt",
        config_hash=config_hash(run_cfg),
        stage1_print=stage1_fingerprint(stage1_manifest),
        ema_state=ema.state_dict(),
        extra={"history": history, "attribute_order": [n for n, _ in ATTRIBUTE_ORDER]},
    )
    return ckpt_dir, history

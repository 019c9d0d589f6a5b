"""Stage-1 training: self-supervised source-to-target reconstruction with
metric learning, mutual-information disentanglement, and adversarial terms."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .. import losses
from ..augment import augment_frames
from ..config import RunConfig, config_hash
from ..errors import ConfigError
from ..motion import Stage1Model, Stage1ModelConfig, save_stage1
from ..synthdata import store
from .data import CorpusCache


def _torch_psnr(pred: torch.Tensor, target: torch.Tensor) -> float:
    mse = float(((pred - target) ** 2).mean())
    if mse <= 0.0:
        return 100.0
    return min(10.0 * math.log10(1.0 / mse), 100.0)


def _validation_batch(cache: CorpusCache, max_pairs: int = 12):
    """Fixed held-out (source, target) pairs: frame 0 drives spread-out frames."""
    clips = cache.clips_of_split("test") or cache.clips_of_split("train")
    sources, targets = [], []
    for clip in clips[:4]:
        step = max(len(clip) // 4, 1)
        for t in range(step, len(clip), step):
            sources.append(clip.frames_float([0]))
            targets.append(clip.frames_float([t]))
            if len(sources) >= max_pairs:
                break
        if len(sources) >= max_pairs:
            break
    return torch.cat(sources), torch.cat(targets)


def reconstruct_batch(model: Stage1Model, source: torch.Tensor, target: torch.Tensor):
    """Shared forward: encode source and target, render target from source."""
    pyr_s = model.image_encode(source)
    w_s = model.motion_hidden(pyr_s)
    pyr_t = model.image_encode(target)
    _, z_m_t = model.encode_motion(pyr_t)
    pred = model.render_frame(pyr_s, w_s, model.displacement(z_m_t))
    return pred, pyr_s, pyr_t, z_m_t


def train_motion_stage(
    run_cfg: RunConfig,
    corpus_root: str | Path | None = None,
    out_dir: str | Path = "runs/stage1",
    log=None,
) -> tuple[Path, dict]:
    """Train the motion representation; returns (checkpoint dir, history)."""
    cfg = run_cfg.stage1
    cfg.validate()
    corpus = store.load_corpus(corpus_root or run_cfg.corpus.path)
    cache = CorpusCache(corpus)
    if len(cache.train_ids) < 2 and cfg.use_ml:
        raise ConfigError(
            "metric learning needs at least 2 identities (no negatives available)"
        )

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    aug_gen = torch.Generator().manual_seed(cfg.seed + 1)

    model = Stage1Model(
        Stage1ModelConfig(
            resolution=cache.resolution,
            hidden=cfg.hidden,
            motion_dim=cfg.d_m,
            identity_dim=cfg.identity_dim,
            projector=cfg.projector,
            base_channels=cfg.base_channels,
            use_hal=cfg.use_hal,
            separate_identity_trunk=cfg.separate_identity_trunk,
        )
    )
    disc = losses.PatchDiscriminator()
    q_net = losses.ClubEstimator(cfg.identity_dim, cfg.d_m)
    aam = losses.AamSoftmax(
        len(cache.train_ids), cfg.identity_dim, losses.MetricConfig().aam_margin,
        losses.MetricConfig().aam_scale,
    )

    weights = losses.LossWeights(
        percep=cfg.lambda_percep, adv=cfg.lambda_adv, mi=cfg.lambda_mi, ml=cfg.lambda_ml
    )
    main_opt = torch.optim.Adam(
        list(model.parameters()) + list(aam.parameters()), lr=cfg.lr, betas=(0.5, 0.999)
    )
    disc_opt = torch.optim.Adam(disc.parameters(), lr=cfg.disc_lr, betas=(0.5, 0.999))
    q_opt = torch.optim.Adam(q_net.parameters(), lr=cfg.q_lr)

    val_source, val_target = _validation_batch(cache)
    history = {"step": [], "recon": [], "psnr_val": [], "hal_weights": [], "total": []}

    zero = torch.zeros(())
    for step in range(cfg.steps):
        source, target, labels = cache.sample_pair_batch(rng, cfg.batch_size)
        pred, pyr_s, pyr_t, z_m_t = reconstruct_batch(model, source, target)

        # Discriminator step (real target vs detached prediction), then the
        # generator term against the updated discriminator.
        disc_opt.zero_grad()
        losses.adversarial_d_loss(disc, target, pred).backward()
        disc_opt.step()
        l_adv_g = losses.adversarial_g_loss(disc, pred)

        # q-net step on detached codes, before the MI estimate is taken.
        z_id_t = model.identity_embed(target, pyramid=pyr_t)
        q_opt.zero_grad()
        q_nll = losses.club_q_nll(q_net, z_id_t.detach(), z_m_t.detach())
        q_nll.backward()
        q_opt.step()

        # Metric-learning branch; negatives are augmented, source/target never.
        if cfg.use_ml:
            z_id_s = model.identity_embed(source, pyramid=pyr_s)
            neg_frames, neg_labels = [], []
            for lbl in labels.tolist():
                id_index = cache.train_ids[lbl]
                frame, neg_lbl = cache.sample_other_identity(rng, id_index)
                neg_frames.append(frame)
                neg_labels.append(neg_lbl)
            neg = augment_frames(torch.cat(neg_frames), aug_gen)
            z_id_n = model.identity_embed(neg)
            if cfg.metric_mode == "triplet":
                l_ml = losses.triplet_loss(
                    z_id_s, z_id_t, z_id_n, losses.MetricConfig().triplet_margin
                )
            else:
                embs = torch.cat([z_id_s, z_id_t, z_id_n])
                all_labels = torch.cat([labels, labels, torch.tensor(neg_labels)])
                l_ml = aam(embs, all_labels)
        else:
            l_ml = zero

        l_mi = (
            losses.club_mi_estimate(q_net, z_id_t, z_m_t, sampling="full")
            if cfg.use_mid
            else zero
        )
        l_recon, l_percep = losses.reconstruction_losses(pred, target)
        total = losses.motion_total_loss(
            {"recon": l_recon, "percep": l_percep, "adv": l_adv_g, "mi": l_mi, "ml": l_ml},
            weights,
        )
        main_opt.zero_grad()
        # The MI term also deposits gradients in q; they are discarded by the
        # next q_opt.zero_grad(), so only the encoders learn from it.
        total.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), 10.0)
        main_opt.step()

        if step % cfg.eval_every == 0 or step == cfg.steps - 1:
            model.eval()
            with torch.no_grad():
                val_pred, *_ = reconstruct_batch(model, val_source, val_target)
                psnr_val = _torch_psnr(val_pred, val_target)
                if cfg.use_hal:
                    hal_w = model.aggregator.weights.tolist()
                else:
                    hal_w = []
            model.train()
            history["step"].append(step)
            history["recon"].append(float(l_recon))
            history["total"].append(float(total))
            history["psnr_val"].append(psnr_val)
            history["hal_weights"].append(hal_w)
            if log:
                log(
                    f"stage1 step {step}: recon={float(l_recon):.4f} "
                    f"total={float(total):.4f} psnr_val={psnr_val:.2f}"
                )

    model.eval()
    out_dir = Path(out_dir)
    ckpt_dir = save_stage1(
        model,
        out_dir / "stage1_ckpt",
        config_hash(run_cfg),
        extra={
            "history": history,
            "train_ids": cache.train_ids,
            "metric_mode": cfg.metric_mode,
            "aam_state": {k: v for k, v in aam.state_dict().items()},
            "q_state": {k: v for k, v in q_net.state_dict().items()},
        },
    )
    return ckpt_dir, history

"""Stage-1 objectives: metric learning, CLUB mutual-information estimation,
reconstruction/perceptual terms, patch-GAN losses, and their weighted sum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import TrainingDivergenceError

LOG_VAR_BOUND = 10.0


@dataclass
class MetricConfig:
    mode: str = "aam"  # "triplet" | "aam"
    triplet_margin: float = 0.01
    aam_margin: float = 0.2  # radians
    aam_scale: float = 30.0

    def __post_init__(self):
        if self.mode not in ("triplet", "aam"):
            raise ValueError(f"metric mode must be 'triplet' or 'aam', got {self.mode!r}")
        if self.triplet_margin <= 0 or self.aam_margin <= 0:
            raise ValueError("margins must be positive")
        if self.aam_scale <= 1:
            raise ValueError("aam scale must exceed 1")


@dataclass
class LossWeights:
    percep: float = 0.1
    adv: float = 1.0
    mi: float = 0.1
    ml: float = 0.1

    def __post_init__(self):
        for name in ("percep", "adv", "mi", "ml"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight '{name}' must be non-negative")


def triplet_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negative: torch.Tensor,
    margin: float = 0.01,
) -> torch.Tensor:
    """Hinge on L2 distances: max(0, d(a, p) - d(a, n) + margin)."""
    if not anchor.shape == positive.shape == negative.shape:
        raise ValueError(
            f"embedding shapes differ: {anchor.shape}, {positive.shape}, {negative.shape}"
        )
    d_ap = torch.linalg.vector_norm(anchor - positive, dim=-1)
    d_an = torch.linalg.vector_norm(anchor - negative, dim=-1)
    return torch.relu(d_ap - d_an + margin).mean()


class AamSoftmax(nn.Module):
    """Additive angular margin softmax over unit-norm class weights."""

    def __init__(
        self,
        n_classes: int,
        embed_dim: int,
        margin: float = 0.2,
        scale: float = 30.0,
        weight: torch.Tensor | None = None,
    ):
        super().__init__()
        self.margin = margin
        self.scale = scale
        if weight is None:
            weight = torch.randn(n_classes, embed_dim) * 0.1
        self.weight = nn.Parameter(weight)

    def logits(self, embedding: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
        if embedding.ndim == 1:
            embedding = embedding[None]
        label = torch.as_tensor(label).reshape(-1)
        if label.max() >= self.weight.shape[0] or label.min() < 0:
            raise IndexError(f"label out of range [0, {self.weight.shape[0]})")
        emb = F.normalize(embedding, dim=-1)
        w = F.normalize(self.weight, dim=-1)
        cos = (emb @ w.T).clamp(-1.0, 1.0)
        sin = torch.sqrt((1.0 - cos * cos).clamp_min(0.0))
        # cos(theta + m) via the angle-sum expansion, falling back to a
        # monotone surrogate once theta + m would pass pi.
        expanded = cos * math.cos(self.margin) - sin * math.sin(self.margin)
        phi = torch.where(
            cos > math.cos(math.pi - self.margin),
            expanded,
            cos - self.margin * math.sin(self.margin),
        )
        one_hot = F.one_hot(label, num_classes=self.weight.shape[0]).to(cos.dtype)
        return self.scale * (one_hot * phi + (1.0 - one_hot) * cos)

    def forward(self, embedding: torch.Tensor, label) -> torch.Tensor:
        label = torch.as_tensor(label).reshape(-1)
        return F.cross_entropy(self.logits(embedding, label), label)


def aam_softmax_loss(
    embedding: torch.Tensor,
    class_weights: torch.Tensor,
    label: int | torch.Tensor,
    margin: float = 0.2,
    scale: float = 30.0,
) -> torch.Tensor:
    """Functional form over explicit per-identity rows."""
    module = AamSoftmax(
        class_weights.shape[0], class_weights.shape[1], margin, scale, weight=class_weights
    )
    return module(embedding, label)


class ClubEstimator(nn.Module):
    """Variational net q(z_m | z_id) with mean and diagonal log-variance heads."""

    def __init__(self, id_dim: int, motion_dim: int, hidden: int = 128):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(id_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
        )
        self.mu_head = nn.Linear(hidden, motion_dim)
        self.logvar_head = nn.Linear(hidden, motion_dim)

    def forward(self, z_id: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.net(z_id)
        return self.mu_head(h), self.logvar_head(h).clamp(-LOG_VAR_BOUND, LOG_VAR_BOUND)


def _gaussian_log_prob(z: torch.Tensor, mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    return -0.5 * ((z - mu) ** 2 / logvar.exp() + logvar + math.log(2.0 * math.pi)).sum(-1)


def club_q_nll(q: ClubEstimator, z_id: torch.Tensor, z_m: torch.Tensor) -> torch.Tensor:
    """Mean Gaussian negative log-likelihood of z_m under q(.|z_id); trains q."""
    if z_id.shape[0] != z_m.shape[0]:
        raise ValueError(f"batch sizes differ: {z_id.shape[0]} vs {z_m.shape[0]}")
    mu, logvar = q(z_id)
    return -_gaussian_log_prob(z_m, mu, logvar).mean()


def club_mi_estimate(
    q: ClubEstimator,
    z_id: torch.Tensor,
    z_m: torch.Tensor,
    sampling: str = "full",
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Contrastive log-ratio upper bound on I(z_id; z_m).

    Full mode contrasts each positive pair against all marginal pairs; the
    shuffled mode uses one permuted pairing per sample. q is treated as fixed:
    only the encoder inputs are meant to receive gradients from this value
    (the training loop applies q updates solely from club_q_nll).
    """
    n = z_id.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if z_id.shape[0] != z_m.shape[0]:
        raise ValueError(f"batch sizes differ: {z_id.shape[0]} vs {z_m.shape[0]}")
    mu, logvar = q(z_id)
    positive = _gaussian_log_prob(z_m, mu, logvar).mean()
    if sampling == "full":
        # (i, j) matrix of log q(z_m_j | z_id_i), averaged over both indices.
        marginal = _gaussian_log_prob(z_m[None, :, :], mu[:, None, :], logvar[:, None, :]).mean()
    elif sampling == "shuffled":
        perm = torch.randperm(n, generator=generator)
        marginal = _gaussian_log_prob(z_m[perm], mu, logvar).mean()
    else:
        raise ValueError(f"sampling must be 'full' or 'shuffled', got {sampling!r}")
    return positive - marginal


def fit_club(
    q: ClubEstimator,
    z_id: torch.Tensor,
    z_m: torch.Tensor,
    steps: int = 300,
    lr: float = 1e-3,
    batch_size: int = 512,
    generator: torch.Generator | None = None,
) -> None:
    """Fit q to convergence on a fixed sample (used by calibration oracles)."""
    opt = torch.optim.Adam(q.parameters(), lr=lr)
    n = z_id.shape[0]
    for _ in range(steps):
        idx = torch.randint(0, n, (min(batch_size, n),), generator=generator)
        opt.zero_grad()
        loss = club_q_nll(q, z_id[idx], z_m[idx])
        loss.backward()
        opt.step()


def reconstruction_losses(
    pred: torch.Tensor, target: torch.Tensor, pyramid_levels: int = 3
) -> tuple[torch.Tensor, torch.Tensor]:
    """(L_recon, L_percep): pixel L1 and a fixed multi-scale downsampled L1."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    l_recon = (pred - target).abs().mean()
    parts = []
    p, t = pred, target
    for _ in range(pyramid_levels):
        p = F.avg_pool2d(p, 2)
        t = F.avg_pool2d(t, 2)
        parts.append((p - t).abs().mean())
    return l_recon, torch.stack(parts).mean()


class PatchDiscriminator(nn.Module):
    """Small patch discriminator emitting a logit map."""

    def __init__(self, in_channels: int = 3, base: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(base, base * 2, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(base * 2, 1, 3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def adversarial_g_loss(disc, fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator term on fakes only."""
    return F.softplus(-disc(fake)).mean()


def adversarial_d_loss(disc, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """Discriminator term on both; fakes are detached."""
    return F.softplus(-disc(real)).mean() + F.softplus(disc(fake.detach())).mean()


def adversarial_losses(disc, real: torch.Tensor, fake: torch.Tensor):
    """Non-saturating logistic losses: (generator term, discriminator term)."""
    return adversarial_g_loss(disc, fake), adversarial_d_loss(disc, real, fake)


def motion_total_loss(parts: dict, weights: LossWeights | None = None) -> torch.Tensor:
    """L_recon + w_percep L_percep + w_adv L_adv + w_mi L_MI + w_ml L_ML."""
    weights = weights or LossWeights()
    for name in ("recon", "percep", "adv", "mi", "ml"):
        value = parts[name]
        scalar = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(scalar):
            raise TrainingDivergenceError(name, scalar)
    return (
        parts["recon"]
        + weights.percep * parts["percep"]
        + weights.adv * parts["adv"]
        + weights.mi * parts["mi"]
        + weights.ml * parts["ml"]
    )

"""Diffusion schedule, forward noising, the denoising objective, the
deterministic accelerated sampler, and parameter averaging."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import ConfigError

BETA_START = 1e-4
BETA_END = 0.02


@dataclass
class DiffusionSchedule:
    """Beta/alpha tables for T noising steps; index t in [1, T] maps to t - 1."""

    T_steps: int
    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor

    def alpha_bar(self, t) -> torch.Tensor:
        """Cumulative product at step t (t = 0 returns 1)."""
        t = torch.as_tensor(t, dtype=torch.long)
        out = torch.where(
            t > 0,
            self.alpha_bars[(t - 1).clamp(min=0)],
            torch.ones_like(t, dtype=self.alpha_bars.dtype),
        )
        return out


def make_schedule(T_steps: int = 1000) -> DiffusionSchedule:
    """Linear beta schedule from 1e-4 to 0.02 over T steps."""
    if T_steps < 2:
        raise ConfigError(f"T_steps must be >= 2, got {T_steps}")
    betas = torch.linspace(BETA_START, BETA_END, T_steps, dtype=torch.float64)
    alphas = 1.0 - betas
    alpha_bars = torch.cumprod(alphas, dim=0)
    return DiffusionSchedule(T_steps=T_steps, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def q_sample(
    m0: torch.Tensor, t, eps: torch.Tensor, schedule: DiffusionSchedule
) -> torch.Tensor:
    """Noise the clean sequence: sqrt(abar_t) m0 + sqrt(1 - abar_t) eps."""
    if m0.shape != eps.shape:
        raise ValueError(f"noise shape {tuple(eps.shape)} != sequence shape {tuple(m0.shape)}")
    ab = schedule.alpha_bar(t).to(m0.dtype)
    while ab.ndim < m0.ndim:
        ab = ab.unsqueeze(-1)
    return torch.sqrt(ab) * m0 + torch.sqrt(1.0 - ab) * eps


def invert_q_sample(
    m_t: torch.Tensor, t, eps: torch.Tensor, schedule: DiffusionSchedule
) -> torch.Tensor:
    """Recover m0 from (m_t, t, eps): the identity the sampler oracle uses."""
    ab = schedule.alpha_bar(t).to(m_t.dtype)
    while ab.ndim < m_t.ndim:
        ab = ab.unsqueeze(-1)
    return (m_t - torch.sqrt(1.0 - ab) * eps) / torch.sqrt(ab)


def diffusion_loss(eps: torch.Tensor, eps_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared error between true and predicted noise."""
    if eps.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(eps.shape)} vs {tuple(eps_hat.shape)}")
    return ((eps - eps_hat) ** 2).mean()


def ddim_step_sequence(T_steps: int, steps: int) -> list[int]:
    """Evenly spaced decreasing step subset from T down toward 1."""
    if steps > T_steps:
        raise ConfigError(f"DDIM steps ({steps}) cannot exceed schedule length ({T_steps})")
    taus = torch.linspace(T_steps, 1, steps).round().long().tolist()
    out = []
    for t in taus:
        if not out or t < out[-1]:
            out.append(int(t))
    return out


def ddim_sample(
    model,
    conditioning,
    schedule: DiffusionSchedule,
    shape: tuple[int, ...],
    steps: int = 50,
    eta: float = 0.0,
    seed: int | None = None,
    initial_noise: torch.Tensor | None = None,
    dtype: torch.dtype = torch.float32,
    taus: list[int] | None = None,
) -> torch.Tensor:
    """Deterministic (eta = 0) accelerated sampler; returns the clean estimate.

    ``model(x_t, t, conditioning) -> eps_hat``. The initial noise is drawn from
    ``seed`` unless given explicitly. ``taus`` overrides the evenly spaced
    decreasing step subset (the final implicit target is always step 0).
    """
    if taus is None:
        taus = ddim_step_sequence(schedule.T_steps, steps)
    elif any(t > schedule.T_steps or t < 1 for t in taus):
        raise ConfigError(f"step subset {taus} out of range for T={schedule.T_steps}")
    if initial_noise is None:
        gen = torch.Generator()
        if seed is not None:
            gen.manual_seed(seed)
        x = torch.randn(*shape, generator=gen, dtype=dtype)
    else:
        x = initial_noise.to(dtype)
    noise_gen = torch.Generator()
    noise_gen.manual_seed(0 if seed is None else seed + 1)

    for i, t in enumerate(taus):
        eps_hat = model(x, t, conditioning)
        ab_t = schedule.alpha_bar(t).to(x.dtype)
        x0 = (x - torch.sqrt(1.0 - ab_t) * eps_hat) / torch.sqrt(ab_t)
        t_prev = taus[i + 1] if i + 1 < len(taus) else 0
        ab_prev = schedule.alpha_bar(t_prev).to(x.dtype)
        if eta > 0.0 and t_prev > 0:
            sigma = (
                eta
                * torch.sqrt((1.0 - ab_prev) / (1.0 - ab_t))
                * torch.sqrt(1.0 - ab_t / ab_prev)
            )
            noise = torch.randn(*shape, generator=noise_gen, dtype=x.dtype)
        else:
            sigma = torch.zeros((), dtype=x.dtype)
            noise = torch.zeros_like(x)
        dir_coeff = torch.sqrt((1.0 - ab_prev - sigma**2).clamp(min=0.0))
        x = torch.sqrt(ab_prev) * x0 + dir_coeff * eps_hat + sigma * noise
    return x


def ema_update(shadow, current, decay: float):
    """shadow <- decay * shadow + (1 - decay) * current, elementwise."""
    if not 0.0 <= decay <= 1.0:
        raise ValueError(f"decay must lie in [0, 1], got {decay}")
    if torch.is_tensor(shadow):
        if shadow.shape != current.shape:
            raise ValueError(f"shape mismatch: {tuple(shadow.shape)} vs {tuple(current.shape)}")
        return decay * shadow + (1.0 - decay) * current
    return type(shadow)(ema_update(s, c, decay) for s, c in zip(shadow, current))


class EmaTracker:
    """Shadow copy of a module's parameters updated after each optimizer step."""

    def __init__(self, module: torch.nn.Module, decay: float = 0.995):
        if not 0.0 <= decay <= 1.0:
            raise ValueError(f"decay must lie in [0, 1], got {decay}")
        self.decay = decay
        self.shadow = {
            name: p.detach().clone() for name, p in module.state_dict().items()
        }

    def update(self, module: torch.nn.Module) -> None:
        for name, p in module.state_dict().items():
            if p.dtype.is_floating_point:
                self.shadow[name] = ema_update(self.shadow[name], p.detach(), self.decay)
            else:
                self.shadow[name] = p.detach().clone()

    def copy_to(self, module: torch.nn.Module) -> None:
        module.load_state_dict(self.shadow)

    def state_dict(self) -> dict:
        return dict(self.shadow)

"""Shared test oracles: central finite differences against autograd."""

import torch


def finite_diff_max_rel_err(fn, tensors, eps: float = 1e-5) -> float:
    """Max relative error between autograd gradients of fn() and central
    differences over every element of `tensors`.

    fn must be a deterministic closure over `tensors` returning a scalar.
    Relative error is normalized by the largest gradient magnitude seen, so a
    uniform 1e-4 threshold is meaningful across losses of different scales.
    """
    out = fn()
    grads = torch.autograd.grad(out, tensors)
    worst = 0.0
    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        numeric = torch.zeros_like(flat)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            f_plus = float(fn().detach())
            flat[i] = orig - eps
            f_minus = float(fn().detach())
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * eps)
        analytic = g.reshape(-1)
        scale = max(analytic.abs().max().item(), numeric.abs().max().item(), 1e-8)
        worst = max(worst, (analytic - numeric).abs().max().item() / scale)
    return worst


def double_leaf(*shape, seed: int = 0, scale: float = 1.0) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return (torch.randn(*shape, generator=g, dtype=torch.float64) * scale).requires_grad_(True)

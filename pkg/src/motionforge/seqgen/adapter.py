"""Variance adapter: sequential residual attribute blocks on the control
features. Each block predicts one attribute set from the current features
(recurrent temporal layer + linear head) and residually re-injects either the
ground-truth value (training), an override (controlled inference), or its own
prediction (free inference)."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

ATTRIBUTE_ORDER = (("pose", 3), ("camera", 2))
ATTRIBUTE_COUNT = len(ATTRIBUTE_ORDER)  # K


class AttributeBlock(nn.Module):
    def __init__(self, feature_width: int, attr_dim: int, rnn_hidden: int = 64):
        super().__init__()
        self.attr_dim = attr_dim
        self.rnn = nn.LSTM(feature_width, rnn_hidden, batch_first=True)
        self.head = nn.Linear(rnn_hidden, attr_dim)
        # Zero-initialized residual encoder: the adapter is a no-op at start.
        self.encoder = nn.Linear(attr_dim, feature_width)
        nn.init.zeros_(self.encoder.weight)
        nn.init.zeros_(self.encoder.bias)

    def predict(self, features: torch.Tensor) -> torch.Tensor:
        h, _ = self.rnn(features)
        return self.head(h)

    def encode(self, values: torch.Tensor) -> torch.Tensor:
        return self.encoder(values)


class VarianceAdapter(nn.Module):
    def __init__(self, feature_width: int, rnn_hidden: int = 64):
        super().__init__()
        self.blocks = nn.ModuleDict(
            {name: AttributeBlock(feature_width, dim, rnn_hidden) for name, dim in ATTRIBUTE_ORDER}
        )

    def forward(
        self,
        features: torch.Tensor,
        gt_attrs: dict[str, torch.Tensor] | None = None,
        override_attrs: dict[str, torch.Tensor] | None = None,
    ) -> tuple[torch.Tensor, dict[str, torch.Tensor], dict[str, torch.Tensor]]:
        """Returns (features', predictions, per-attribute L2 losses).

        Exactly one mode: training (gt_attrs), controlled inference
        (override_attrs), or free inference (neither).
        """
        if gt_attrs is not None and override_attrs is not None:
            raise ValueError("pass either gt_attrs (training) or override_attrs, not both")
        t = features.shape[1]
        preds: dict[str, torch.Tensor] = {}
        var_losses: dict[str, torch.Tensor] = {}
        for name, dim in ATTRIBUTE_ORDER:
            block = self.blocks[name]
            pred = block.predict(features)
            preds[name] = pred
            if gt_attrs is not None:
                signal = gt_attrs[name]
                var_losses[name] = F.mse_loss(pred, signal)
            elif override_attrs is not None and name in override_attrs:
                signal = override_attrs[name]
            else:
                signal = pred
            if signal.shape[-2] != t:
                raise ValueError(
                    f"attribute '{name}' track length {signal.shape[-2]} != feature length {t}"
                )
            if signal.shape[-1] != dim:
                raise ValueError(f"attribute '{name}' expects {dim} channels")
            features = features + block.encode(signal)
        return features, preds, var_losses

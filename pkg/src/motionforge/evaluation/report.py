"""Metric report schema and artifact writers."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class MetricReport:
    psnr: float | None = None
    ssim: float | None = None
    csim_proxy: float | None = None
    probe_accuracy: float | None = None
    sync_r: float | None = None
    hal_weights: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.ssim is not None and not -1.0 <= self.ssim <= 1.0:
            raise ValueError(f"ssim out of [-1, 1]: {self.ssim}")
        if self.probe_accuracy is not None and not 0.0 <= self.probe_accuracy <= 1.0:
            raise ValueError(f"probe_accuracy out of [0, 1]: {self.probe_accuracy}")
        if self.hal_weights:
            total = sum(self.hal_weights)
            if abs(total - 1.0) > 1e-5:
                raise ValueError(f"HAL weights must sum to 1, got {total}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls(**json.loads(Path(path).read_text()))


def write_hal_weights_csv(weights: list[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "weight"])
        for level, weight in enumerate(weights, start=1):
            writer.writerow([level, f"{weight:.6f}"])

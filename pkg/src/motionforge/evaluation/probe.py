"""Identity probes: a small trained classifier standing in for a pretrained
face recognizer, and the linear disentanglement probe over motion latents."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.linear_model import LogisticRegression
from torch import nn

from ..errors import UsageError
from ..pipelines.data import CorpusCache


class IdentityProbe(nn.Module):
    """Conv classifier over frames; the penultimate layer is the embedding."""

    def __init__(self, n_ids: int, resolution: int = 64):
        super().__init__()
        self.resolution = resolution
        self.n_ids = n_ids
        self.trained = False
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
        )
        self.embed_fc = nn.Linear(64, 64)
        self.classify = nn.Linear(64, n_ids)

    def embed(self, frames: torch.Tensor) -> torch.Tensor:
        h = self.features(frames).mean(dim=(2, 3))
        return self.embed_fc(h)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.classify(F.leaky_relu(self.embed(frames), 0.2))

    def embed_frame(self, frame: np.ndarray) -> np.ndarray:
        """(H, W, 3) numpy frame -> embedding vector."""
        if not self.trained:
            raise UsageError("identity probe must be trained before use")
        with torch.no_grad():
            t = torch.from_numpy(np.ascontiguousarray(frame, dtype=np.float32))
            t = t.permute(2, 0, 1)[None]
            return self.embed(t)[0].numpy()


def train_identity_probe(
    cache: CorpusCache,
    epochs: int = 30,
    seed: int = 0,
    min_accuracy: float = 0.95,
) -> tuple[IdentityProbe, float]:
    """Train on train-split frames, report held-out accuracy on the test split."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    all_ids = sorted({c.identity.id_index for c in cache.clips})
    id_to_class = {id_index: k for k, id_index in enumerate(all_ids)}
    probe = IdentityProbe(len(all_ids), cache.resolution)
    opt = torch.optim.Adam(probe.parameters(), lr=2e-3)

    def batches(split: str, batch_size: int = 32, shuffle: bool = True):
        clips = cache.clips_of_split(split)
        items = [(ci, fi) for ci, clip in enumerate(clips) for fi in range(0, len(clip), 4)]
        order = rng.permutation(len(items)) if shuffle else np.arange(len(items))
        for lo in range(0, len(items), batch_size):
            chunk = [items[k] for k in order[lo : lo + batch_size]]
            frames = torch.cat([clips[ci].frames_float([fi]) for ci, fi in chunk])
            labels = torch.tensor(
                [id_to_class[clips[ci].identity.id_index] for ci, _ in chunk]
            )
            yield frames, labels

    for _ in range(epochs):
        probe.train()
        for frames, labels in batches("train"):
            opt.zero_grad()
            F.cross_entropy(probe(frames), labels).backward()
            opt.step()

    probe.eval()
    correct = total = 0
    eval_split = "test" if cache.clips_of_split("test") else "train"
    with torch.no_grad():
        for frames, labels in batches(eval_split, shuffle=False):
            pred = probe(frames).argmax(dim=1)
            correct += int((pred == labels).sum())
            total += len(labels)
    accuracy = correct / max(total, 1)
    if accuracy < min_accuracy:
        raise UsageError(
            f"identity probe reached only {accuracy:.1%} held-out accuracy "
            f"(needs {min_accuracy:.0%}); corpus too small or too few epochs"
        )
    probe.trained = True
    return probe, accuracy


def disentanglement_probe(
    latents: np.ndarray,
    labels: np.ndarray,
    seed: int = 0,
    train_fraction: float = 0.8,
) -> float:
    """Held-out accuracy of a linear classifier identity <- latent.

    Chance level is 1 / #identities; values near chance mean the latents carry
    little identity information.
    """
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2:
        raise ValueError("need at least 2 identity classes")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    cut = int(train_fraction * len(labels))
    train_idx, test_idx = order[:cut], order[cut:]
    clf = LogisticRegression(max_iter=3000, C=1.0)
    clf.fit(latents[train_idx], labels[train_idx])
    return float(clf.score(latents[test_idx], labels[test_idx]))

"""In-RAM corpus access for the training loops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..synthdata import store
from ..synthdata.core import FactorTrack, IdentitySpec


@dataclass
class ClipData:
    identity: IdentitySpec
    frames: torch.Tensor  # (T, 3, H, W) uint8
    factors: FactorTrack
    control: np.ndarray
    split: str

    def __len__(self) -> int:
        return self.frames.shape[0]

    def frames_float(self, indices) -> torch.Tensor:
        idx = torch.as_tensor(np.asarray(indices, dtype=np.int64))
        return self.frames.index_select(0, idx).float() / 255.0


class CorpusCache:
    """Loads every clip once; serves float batches on demand."""

    def __init__(self, corpus: store.Corpus):
        self.corpus = corpus
        self.clips: list[ClipData] = []
        for entry in corpus.entries:
            clip_dir = corpus.clip_dir(entry)
            identity, factors, control = store.load_meta(clip_dir)
            frames = torch.from_numpy(
                store.load_frames_uint8(clip_dir).transpose(0, 3, 1, 2).copy()
            )
            self.clips.append(
                ClipData(
                    identity=identity,
                    frames=frames,
                    factors=factors,
                    control=control,
                    split=entry.split,
                )
            )
        self.train_indices = [i for i, c in enumerate(self.clips) if c.split == "train"]
        self.test_indices = [i for i, c in enumerate(self.clips) if c.split == "test"]
        self.train_ids = sorted({self.clips[i].identity.id_index for i in self.train_indices})
        self.id_to_class = {id_index: k for k, id_index in enumerate(self.train_ids)}

    @property
    def resolution(self) -> int:
        return self.clips[0].frames.shape[-1]

    def clips_of_split(self, split: str) -> list[ClipData]:
        return [c for c in self.clips if c.split == split]

    def sample_pair_batch(self, rng: np.random.Generator, batch_size: int):
        """(source, target, class labels) drawn uniformly within random train clips."""
        sources, targets, labels = [], [], []
        for _ in range(batch_size):
            clip = self.clips[rng.choice(self.train_indices)]
            s, t = rng.integers(0, len(clip), size=2)
            sources.append(clip.frames_float([s]))
            targets.append(clip.frames_float([t]))
            labels.append(self.id_to_class[clip.identity.id_index])
        return (
            torch.cat(sources),
            torch.cat(targets),
            torch.tensor(labels, dtype=torch.long),
        )

    def sample_other_identity(self, rng: np.random.Generator, id_index: int):
        """A random train frame from a different identity (for ML negatives)."""
        candidates = [
            i for i in self.train_indices if self.clips[i].identity.id_index != id_index
        ]
        clip = self.clips[rng.choice(candidates)]
        frame_idx = rng.integers(0, len(clip))
        return clip.frames_float([frame_idx]), self.id_to_class[clip.identity.id_index]

"""Clip container and corpus manifest I/O.

One directory per clip: numbered lossless PNGs ``f%05d.png`` plus ``meta.json``
holding the identity spec, factor arrays, and control signal. A corpus is a
directory of clip directories plus ``corpus.json`` listing paths, id_index,
and split tags.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import FactorTrack, IdentitySpec, SynthClip, gen_clip
from .render import FACTOR_NAMES

CACHE_ENV_VAR = "MOTIONFORGE_CACHE"


def frame_to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)


def save_clip(clip: SynthClip, clip_dir: str | Path) -> None:
    clip_dir = Path(clip_dir)
    clip_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        Image.fromarray(frame_to_uint8(frame)).save(clip_dir / f"f{i:05d}.png")
    meta = {
        "identity": {
            "id_index": clip.identity.id_index,
            "shape_family": clip.identity.shape_family,
            "hue": clip.identity.hue,
            "base_size": clip.identity.base_size,
        },
        "factors": {name: getattr(clip.factors, name).tolist() for name in FACTOR_NAMES},
        "control": clip.control.tolist(),
    }
    with open(clip_dir / "meta.json", "w") as fh:
        json.dump(meta, fh)


def load_meta(clip_dir: str | Path) -> tuple[IdentitySpec, FactorTrack, np.ndarray]:
    with open(Path(clip_dir) / "meta.json") as fh:
        meta = json.load(fh)
    identity = IdentitySpec(**meta["identity"])
    factors = FactorTrack(
        **{name: np.asarray(meta["factors"][name], dtype=np.float64) for name in FACTOR_NAMES}
    )
    control = np.asarray(meta["control"], dtype=np.float64)
    return identity, factors, control


def load_frames(clip_dir: str | Path) -> list[np.ndarray]:
    clip_dir = Path(clip_dir)
    frames = []
    for path in sorted(clip_dir.glob("f*.png")):
        frames.append(np.asarray(Image.open(path), dtype=np.float32) / 255.0)
    return frames


def load_frames_uint8(clip_dir: str | Path) -> np.ndarray:
    """(T, H, W, 3) uint8 stack, the compact in-RAM training representation."""
    clip_dir = Path(clip_dir)
    return np.stack(
        [np.asarray(Image.open(p), dtype=np.uint8) for p in sorted(clip_dir.glob("f*.png"))]
    )


def load_clip(clip_dir: str | Path) -> SynthClip:
    identity, factors, control = load_meta(clip_dir)
    return SynthClip(
        identity=identity, frames=load_frames(clip_dir), factors=factors, control=control
    )


@dataclass
class CorpusEntry:
    path: str
    id_index: int
    split: str


@dataclass
class Corpus:
    root: Path
    seed: int
    resolution: int
    entries: list[CorpusEntry]

    def clips(self, split: str | None = None) -> list[CorpusEntry]:
        if split is None:
            return list(self.entries)
        return [e for e in self.entries if e.split == split]

    def clip_dir(self, entry: CorpusEntry) -> Path:
        return self.root / entry.path

    @property
    def n_identities(self) -> int:
        return len({e.id_index for e in self.entries})

    def train_identity_indices(self) -> list[int]:
        return sorted({e.id_index for e in self.entries if e.split == "train"})


def _cache_dir() -> Path | None:
    value = os.environ.get(CACHE_ENV_VAR)
    return Path(value) if value else None


def build_corpus(
    out_dir: str | Path,
    corpus_seed: int,
    n_ids: int,
    clips_per_id: int,
    frames_per_clip: int,
    resolution: int = 64,
) -> Corpus:
    """Generate and persist a corpus; 90/10 train/test split by clip.

    When MOTIONFORGE_CACHE is set, previously generated corpora with the same
    parameters are copied from the cache instead of re-rendered.
    """
    out_dir = Path(out_dir)
    key = f"s{corpus_seed}_i{n_ids}_c{clips_per_id}_t{frames_per_clip}_r{resolution}"
    cache = _cache_dir()
    if cache is not None:
        cached = cache / hashlib.sha256(key.encode()).hexdigest()[:16]
        if (cached / "corpus.json").exists():
            if not (out_dir / "corpus.json").exists():
                shutil.copytree(cached, out_dir, dirs_exist_ok=True)
            return load_corpus(out_dir)

    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    clip_no = 0
    total = n_ids * clips_per_id
    for id_index in range(n_ids):
        for clip_index in range(clips_per_id):
            clip = gen_clip(
                corpus_seed, id_index, frames_per_clip, clip_index=clip_index, resolution=resolution
            )
            name = f"id{id_index:03d}_clip{clip_index:02d}"
            save_clip(clip, out_dir / name)
            is_test = (clip_no % 10 == 9) if total >= 10 else (clip_no == total - 1)
            entries.append(
                CorpusEntry(path=name, id_index=id_index, split="test" if is_test else "train")
            )
            clip_no += 1
    manifest = {
        "seed": corpus_seed,
        "resolution": resolution,
        "clips": [e.__dict__ for e in entries],
    }
    with open(out_dir / "corpus.json", "w") as fh:
        json.dump(manifest, fh, indent=1)

    if cache is not None:
        cached = cache / hashlib.sha256(key.encode()).hexdigest()[:16]
        if not (cached / "corpus.json").exists():
            shutil.copytree(out_dir, cached, dirs_exist_ok=True)
    return load_corpus(out_dir)


def load_corpus(root: str | Path) -> Corpus:
    root = Path(root)
    with open(root / "corpus.json") as fh:
        manifest = json.load(fh)
    entries = [CorpusEntry(**c) for c in manifest["clips"]]
    return Corpus(
        root=root, seed=manifest["seed"], resolution=manifest["resolution"], entries=entries
    )

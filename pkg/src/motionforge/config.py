"""Run configuration: typed sections, INI-style parsing with line-accurate
errors, canonical serialization, and config hashing."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class CorpusConfig:
    path: str = "corpus"
    seed: int = 7
    ids: int = 10
    clips_per_id: int = 4
    frames: int = 200
    resolution: int = 64


@dataclass
class Stage1Config:
    d_m: int = 20
    hidden: int = 128
    identity_dim: int = 64
    base_channels: int = 24
    projector: str = "lmd"
    metric_mode: str = "aam"
    use_hal: bool = True
    use_ml: bool = True
    use_mid: bool = True
    separate_identity_trunk: bool = False
    lambda_percep: float = 0.1
    lambda_adv: float = 1.0
    lambda_mi: float = 0.1
    lambda_ml: float = 0.1
    lr: float = 2e-4
    disc_lr: float = 1e-4
    q_lr: float = 1e-3
    batch_size: int = 8
    steps: int = 3000
    eval_every: int = 250
    seed: int = 0

    def validate(self) -> None:
        if self.projector not in ("lmd", "fc"):
            raise ConfigError(f"stage1.projector must be lmd|fc, got {self.projector!r}")
        if self.metric_mode not in ("aam", "triplet"):
            raise ConfigError(
                f"stage1.metric_mode must be aam|triplet, got {self.metric_mode!r}"
            )
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("stage1.steps and stage1.batch_size must be positive")


@dataclass
class Stage2Config:
    T_steps: int = 1000
    ddim_steps: int = 50
    window: int = 50
    speech_width: int = 128
    embed_width: int = 32
    se_layers: int = 4
    dmg_layers: int = 2
    heads: int = 2
    dropout: float = 0.2
    ema_decay: float = 0.995
    lambda_gen: float = 1.0
    adapter_rnn_hidden: int = 64
    lr: float = 1e-4
    batch_size: int = 8
    steps: int = 3000
    eval_every: int = 250
    seed: int = 0

    def validate(self) -> None:
        if self.ddim_steps > self.T_steps:
            raise ConfigError(
                f"stage2.ddim_steps ({self.ddim_steps}) cannot exceed T_steps ({self.T_steps})"
            )
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigError("stage2.ema_decay must lie in [0, 1]")
        if self.window < 2:
            raise ConfigError("stage2.window must be at least 2 frames")


@dataclass
class EvalConfig:
    seed: int = 0
    probe_epochs: int = 30
    max_eval_clips: int = 8


@dataclass
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        self.stage1.validate()
        self.stage2.validate()


_SECTIONS = ("corpus", "stage1", "stage2", "eval")


def _coerce(raw: str, target_type, where: str):
    raw = raw.strip()
    if target_type is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"cannot parse boolean {raw!r} {where}")
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {target_type.__name__} from {raw!r} {where}") from exc
    return raw


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    cfg = RunConfig()
    section = None
    section_fields: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section [{name}] at {source}:{lineno}")
            section = getattr(cfg, name)
            section_fields = {f.name: f.type for f in fields(section)}
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value' at {source}:{lineno}: {stripped!r}")
        if section is None:
            raise ConfigError(f"key outside any section at {source}:{lineno}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in section_fields:
            raise ConfigError(f"unknown key {key!r} at {source}:{lineno}")
        ftype = {f.name: f for f in fields(section)}[key].type
        pytype = {"int": int, "float": float, "bool": bool, "str": str}.get(str(ftype), str)
        if isinstance(ftype, type):
            pytype = ftype
        setattr(section, key, _coerce(raw, pytype, f"at {source}:{lineno}"))
    cfg.validate()
    return cfg


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for section_name in _SECTIONS:
        section = getattr(cfg, section_name)
        lines.append(f"[{section_name}]")
        for f in fields(section):
            lines.append(f"{f.name} = {_format_value(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply 'section.key=value' string overrides (CLI flags beat file values)."""
    for dotted, raw in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override key must be 'section.key', got {dotted!r}")
        section_name, _, key = dotted.partition(".")
        if section_name not in _SECTIONS:
            raise ConfigError(f"unknown section in override {dotted!r}")
        section = getattr(cfg, section_name)
        matching = {f.name: f for f in fields(section)}
        if key not in matching:
            raise ConfigError(f"unknown key in override {dotted!r}")
        ftype = matching[key].type
        pytype = ftype if isinstance(ftype, type) else {"int": int, "float": float,
                                                        "bool": bool, "str": str}[str(ftype)]
        setattr(section, key, _coerce(raw, pytype, f"in override {dotted!r}"))
    cfg.validate()
    return cfg


def write_effective_config(cfg: RunConfig, run_dir: str | Path) -> str:
    """Echo the effective config and its hash into a run directory."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    text = serialize_config(cfg)
    (run_dir / "config.ini").write_text(text)
    digest = config_hash(cfg)
    (run_dir / "config.hash").write_text(digest + "\n")
    return digest

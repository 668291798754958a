"""Flat ``key=value`` run configuration with typed defaults."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .model import ModelConfig
from .smc import SMCConfig
from .tmc import TMCConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    data_dir: str = ""
    out_dir: str = "runs/default"

    # corpus
    n_glosses: int = 10
    n_train: int = 50
    n_dev: int = 10
    n_test: int = 10
    canvas: int = 96
    sentence_min: int = 2
    sentence_max: int = 4
    duration_min: int = 5
    duration_max: int = 9

    # spatial module
    input_size: int = 96
    backbone_channels: tuple = (8, 16, 32, 64, 64)
    K: int = 7
    crop_hand: int = 10
    crop_face: int = 7
    cue_widths: tuple = (64, 64, 32, 32)
    head_channels: tuple = (32, 16)

    # temporal module and encoders
    tmc_blocks: int = 2
    tmc_kernel: int = 5
    tmc_width: int = 128
    inter_width: int = 128
    intra_width: int = 32
    encoder_norm: bool = False        # layer-norm every BLSTM input step

    # loss
    alpha: float = 0.6
    beta: float = 30.0
    beta_mode: str = "inside"

    # optimization
    epochs: int = 200
    batch_size: int = 2
    lr: float = 2e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 10.0
    augment: bool = True
    aug_discard_prob: float = 0.2
    aug_flip_prob: float = 0.5
    time_budget: float = 0.0          # seconds; 0 disables
    train_eval_every: int = 5         # epochs between train-split WER evaluations; 0 disables
    stop_train_wer: float = -1.0      # stop once train WER <= this; negative disables

    # decoding
    beam: int = 20

    def model_config(self) -> ModelConfig:
        smc = SMCConfig(self.input_size, tuple(self.backbone_channels), self.K, self.crop_hand, self.crop_face,
                        tuple(self.cue_widths), tuple(self.head_channels))
        tmc = TMCConfig(self.tmc_blocks, self.tmc_kernel, self.tmc_width)
        return ModelConfig(self.n_glosses + 1, smc, tmc, self.inter_width, self.intra_width, self.encoder_norm)

    def validate(self) -> "RunConfig":
        if self.sentence_min < 1 or self.sentence_max < self.sentence_min:
            raise ConfigError("need 1 <= sentence_min <= sentence_max")
        if self.duration_min < 1 or self.duration_max < self.duration_min:
            raise ConfigError("need 1 <= duration_min <= duration_max")
        if self.batch_size < 1 or self.epochs < 0 or self.beam < 1:
            raise ConfigError("batch_size and beam must be >= 1, epochs >= 0")
        if self.beta_mode not in ("inside", "outside"):
            raise ConfigError(f"beta_mode must be 'inside' or 'outside', got {self.beta_mode!r}")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if self.canvas != self.input_size:
            raise ConfigError(f"canvas ({self.canvas}) and input_size ({self.input_size}) must agree")
        try:
            self.model_config().smc.validate()
            self.model_config().tmc.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # -- text form ------------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def override(self, **values) -> "RunConfig":
        return dataclasses.replace(self, **values)


PAPER_SCALE = {
    "input_size": 224, "canvas": 224, "backbone_channels": (64, 128, 256, 512, 512), "crop_hand": 24,
    "crop_face": 16, "cue_widths": (512, 512, 256, 256), "head_channels": (256, 128), "tmc_width": 1024,
    "inter_width": 1024, "intra_width": 256,
}


def _coerce(name: str, default, raw: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key=value`` lines (``#`` starts a comment) over ``base`` defaults."""
    cfg = base or RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _coerce(key, getattr(cfg, key), value)
    return dataclasses.replace(cfg, **updates)


def load_config(path=None, paper_scale: bool = False, **overrides) -> RunConfig:
    base = RunConfig()
    if paper_scale:
        base = dataclasses.replace(base, **PAPER_SCALE)
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        base = parse_config(p.read_text(encoding="utf-8"), base)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(base, **overrides).validate()

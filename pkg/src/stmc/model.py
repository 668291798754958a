"""The full recognizer: SMC per frame, TMC per clip, BLSTM+CTC heads, joint loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seq.blstm import BLSTMEncoder
from .seq.ctc import ctc_loss
from .seq.decode import beam_search_decode, greedy_decode
from .seq.losses import joint_loss, smooth_l1_regression
from .smc import CUES, SMC, SMCConfig
from .tensor import ops
from .tensor.core import ShapeError, Tensor
from .tensor.nn import Module
from .tmc import TMC, TMCConfig


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 11  # glosses + blank
    smc: SMCConfig = field(default_factory=SMCConfig)
    tmc: TMCConfig = field(default_factory=TMCConfig)
    inter_width: int = 128
    intra_width: int = 32
    encoder_norm: bool = False  # standardize BLSTM inputs per step

    @classmethod
    def paper_scale(cls, vocab_size: int) -> "ModelConfig":
        return cls(vocab_size, SMCConfig.paper_scale(), TMCConfig(width=1024), inter_width=1024, intra_width=256)


@dataclass
class ClipOutput:
    inter: Tensor        # [T', |V|] log posteriors of the inter-cue head
    intra: list          # per cue, [T', |V|] log posteriors
    keypoints: Tensor    # [T, K, 2]


@dataclass
class LossParts:
    total: Tensor
    ctc_inter: float
    ctc_intra: list
    regression: float

    def as_dict(self) -> dict:
        d = {"loss": float(self.total.data), "ctc_inter": self.ctc_inter, "regression": self.regression}
        for name, v in zip(CUES, self.ctc_intra):
            d[f"ctc_{name}"] = v
        return d


class STMCModel(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.smc = SMC(config.smc, rng)
        self.tmc = TMC(config.smc.cue_widths, config.tmc, rng)
        c, n = config.tmc.width, config.tmc.num_cues
        norm = config.encoder_norm
        self.inter_encoder = BLSTMEncoder(c, config.inter_width, config.vocab_size, rng, input_norm=norm)
        self.intra_encoders = [BLSTMEncoder(c // n, config.intra_width, config.vocab_size, rng, input_norm=norm)
                               for _ in range(n)]

    def forward(self, videos: list, intra: bool = True) -> list:
        """Run a batch of ``[T_i, 3, S, S]`` videos; all frames share one SMC pass."""
        lengths = [int(v.shape[0]) for v in videos]
        for t in lengths:
            if t < self.config.tmc.min_frames:
                raise ShapeError(f"clip with {t} frames is shorter than the {self.config.tmc.min_frames} TMC needs")
        frames = Tensor(np.concatenate([np.asarray(v, dtype=self.smc.backbone.conv1.weight.dtype) for v in videos]))
        smc_out = self.smc(frames)
        feats = smc_out.concat()
        outs = []
        offset = 0
        for t in lengths:
            clip_feats = ops.getitem(feats, slice(offset, offset + t))
            kp = ops.getitem(smc_out.keypoints, slice(offset, offset + t))
            offset += t
            widths = self.config.smc.cue_widths
            o, f_parts = self.tmc(ops.split(clip_feats, widths, axis=-1))
            inter = self.inter_encoder.log_posteriors(o)
            intra_lp = [enc.log_posteriors(f) for enc, f in zip(self.intra_encoders, f_parts)] if intra else []
            outs.append(ClipOutput(inter, intra_lp, kp))
        return outs

    __call__ = forward


def clip_loss(out: ClipOutput, glosses, keypoints, alpha: float = 0.6, beta: float = 30.0,
              beta_mode: str = "inside") -> LossParts:
    inter = ctc_loss(out.inter, glosses)
    intra = [ctc_loss(lp, glosses) for lp in out.intra]
    reg = smooth_l1_regression(out.keypoints, keypoints, beta, beta_mode)
    total = joint_loss(inter, intra, reg, alpha)
    return LossParts(total, float(inter.data), [float(t.data) for t in intra], float(reg.data))


def batch_loss(outs: list, clips: list, alpha: float = 0.6, beta: float = 30.0, beta_mode: str = "inside") -> LossParts:
    """Mean of per-clip joint losses over the batch."""
    parts = [clip_loss(o, c.glosses, c.keypoints, alpha, beta, beta_mode) for o, c in zip(outs, clips)]
    n = len(parts)
    total = ops.mul(ops.sum(ops.stack([p.total for p in parts])), 1.0 / n)
    n_cues = len(parts[0].ctc_intra)
    return LossParts(
        total,
        sum(p.ctc_inter for p in parts) / n,
        [sum(p.ctc_intra[i] for p in parts) / n for i in range(n_cues)],
        sum(p.regression for p in parts) / n,
    )


def decode(log_posteriors: Tensor, beam: int = 20) -> list:
    post = np.exp(np.asarray(log_posteriors.data, dtype=np.float64))
    if beam <= 1:
        return greedy_decode(post)
    return beam_search_decode(log_posteriors.data, beam, is_log=True)

"""Temporal multi-cue module: stacked intra-cue / inter-cue blocks with temporal pooling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .smc import CUES
from .tensor import ops
from .tensor.core import ShapeError, Tensor
from .tensor.nn import Module, TemporalConv1d


@dataclass(frozen=True)
class TMCConfig:
    num_blocks: int = 2
    kernel: int = 5
    width: int = 128
    num_cues: int = 4

    def validate(self) -> None:
        if self.kernel % 2 == 0:
            raise ShapeError(f"temporal kernel must be odd, got {self.kernel}")
        if self.width % self.num_cues or self.width % 2:
            raise ShapeError(f"path width {self.width} must be divisible by 2 and by {self.num_cues} cues")
        if self.num_blocks < 1:
            raise ShapeError("need at least one block")

    @property
    def min_frames(self) -> int:
        return 2 ** self.num_blocks


@dataclass
class CuePartitionedSequence:
    values: Tensor        # [T, Cf]
    segments: tuple       # ((offset, width), ...) per cue, in cue order

    def __post_init__(self):
        offset = 0
        for off, w in self.segments:
            if off != offset or w <= 0:
                raise ShapeError(f"segments {self.segments} are not contiguous and ordered")
            offset += w
        if offset != self.values.shape[-1]:
            raise ShapeError(f"segment widths sum to {offset}, values have {self.values.shape[-1]} channels")

    @property
    def widths(self) -> tuple:
        return tuple(w for _, w in self.segments)

    def parts(self) -> list:
        return ops.split(self.values, self.widths, axis=-1)


def segments_for(widths) -> tuple:
    offs = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(int)
    return tuple((int(o), int(w)) for o, w in zip(offs, widths))


def output_length(t_len: int, num_blocks: int = 2) -> int:
    for _ in range(num_blocks):
        t_len //= 2
    return t_len


def init_sequences(cue_features) -> tuple:
    """Concatenate per-frame cue vectors; ``o_1`` and ``f_1`` are the same values.

    ``cue_features`` is a list of per-cue tensors ``[T, w_n]`` (or an object
    with a ``cues`` dict in cue order).
    """
    if hasattr(cue_features, "cues"):
        cue_features = [cue_features.cues[c] for c in CUES]
    parts = list(cue_features)
    t_len = parts[0].shape[0]
    if t_len < 1:
        raise ShapeError("need at least one frame")
    for p in parts:
        if p.ndim != 2 or p.shape[0] != t_len:
            raise ShapeError(f"cue features must all be [T={t_len}, w], got {p.shape}")
    values = ops.concat(parts, axis=-1)
    return values, CuePartitionedSequence(values, segments_for([p.shape[1] for p in parts]))


class TMCBlock(Module):
    def __init__(self, in_widths: tuple, o_width: int, config: TMCConfig, rng: np.random.Generator):
        c, n, k = config.width, config.num_cues, config.kernel
        if len(in_widths) != n:
            raise ShapeError(f"expected {n} cue segments, got {len(in_widths)}")
        self.intra = [TemporalConv1d(w, c // n, k, rng) for w in in_widths]
        self.inter_temporal = TemporalConv1d(o_width, c // 2, k, rng)
        self.inter_point = TemporalConv1d(c, c // 2, 1, rng)

    def intra_cue_path(self, f_prev: CuePartitionedSequence) -> CuePartitionedSequence:
        outs = [ops.relu(conv(part)) for conv, part in zip(self.intra, f_prev.parts())]
        return CuePartitionedSequence(ops.concat(outs, axis=-1), segments_for([o.shape[1] for o in outs]))

    def inter_cue_path(self, o_prev: Tensor, f_curr: CuePartitionedSequence) -> Tensor:
        return ops.relu(ops.concat([self.inter_temporal(o_prev), self.inter_point(f_curr.values)], axis=-1))

    def __call__(self, o_prev: Tensor, f_prev: CuePartitionedSequence) -> tuple:
        if o_prev.shape[0] < 2:
            raise ShapeError(f"temporal pooling needs T >= 2, got T={o_prev.shape[0]}")
        f_next = self.intra_cue_path(f_prev)
        o_next = self.inter_cue_path(o_prev, f_next)
        f_pooled = CuePartitionedSequence(ops.temporal_maxpool(f_next.values), f_next.segments)
        return ops.temporal_maxpool(o_next), f_pooled


class TMC(Module):
    def __init__(self, cue_widths: tuple, config: TMCConfig, rng: np.random.Generator):
        config.validate()
        if len(cue_widths) != config.num_cues:
            raise ShapeError(f"{len(cue_widths)} cue widths for {config.num_cues} cues")
        self.config = config
        self.cue_widths = tuple(cue_widths)
        blocks = []
        in_widths, o_width = tuple(cue_widths), int(sum(cue_widths))
        for _ in range(config.num_blocks):
            blocks.append(TMCBlock(in_widths, o_width, config, rng))
            in_widths, o_width = (config.width // config.num_cues,) * config.num_cues, config.width
        self.blocks = blocks

    def __call__(self, cue_features) -> tuple:
        """Returns ``(o[T', C], [f_n[T', C/N] for each cue])``."""
        o, f = init_sequences(cue_features)
        if f.widths != self.cue_widths:
            raise ShapeError(f"cue widths {f.widths} do not match the configured {self.cue_widths}")
        t_len = o.shape[0]
        if t_len < self.config.min_frames:
            raise ShapeError(f"TMC with {self.config.num_blocks} blocks needs T >= {self.config.min_frames}, got {t_len}")
        for block in self.blocks:
            o, f = block(o, f)
        return o, f.parts()


def tmc_forward(model: TMC, cue_features) -> tuple:
    return model(cue_features)

"""Spatial multi-cue module: backbone, pose head, patch cropping and per-cue features.

All frames of a batch go through as one ``[N, 3, S, S]`` tensor; nothing here
couples frames, so outputs for frame ``n`` depend only on frame ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.render import K as DEFAULT_K
from .data.render import L_WRIST, NOSE, R_WRIST
from .tensor import ops
from .tensor.core import ShapeError, Tensor
from .tensor.nn import Conv2d, ConvTranspose2d, Dense, Module

CUES = ("full", "hand", "face", "pose")


@dataclass(frozen=True)
class SMCConfig:
    input_size: int = 96
    backbone_channels: tuple = (8, 16, 32, 64, 64)  # last-but-two is the mid map, last is the top map
    K: int = DEFAULT_K
    crop_hand: int = 10
    crop_face: int = 7
    cue_widths: tuple = (64, 64, 32, 32)  # full, hand (both halves), face, pose
    head_channels: tuple = (32, 16)

    @classmethod
    def paper_scale(cls) -> "SMCConfig":
        return cls(input_size=224, backbone_channels=(64, 128, 256, 512, 512), crop_hand=24, crop_face=16,
                   cue_widths=(512, 512, 256, 256), head_channels=(256, 128))

    @property
    def mid_channels(self) -> int:
        return self.backbone_channels[2]

    @property
    def top_channels(self) -> int:
        return self.backbone_channels[4]

    @property
    def mid_size(self) -> int:
        return self.input_size // 4

    def validate(self) -> None:
        if self.input_size % 16:
            raise ShapeError(f"input size {self.input_size} not divisible by 16")
        if len(self.backbone_channels) != 5:
            raise ShapeError("backbone_channels needs five stage widths")
        if len(self.cue_widths) != 4:
            raise ShapeError("cue_widths needs four entries (full, hand, face, pose)")
        full, hand, _, _ = self.cue_widths
        if full != self.top_channels:
            raise ShapeError(f"full cue width {full} must equal the top map width {self.top_channels}")
        if hand % 2:
            raise ShapeError("hand cue width must be even (two equal halves)")
        for name, size in (("crop_hand", self.crop_hand), ("crop_face", self.crop_face)):
            if not 2 <= size <= self.mid_size:
                raise ShapeError(f"{name}={size} does not fit a {self.mid_size}x{self.mid_size} mid map")


@dataclass
class SMCOutput:
    cues: dict          # cue name -> Tensor[N, width]
    keypoints: Tensor   # [N, K, 2] normalized
    heatmaps: Tensor    # [N, K, Hm, Wm] logits
    mid_map: Tensor
    top_map: Tensor
    crop_starts: dict   # "left"/"right"/"face" -> int array [N, 2] (0-based top-left corners)

    @property
    def widths(self) -> tuple:
        return tuple(self.cues[c].shape[-1] for c in CUES)

    def concat(self) -> Tensor:
        return ops.concat([self.cues[c] for c in CUES], axis=-1)


def to_map_coords(j, h: int, w: int) -> np.ndarray:
    """Normalized keypoints ``[..., 2]`` -> 1-based continuous map positions."""
    j = np.asarray(j, dtype=np.float64)
    return np.stack([j[..., 0] * (h - 1) + 1, j[..., 1] * (w - 1) + 1], axis=-1)


def crop_starts(centers, size: tuple, h: int, w: int) -> np.ndarray:
    """0-based top-left corners of ``size`` windows around 1-based ``centers[N, 2]``.

    Centers round half-up to a cell, the window is placed with that cell at
    index ``size // 2``, then clamped inside the map.
    """
    ph, pw = size
    if ph > h or pw > w:
        raise ShapeError(f"crop {ph}x{pw} larger than map {h}x{w}")
    c = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    c = np.nan_to_num(c, nan=(h + 1) / 2, posinf=1e9, neginf=-1e9)
    c = np.clip(c, -1e9, 1e9)
    cell = np.floor(c + 0.5).astype(np.int64) - 1
    start = cell - [ph // 2, pw // 2]
    start[:, 0] = np.clip(start[:, 0], 0, h - ph)
    start[:, 1] = np.clip(start[:, 1], 0, w - pw)
    return start


def crop_patch(mid_map: Tensor, center, size: tuple) -> Tensor:
    """Single-map convenience wrapper: ``mid_map[C, H, W]`` around a 1-based center."""
    c, h, w = mid_map.shape
    starts = crop_starts(np.asarray(center)[None], size, h, w)
    batched = ops.reshape(mid_map, (1, c, h, w))
    return ops.reshape(ops.crop_patches(batched, starts, size), (c,) + tuple(size))


class Backbone(Module):
    """Five 3x3 conv+ReLU stages, each halving resolution once except the third.

    The first stage downsamples with stride 2 (the full-resolution map is never
    materialized); stages 2, 4 and 5 use 2x max pooling. The third stage's
    output is the mid map (1/4 resolution), the fifth's the top map (1/16).
    """

    def __init__(self, channels: tuple, rng: np.random.Generator):
        c1, c2, c3, c4, c5 = channels
        self.conv1 = Conv2d(3, c1, 3, rng, stride=2)
        self.conv2 = Conv2d(c1, c2, 3, rng)
        self.conv3 = Conv2d(c2, c3, 3, rng)
        self.conv4 = Conv2d(c3, c4, 3, rng)
        self.conv5 = Conv2d(c4, c5, 3, rng)

    def mid(self, x: Tensor) -> Tensor:
        """Input resolution -> 1/4 resolution."""
        x = ops.relu(self.conv1(x))
        x = ops.maxpool2d(ops.relu(self.conv2(x)))
        return ops.relu(self.conv3(x))

    def top(self, mid: Tensor) -> Tensor:
        """1/4 resolution -> 1/16 resolution (the remaining stages)."""
        x = ops.relu(self.conv4(ops.maxpool2d(mid)))
        return ops.relu(self.conv5(ops.maxpool2d(x)))

    def forward(self, x: Tensor) -> tuple:
        mid = self.mid(x)
        return mid, self.top(mid)

    __call__ = forward


class PoseHead(Module):
    """Two doubling transposed convs (+ReLU) and a point-wise conv to K heatmaps."""

    def __init__(self, cin: int, channels: tuple, k: int, rng: np.random.Generator):
        self.up1 = ConvTranspose2d(cin, channels[0], rng)
        self.up2 = ConvTranspose2d(channels[0], channels[1], rng)
        self.point = Conv2d(channels[1], k, 1, rng)

    def __call__(self, top: Tensor) -> Tensor:
        x = ops.relu(self.up1(top))
        x = ops.relu(self.up2(x))
        return self.point(x)


class PatchStream(Module):
    """Conv+ReLU, 2x pool, conv+ReLU, global average pool."""

    def __init__(self, cin: int, width: int, rng: np.random.Generator):
        self.conv1 = Conv2d(cin, width, 3, rng)
        self.conv2 = Conv2d(width, width, 3, rng)

    def __call__(self, patches: Tensor) -> Tensor:
        x = ops.relu(self.conv1(patches))
        x = ops.maxpool2d(x)
        x = ops.relu(self.conv2(x))
        return ops.global_avg_pool2d(x)


class PoseMLP(Module):
    def __init__(self, k: int, width: int, rng: np.random.Generator):
        self.fc1 = Dense(2 * k, width, rng)
        self.fc2 = Dense(width, width, rng)

    def __call__(self, keypoints: Tensor) -> Tensor:
        n = keypoints.shape[0]
        x = ops.reshape(keypoints, (n, -1))
        return ops.relu(self.fc2(ops.relu(self.fc1(x))))


class SMC(Module):
    def __init__(self, config: SMCConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        full, hand, face, pose = config.cue_widths
        self.backbone = Backbone(config.backbone_channels, rng)
        self.pose_head = PoseHead(config.top_channels, config.head_channels, config.K, rng)
        self.hand_stream = PatchStream(config.mid_channels, hand // 2, rng)
        self.face_stream = PatchStream(config.mid_channels, face, rng)
        self.pose_mlp = PoseMLP(config.K, pose, rng)

    def cue_streams(self, mid: Tensor, top: Tensor, keypoints: Tensor) -> tuple:
        cfg = self.config
        _, _, h, w = mid.shape
        pos = to_map_coords(keypoints.data, h, w)
        hand_size = (cfg.crop_hand, cfg.crop_hand)
        face_size = (cfg.crop_face, cfg.crop_face)
        starts = {
            "left": crop_starts(pos[:, L_WRIST], hand_size, h, w),
            "right": crop_starts(pos[:, R_WRIST], hand_size, h, w),
            "face": crop_starts(pos[:, NOSE], face_size, h, w),
        }
        n = mid.shape[0]
        # both hands through one pass of the shared stream: [left frames; right frames]
        hands = ops.crop_patches(ops.concat([mid, mid], axis=0), np.concatenate([starts["left"], starts["right"]]),
                                 hand_size)
        hand_feat = self.hand_stream(hands)
        hand = ops.concat([ops.getitem(hand_feat, slice(0, n)), ops.getitem(hand_feat, slice(n, 2 * n))], axis=-1)
        cues = {
            "full": ops.global_avg_pool2d(top),
            "hand": hand,
            "face": self.face_stream(ops.crop_patches(mid, starts["face"], face_size)),
            "pose": self.pose_mlp(keypoints),
        }
        return cues, starts

    def __call__(self, frames) -> SMCOutput:
        frames = frames if isinstance(frames, Tensor) else Tensor(np.asarray(frames))
        if frames.ndim != 4 or frames.shape[0] == 0:
            raise ShapeError(f"SMC expects a non-empty [N, 3, S, S] batch, got {frames.shape}")
        s = self.config.input_size
        if frames.shape[1:] != (3, s, s):
            raise ShapeError(f"frames {frames.shape[1:]} do not match the configured input (3, {s}, {s})")
        mid, top = self.backbone(frames)
        heat = self.pose_head(top)
        keypoints = ops.soft_argmax(ops.spatial_softmax(heat))
        cues, starts = self.cue_streams(mid, top, keypoints)
        return SMCOutput(cues, keypoints, heat, mid, top, starts)


def smc_forward(model: SMC, video) -> SMCOutput:
    """Per-frame pipeline over a ``[T, 3, S, S]`` video (``T >= 1``)."""
    data = video.data if isinstance(video, Tensor) else np.asarray(video)
    if data.ndim != 4 or data.shape[0] == 0:
        raise ShapeError("empty video")
    return model(video)

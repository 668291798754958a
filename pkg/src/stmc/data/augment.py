"""Training-time clip augmentation: clip-wide crop, random frame discard, horizontal flip."""
from __future__ import annotations

import numpy as np

from .corpus import Clip
from .render import MIRROR_PERM, Layout

DISCARD_PROB = 0.2
FLIP_PROB = 0.5
MIN_FRAMES = 4


def _margin(size: int) -> float:
    # keep a full hand glyph (and a pixel of anti-aliasing) inside the crop
    return Layout.for_canvas(size).glyph_radius + 1.0


def sample_crop(keypoints: np.ndarray, size: int, rng: np.random.Generator, scale=(0.8, 1.0)) -> tuple:
    """Square crop ``(row0, col0, side)`` in pixels containing every keypoint plus a glyph margin.

    One rectangle serves the whole clip, so the bound is taken over all frames.
    """
    px = keypoints.reshape(-1, 2).astype(np.float64) * (size - 1)
    m = _margin(size)
    lo = np.maximum(px.min(axis=0) - m, 0.0)
    hi = np.minimum(px.max(axis=0) + m, size - 1.0)
    need = float((hi - lo).max()) + 1.0
    side = float(rng.uniform(scale[0], scale[1])) * size
    side = float(np.clip(max(side, need), 2.0, size))
    span = side - 1.0
    start = []
    for axis in range(2):
        a = max(0.0, hi[axis] - span)
        b = min(lo[axis], size - 1.0 - span)
        if a > b:  # figure wider than any admissible crop: centre on it
            a = b = float(np.clip((lo[axis] + hi[axis] - span) / 2, 0.0, size - 1.0 - span))
        start.append(float(rng.uniform(a, b)))
    return start[0], start[1], side


def _interp_matrix(start: float, step: float, size: int) -> np.ndarray:
    """Rows of linear-interpolation weights sampling positions ``start + i*step`` of a length-``size`` axis."""
    pos = np.clip(start + np.arange(size) * step, 0.0, size - 1.0)
    lo = np.minimum(np.floor(pos).astype(np.int64), size - 2)
    frac = pos - lo
    m = np.zeros((size, size))
    m[np.arange(size), lo] = 1.0 - frac
    m[np.arange(size), lo + 1] += frac
    return m


def crop_clip(clip: Clip, rect: tuple) -> Clip:
    """Crop every frame to ``rect`` and resample back to the canvas size (bilinear)."""
    r0, c0, side = rect
    size = clip.frames.shape[-1]
    step = (side - 1.0) / (size - 1.0)
    mr = _interp_matrix(r0, step, size).astype(np.float32)
    mc = _interp_matrix(c0, step, size).astype(np.float32)
    frames = np.clip(mr @ clip.frames @ mc.T, 0.0, 1.0).astype(np.float32)
    px = clip.keypoints.astype(np.float64) * (size - 1)
    kp = (px - [r0, c0]) / (side - 1.0)
    kp = np.clip(kp, 0.0, 1.0).astype(np.float32)
    return Clip(frames, kp, list(clip.glosses), clip.clip_id, clip.flags)


def discard_frames(clip: Clip, rng: np.random.Generator, prob: float = DISCARD_PROB, min_frames: int = MIN_FRAMES) -> Clip:
    """Drop each frame independently with probability ``prob``; restore random drops up to ``min_frames``."""
    t_len = clip.num_frames
    keep = rng.random(t_len) >= prob
    floor = min(max(min_frames, 1), t_len)
    short = floor - int(keep.sum())
    if short > 0:
        dropped = np.flatnonzero(~keep)
        keep[rng.choice(dropped, size=short, replace=False)] = True
    idx = np.flatnonzero(keep)
    return Clip(clip.frames[idx], clip.keypoints[idx], list(clip.glosses), clip.clip_id, clip.flags)


def flip_clip(clip: Clip) -> Clip:
    """Mirror every frame left-right; swap left/right keypoints."""
    frames = np.ascontiguousarray(clip.frames[..., ::-1])
    kp = clip.keypoints[:, list(MIRROR_PERM)].copy()
    kp[..., 1] = 1.0 - kp[..., 1]
    return Clip(frames, kp, list(clip.glosses), clip.clip_id, clip.flags)


def augment(clip: Clip, seed, flip: bool | None = None, min_frames: int = MIN_FRAMES, crop: bool = True,
            discard_prob: float = DISCARD_PROB, flip_prob: float = FLIP_PROB) -> Clip:
    """Crop, discard and (maybe) flip a clip. ``flip`` forces the flip decision when not None.

    Discard never leaves fewer than ``min_frames`` (at least 4) frames. Clips
    with fewer than 5 frames come back unaugmented and flagged ``too_short``.
    """
    min_frames = max(min_frames, MIN_FRAMES)
    if clip.num_frames < MIN_FRAMES + 1:
        return Clip(clip.frames, clip.keypoints, list(clip.glosses), clip.clip_id, tuple(clip.flags) + ("too_short",))
    rng = np.random.default_rng(seed)
    out = clip
    if crop:
        out = crop_clip(out, sample_crop(out.keypoints, out.frames.shape[-1], rng))
    out = discard_frames(out, rng, discard_prob, min_frames)
    do_flip = bool(rng.random() < flip_prob) if flip is None else flip
    if do_flip:
        out = flip_clip(out)
    return out

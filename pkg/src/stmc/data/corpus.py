"""Synthetic multi-cue gloss inventory, clip generation, and corpus assembly."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .render import N_FACES, N_GLYPHS, NEUTRAL, PoseState, render_frame

N_MOTIONS = 5


@dataclass(frozen=True)
class GlossSpec:
    gloss_id: int
    left_glyph: int
    right_glyph: int
    face: int
    motion: int
    duration: tuple = (5, 9)


@dataclass
class Clip:
    frames: np.ndarray      # [T, 3, S, S] float32 in [0, 1]
    keypoints: np.ndarray   # [T, K, 2] float32 in [0, 1]
    glosses: list
    clip_id: str = ""
    flags: tuple = field(default_factory=tuple)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])


# ---------------------------------------------------------------------------
# motion patterns: tau in [0, 1] -> wrist pixel positions, all mirror-symmetric
# ---------------------------------------------------------------------------

def _mirror(size: int, row: float, col: float) -> tuple:
    return (row, size - 1 - col)


def wrist_positions(motion: int, tau: float, size: int, amp: float = 1.0) -> tuple:
    """Left/right wrist (row, col) in pixels for a motion pattern at phase ``tau``."""
    s = size
    m = motion % N_MOTIONS
    if m == 0:    # raise both hands
        left = (s * (0.80 - 0.35 * amp * tau), s * 0.28)
    elif m == 1:  # both hands sweep inward at chest height
        left = (s * 0.62, s * (0.20 + 0.22 * amp * tau))
    elif m == 2:  # mirrored circles
        ang = 2 * np.pi * tau
        left = (s * (0.60 + 0.10 * amp * np.sin(ang)), s * (0.28 + 0.10 * amp * np.cos(ang)))
    elif m == 3:  # raised wave
        left = (s * 0.45, s * (0.27 + 0.08 * amp * np.sin(4 * np.pi * tau)))
    else:         # diagonal push down-out
        left = (s * (0.55 + 0.25 * amp * tau), s * (0.40 - 0.18 * amp * tau))
    return left, _mirror(s, *left)


def rest_positions(size: int) -> tuple:
    left = (size * 0.88, size * 0.36)
    return left, _mirror(size, *left)


# ---------------------------------------------------------------------------
# inventory
# ---------------------------------------------------------------------------

def build_inventory(n_glosses: int = 10, duration: tuple = (5, 9)) -> list[GlossSpec]:
    """Gloss specs arranged in groups of four sharing one motion pattern.

    Inside a group the members cover two hand glyphs crossed with the first
    two facial patterns, so neighbours differ only in face or only in glyph and motion
    alone narrows a gloss down to its group. No single cue separates every
    gloss. Both hands carry the same glyph, which keeps every gloss invariant
    under a mirror flip.
    """
    if n_glosses < 2:
        raise ValueError("need at least two glosses")
    specs = []
    seen = set()
    for g in range(n_glosses):
        group, member = divmod(g, 4)
        motion = group % N_MOTIONS
        glyph = (2 * group + member // 2) % N_GLYPHS
        face = member % 2
        key = (glyph, face, motion)
        bump = 0
        while key in seen:
            bump += 1
            glyph = (glyph + 1) % N_GLYPHS
            if bump % N_GLYPHS == 0:
                face = (face + 1) % N_FACES
            key = (glyph, face, motion)
        seen.add(key)
        specs.append(GlossSpec(g, glyph, glyph, face, motion, tuple(duration)))
    return specs


def vocabulary(n_glosses: int) -> list[str]:
    return [f"G{g:02d}" for g in range(n_glosses)]


def sample_sentence(rng: np.random.Generator, n_glosses: int, length: tuple = (2, 4)) -> list[int]:
    """Gloss-index sentence with no immediate repeats. Indices are 1-based (0 is the CTC blank)."""
    n = int(rng.integers(length[0], length[1] + 1))
    out: list = []
    while len(out) < n:
        g = int(rng.integers(1, n_glosses + 1))
        if not out or out[-1] != g:
            out.append(g)
    return out


def generate_clip(sentence: list, inventory: list[GlossSpec], seed, size: int = 96, transitions: tuple = (1, 3),
                  clip_id: str = "") -> Clip:
    """Render a clip for a 1-based gloss sentence; fully determined by ``seed``."""
    if not sentence:
        raise ValueError("empty gloss sequence")
    for g in sentence:
        if not 1 <= g <= len(inventory):
            raise ValueError(f"gloss index {g} outside 1..{len(inventory)}")
    rng = np.random.default_rng(seed)
    offset = tuple(float(v) for v in rng.uniform(-0.04 * size, 0.04 * size, size=2))
    amp = float(rng.uniform(0.85, 1.15))
    noise = 0.006 * size
    frames, kps = [], []

    def emit(lw, rw, glyph_l, glyph_r, face):
        jl = rng.normal(0, noise, 2)
        jr = jl * [1, -1]
        pose = PoseState((lw[0] + jl[0], lw[1] + jl[1]), (rw[0] + jr[0], rw[1] + jr[1]), offset)
        img, kp = render_frame(pose, glyph_l, glyph_r, face, size)
        frames.append(img)
        kps.append(kp)

    prev_end = None
    for idx, g in enumerate(sentence):
        spec = inventory[g - 1]
        dur = int(rng.integers(spec.duration[0], spec.duration[1] + 1))
        start = wrist_positions(spec.motion, 0.0, size, amp)
        if idx > 0:
            n_tr = int(rng.integers(transitions[0], transitions[1] + 1))
            rest = rest_positions(size)
            for j in range(n_tr):
                w = (j + 1) / (n_tr + 1)
                # dip toward the rest pose halfway through the transition
                mid = 1 - abs(2 * w - 1)
                lw = [(1 - w) * prev_end[0][i] + w * start[0][i] for i in range(2)]
                lw = [lw[i] * (1 - 0.5 * mid) + rest[0][i] * 0.5 * mid for i in range(2)]
                emit(lw, (lw[0], size - 1 - lw[1]), NEUTRAL, NEUTRAL, NEUTRAL)
        for f in range(dur):
            tau = f / (dur - 1) if dur > 1 else 0.5
            lw, rw = wrist_positions(spec.motion, tau, size, amp)
            emit(lw, rw, spec.left_glyph, spec.right_glyph, spec.face)
        prev_end = wrist_positions(spec.motion, 1.0, size, amp)
    return Clip(np.stack(frames), np.stack(kps), list(sentence), clip_id)


@dataclass
class Corpus:
    vocab: list
    inventory: list
    splits: dict  # split name -> list[Clip]


def generate_corpus(n_glosses: int = 10, n_train: int = 50, n_dev: int = 10, n_test: int = 10, size: int = 96,
                    seed: int = 0, sentence_length: tuple = (2, 4), duration: tuple = (5, 9),
                    transitions: tuple = (1, 3)) -> Corpus:
    """Deterministic corpus: a pure function of its arguments."""
    inventory = build_inventory(n_glosses, duration)
    splits = {}
    for split_idx, (name, count) in enumerate((("train", n_train), ("dev", n_dev), ("test", n_test))):
        seeds = np.random.SeedSequence([seed, split_idx]).spawn(count) if count else []
        clips = []
        for i, ss in enumerate(seeds):
            rng = np.random.default_rng(ss)
            sentence = sample_sentence(rng, n_glosses, sentence_length)
            clips.append(generate_clip(sentence, inventory, rng.integers(2**63), size, transitions, f"{name}-{i:04d}"))
        splits[name] = clips
    return Corpus(vocabulary(n_glosses), inventory, splits)

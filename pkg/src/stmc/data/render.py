"""Procedural upper-body stick-figure renderer with anti-aliased primitives.

Coordinates are continuous pixel positions ``(row, col)`` with pixel centers
at integers. Normalized keypoints are ``(row, col) / (S - 1)``; the first
component runs along the image rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

K = 7
KEYPOINT_NAMES = ("nose", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist")
MIRROR_PERM = (0, 2, 1, 4, 3, 6, 5)
NOSE, L_WRIST, R_WRIST = 0, 5, 6

NEUTRAL = -1
N_GLYPHS = 6
N_FACES = 4

BACKGROUND = np.array([0.12, 0.12, 0.16], dtype=np.float32)
TORSO = np.array([0.30, 0.30, 0.45], dtype=np.float32)
ARM = np.array([0.55, 0.55, 0.70], dtype=np.float32)
SKIN = np.array([0.85, 0.70, 0.55], dtype=np.float32)
DARK = np.array([0.10, 0.05, 0.05], dtype=np.float32)
GLYPH_COLORS = np.array([
    [0.95, 0.85, 0.20],
    [0.20, 0.85, 0.95],
    [0.95, 0.30, 0.30],
    [0.35, 0.95, 0.35],
    [0.90, 0.45, 0.95],
    [1.00, 0.60, 0.15],
], dtype=np.float32)
NEUTRAL_GLYPH = np.array([0.60, 0.60, 0.60], dtype=np.float32)
FACE_COLORS = np.array([
    [0.70, 0.10, 0.10],
    [0.15, 0.15, 0.75],
    [0.10, 0.55, 0.15],
    [0.55, 0.10, 0.55],
], dtype=np.float32)


@dataclass(frozen=True)
class Layout:
    """Body geometry for an ``S x S`` canvas, in pixels."""

    size: int
    head_radius: float
    glyph_radius: float
    arm_width: float

    @classmethod
    def for_canvas(cls, size: int) -> "Layout":
        return cls(size, head_radius=0.11 * size, glyph_radius=0.055 * size, arm_width=max(1.5, 0.03 * size))


# ---------------------------------------------------------------------------
# primitives: signed distance -> coverage -> alpha blend, limited to a bbox
# ---------------------------------------------------------------------------

def _grid(canvas: np.ndarray, lo, hi):
    s = canvas.shape[-1]
    r0, c0 = max(0, int(np.floor(lo[0])) - 1), max(0, int(np.floor(lo[1])) - 1)
    r1, c1 = min(s, int(np.ceil(hi[0])) + 2), min(s, int(np.ceil(hi[1])) + 2)
    if r0 >= r1 or c0 >= c1:
        return None
    rr, cc = np.mgrid[r0:r1, c0:c1].astype(np.float32)
    return (slice(r0, r1), slice(c0, c1)), rr, cc


def _blend(canvas: np.ndarray, where, sd: np.ndarray, color) -> None:
    cov = np.clip(0.5 - sd, 0.0, 1.0).astype(np.float32)
    region = canvas[:, where[0], where[1]]
    canvas[:, where[0], where[1]] = region * (1 - cov) + np.asarray(color, np.float32)[:, None, None] * cov


def draw_disk(canvas, center, radius, color) -> None:
    c = np.asarray(center, np.float32)
    g = _grid(canvas, c - radius, c + radius)
    if g is None:
        return
    where, rr, cc = g
    _blend(canvas, where, np.hypot(rr - c[0], cc - c[1]) - radius, color)


def draw_ring(canvas, center, radius, width, color) -> None:
    c = np.asarray(center, np.float32)
    g = _grid(canvas, c - radius - width, c + radius + width)
    if g is None:
        return
    where, rr, cc = g
    _blend(canvas, where, np.abs(np.hypot(rr - c[0], cc - c[1]) - radius) - width / 2, color)


def draw_segment(canvas, a, b, width, color) -> None:
    a, b = np.asarray(a, np.float32), np.asarray(b, np.float32)
    g = _grid(canvas, np.minimum(a, b) - width, np.maximum(a, b) + width)
    if g is None:
        return
    where, rr, cc = g
    d = b - a
    denom = float(d @ d) or 1.0
    t = np.clip(((rr - a[0]) * d[0] + (cc - a[1]) * d[1]) / denom, 0.0, 1.0)
    _blend(canvas, where, np.hypot(rr - a[0] - t * d[0], cc - a[1] - t * d[1]) - width / 2, color)


def draw_box(canvas, center, half_h, half_w, color) -> None:
    c = np.asarray(center, np.float32)
    g = _grid(canvas, c - [half_h, half_w], c + [half_h, half_w])
    if g is None:
        return
    where, rr, cc = g
    _blend(canvas, where, np.maximum(np.abs(rr - c[0]) - half_h, np.abs(cc - c[1]) - half_w), color)


def draw_polygon(canvas, vertices, color) -> None:
    """Convex polygon given as (row, col) vertices in either winding order."""
    v = np.asarray(vertices, np.float32)
    g = _grid(canvas, v.min(axis=0), v.max(axis=0))
    if g is None:
        return
    where, rr, cc = g
    nxt = np.roll(v, -1, axis=0)
    orient = -1.0 if float((v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]).sum()) < 0 else 1.0
    sd = np.full(rr.shape, -np.inf, dtype=np.float32)
    for p, q in zip(v, nxt):
        e = q - p
        n = orient * np.array([e[1], -e[0]], np.float32) / (np.hypot(*e) + 1e-9)
        sd = np.maximum(sd, (rr - p[0]) * n[0] + (cc - p[1]) * n[1])
    _blend(canvas, where, sd, color)


def draw_glyph(canvas, center, glyph: int, radius: float) -> None:
    """Hand shape at ``center``; every glyph is symmetric about its center."""
    if glyph == NEUTRAL:
        draw_disk(canvas, center, 0.55 * radius, NEUTRAL_GLYPH)
        return
    col = GLYPH_COLORS[glyph % N_GLYPHS]
    kind = glyph % N_GLYPHS
    r, c = center
    if kind == 0:
        draw_disk(canvas, center, radius, col)
    elif kind == 1:
        draw_box(canvas, center, 0.85 * radius, 0.85 * radius, col)
    elif kind == 2:
        draw_ring(canvas, center, 0.75 * radius, 0.45 * radius, col)
    elif kind == 3:
        draw_box(canvas, center, 0.3 * radius, radius, col)
        draw_box(canvas, center, radius, 0.3 * radius, col)
    elif kind == 4:
        d = radius
        draw_polygon(canvas, [(r - d, c), (r, c - d), (r + d, c), (r, c + d)], col)
    else:
        draw_box(canvas, center, 0.35 * radius, radius, col)


def draw_face(canvas, center, pattern: int, radius: float) -> None:
    """Head disk with eyes and a pattern-specific mouth/brow, mirror-symmetric."""
    r, c = center
    draw_disk(canvas, center, radius, SKIN)
    eye_dr, eye_dc = -0.25 * radius, 0.38 * radius
    for s in (-1, 1):
        draw_disk(canvas, (r + eye_dr, c + s * eye_dc), 0.12 * radius, DARK)
    mouth = (r + 0.45 * radius, c)
    if pattern == NEUTRAL:
        draw_segment(canvas, (mouth[0], c - 0.15 * radius), (mouth[0], c + 0.15 * radius), 0.1 * radius, DARK)
        return
    col = FACE_COLORS[pattern % N_FACES]
    kind = pattern % N_FACES
    if kind == 0:
        draw_segment(canvas, (mouth[0], c - 0.45 * radius), (mouth[0], c + 0.45 * radius), 0.18 * radius, col)
    elif kind == 1:
        draw_disk(canvas, mouth, 0.28 * radius, col)
    elif kind == 2:
        for s in (-1, 1):
            draw_segment(canvas, (r - 0.55 * radius, c + s * 0.15 * radius), (r - 0.45 * radius, c + s * 0.65 * radius),
                         0.22 * radius, col)
        draw_disk(canvas, mouth, 0.2 * radius, col)
    else:
        for s in (-1, 1):
            draw_disk(canvas, (r + 0.2 * radius, c + s * 0.6 * radius), 0.3 * radius, col)
        draw_segment(canvas, (mouth[0], c - 0.3 * radius), (mouth[0], c + 0.3 * radius), 0.16 * radius, col)


# ---------------------------------------------------------------------------
# figure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseState:
    """Pixel positions driving one frame. ``offset`` shifts the whole figure."""

    l_wrist: tuple
    r_wrist: tuple
    offset: tuple = (0.0, 0.0)


def skeleton(pose: PoseState, size: int) -> np.ndarray:
    """The seven keypoints in pixel (row, col), left = image-left."""
    orow, ocol = pose.offset
    nose = (0.24 * size + orow, 0.5 * size + ocol)
    ls = (0.50 * size + orow, 0.33 * size + ocol)
    rs = (0.50 * size + orow, 0.67 * size + ocol)
    lw = (pose.l_wrist[0] + orow, pose.l_wrist[1] + ocol)
    rw = (pose.r_wrist[0] + orow, pose.r_wrist[1] + ocol)

    def elbow(sh, wr, outward):
        mid = ((sh[0] + wr[0]) / 2, (sh[1] + wr[1]) / 2)
        return (mid[0] + 0.04 * size, mid[1] + outward * 0.07 * size)

    return np.array([nose, ls, rs, elbow(ls, lw, -1), elbow(rs, rw, 1), lw, rw], dtype=np.float32)


def face_box(keypoints_px: np.ndarray, layout: Layout) -> tuple:
    """Pixel bounding box (r0, r1, c0, c1), half-open, that contains every face-pattern pixel."""
    r, c = keypoints_px[NOSE]
    pad = layout.head_radius + 2
    s = layout.size
    return (max(0, int(np.floor(r - pad))), min(s, int(np.ceil(r + pad)) + 1),
            max(0, int(np.floor(c - pad))), min(s, int(np.ceil(c + pad)) + 1))


def render_frame(pose: PoseState, left_glyph: int, right_glyph: int, face: int, size: int):
    """Draw one frame; returns ``(image[3,S,S] in [0,1], normalized keypoints[K,2])``."""
    layout = Layout.for_canvas(size)
    img = np.empty((3, size, size), dtype=np.float32)
    img[:] = BACKGROUND[:, None, None]
    kp = skeleton(pose, size)
    ls, rs = kp[1], kp[2]
    bottom = size + 4.0
    draw_polygon(img, [ls + [-2, -3], (bottom, ls[1] - 3), (bottom, rs[1] + 3), rs + [-2, 3]], TORSO)
    draw_segment(img, kp[NOSE] + [layout.head_radius * 0.8, 0], (ls[0] - 2, kp[NOSE][1]), 0.08 * size, SKIN)
    for sh, el, wr in ((kp[1], kp[3], kp[5]), (kp[2], kp[4], kp[6])):
        draw_segment(img, sh, el, layout.arm_width, ARM)
        draw_segment(img, el, wr, layout.arm_width, ARM)
    draw_face(img, kp[NOSE], face, layout.head_radius)
    draw_glyph(img, kp[L_WRIST], left_glyph, layout.glyph_radius)
    draw_glyph(img, kp[R_WRIST], right_glyph, layout.glyph_radius)
    np.clip(img, 0.0, 1.0, out=img)
    return img, (kp / (size - 1)).astype(np.float32)

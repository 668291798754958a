"""On-disk dataset: ``manifest.json`` + ``vocab.txt`` + one binary file per clip.

Clip file layout (little-endian)::

    b"STMCCLIP" | u32 version | u32 T | u32 S | u32 K | f32 frames[T,3,S,S] | f32 keypoints[T,K,2]
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .corpus import Clip

MAGIC = b"STMCCLIP"
VERSION = 1
MANIFEST_VERSION = 1
_HEADER = struct.Struct("<8sIIII")


class DatasetError(Exception):
    pass


class DatasetHeaderError(DatasetError):
    pass


class TruncatedPayloadError(DatasetError):
    pass


class ChecksumError(DatasetError):
    pass


class ManifestMismatchError(DatasetError):
    pass


def encode_clip(clip: Clip) -> bytes:
    t_len, ch, size, size2 = clip.frames.shape
    if ch != 3 or size != size2:
        raise ValueError(f"frames must be [T,3,S,S], got {clip.frames.shape}")
    k = clip.keypoints.shape[1]
    if clip.keypoints.shape != (t_len, k, 2):
        raise ValueError(f"keypoints {clip.keypoints.shape} do not match {t_len} frames")
    return b"".join([
        _HEADER.pack(MAGIC, VERSION, t_len, size, k),
        np.ascontiguousarray(clip.frames, dtype="<f4").tobytes(),
        np.ascontiguousarray(clip.keypoints, dtype="<f4").tobytes(),
    ])


def decode_clip(blob: bytes, name: str = "<clip>") -> tuple:
    """Returns ``(frames, keypoints)``; raises header/truncation errors."""
    if len(blob) < _HEADER.size:
        raise DatasetHeaderError(f"{name}: file shorter than header ({len(blob)} bytes)")
    magic, version, t_len, size, k = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DatasetHeaderError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetHeaderError(f"{name}: unsupported version {version}")
    n_frames = t_len * 3 * size * size
    n_kp = t_len * k * 2
    expected = _HEADER.size + 4 * (n_frames + n_kp)
    if len(blob) < expected:
        raise TruncatedPayloadError(f"{name}: payload truncated, {len(blob)} of {expected} bytes")
    if len(blob) > expected:
        raise DatasetHeaderError(f"{name}: {len(blob) - expected} trailing bytes after payload")
    off = _HEADER.size
    frames = np.frombuffer(blob, dtype="<f4", count=n_frames, offset=off).reshape(t_len, 3, size, size)
    kp = np.frombuffer(blob, dtype="<f4", count=n_kp, offset=off + 4 * n_frames).reshape(t_len, k, 2)
    return frames.astype(np.float32), kp.astype(np.float32)


def write_dataset(splits: dict, vocab: list, directory, extra: dict | None = None) -> dict:
    """Write ``{split: [Clip]}`` and return the manifest."""
    root = Path(directory)
    (root / "clips").mkdir(parents=True, exist_ok=True)
    entries = []
    canvas = None
    k = None
    for split, clips in splits.items():
        for clip in clips:
            blob = encode_clip(clip)
            canvas = int(clip.frames.shape[-1])
            k = int(clip.keypoints.shape[1])
            rel = f"clips/{clip.clip_id}.bin"
            (root / rel).write_bytes(blob)
            entries.append({
                "id": clip.clip_id, "split": split, "file": rel, "T": clip.num_frames,
                "glosses": [int(g) for g in clip.glosses], "sha256": hashlib.sha256(blob).hexdigest(),
            })
    ids = [e["id"] for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("clip ids must be unique")
    manifest = {"version": MANIFEST_VERSION, "vocabulary": list(vocab), "canvas": canvas, "K": k, "clips": entries}
    if extra:
        manifest["generator"] = extra
    (root / "vocab.txt").write_text("".join(f"{g}\n" for g in vocab), encoding="utf-8")
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return manifest


def read_manifest(directory) -> dict:
    root = Path(directory)
    path = root / "manifest.json"
    if not path.exists():
        raise DatasetError(f"no manifest.json in {root}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetHeaderError(f"manifest.json is not valid JSON: {exc}") from exc
    if manifest.get("version") != MANIFEST_VERSION:
        raise DatasetHeaderError(f"unsupported manifest version {manifest.get('version')!r}")
    vocab_path = root / "vocab.txt"
    if vocab_path.exists():
        vocab = vocab_path.read_text(encoding="utf-8").split()
        if vocab != manifest["vocabulary"]:
            raise ManifestMismatchError("vocab.txt disagrees with the manifest vocabulary")
    return manifest


def read_dataset(directory, splits=None) -> tuple:
    """Returns ``(vocab, {split: [Clip]}, manifest)``, verifying checksums and shapes."""
    root = Path(directory)
    manifest = read_manifest(root)
    n_vocab = len(manifest["vocabulary"])
    out: dict = {}
    for entry in manifest["clips"]:
        if splits is not None and entry["split"] not in splits:
            continue
        path = root / entry["file"]
        if not path.exists():
            raise DatasetError(f"{entry['id']}: missing file {entry['file']}")
        blob = path.read_bytes()
        frames, kp = decode_clip(blob, entry["id"])
        if hashlib.sha256(blob).hexdigest() != entry["sha256"]:
            raise ChecksumError(f"{entry['id']}: checksum mismatch")
        if frames.shape[0] != entry["T"] or frames.shape[-1] != manifest["canvas"] or kp.shape[1] != manifest["K"]:
            raise ManifestMismatchError(
                f"{entry['id']}: file shape T={frames.shape[0]} S={frames.shape[-1]} K={kp.shape[1]} "
                f"vs manifest T={entry['T']} S={manifest['canvas']} K={manifest['K']}")
        if not entry["glosses"] or any(not 1 <= g <= n_vocab for g in entry["glosses"]):
            raise ManifestMismatchError(f"{entry['id']}: gloss indices outside vocabulary of {n_vocab}")
        out.setdefault(entry["split"], []).append(Clip(frames, kp, list(entry["glosses"]), entry["id"]))
    return list(manifest["vocabulary"]), out, manifest

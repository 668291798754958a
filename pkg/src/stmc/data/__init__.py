"""Synthetic sign-video corpus: rendering, clip generation, augmentation and on-disk format."""
from .augment import augment, crop_clip, discard_frames, flip_clip, sample_crop
from .corpus import Clip, Corpus, GlossSpec, build_inventory, generate_clip, generate_corpus, sample_sentence, vocabulary
from .io import (ChecksumError, DatasetError, DatasetHeaderError, ManifestMismatchError, TruncatedPayloadError,
                 read_dataset, read_manifest, write_dataset)
from .render import K, KEYPOINT_NAMES, MIRROR_PERM, NEUTRAL, PoseState, render_frame

__all__ = [
    "ChecksumError", "Clip", "Corpus", "DatasetError", "DatasetHeaderError", "GlossSpec", "K", "KEYPOINT_NAMES",
    "MIRROR_PERM", "ManifestMismatchError", "NEUTRAL", "PoseState", "TruncatedPayloadError", "augment",
    "build_inventory", "crop_clip", "discard_frames", "flip_clip", "generate_clip", "generate_corpus",
    "read_dataset", "read_manifest", "render_frame", "sample_crop", "sample_sentence", "vocabulary", "write_dataset",
]

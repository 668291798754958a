"""Training loop, evaluation and run-directory bookkeeping."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data.augment import augment
from .data.corpus import Clip, generate_corpus
from .data.io import read_dataset
from .model import STMCModel, batch_loss, decode
from .seq.ctc import min_frames
from .seq.wer import WerResult, corpus_wer
from .smc import CUES
from .tensor.checkpoint import load_checkpoint, load_into, model_state, save_checkpoint
from .tensor.core import backward, no_grad
from .tensor.optim import Adam

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


class VocabularyMismatch(ValueError):
    pass


@dataclass
class EvalReport:
    wer: WerResult
    hypotheses: dict                      # clip id -> list of gloss indices
    per_cue: dict = field(default_factory=dict)   # cue name -> WerResult
    keypoint_error: float = float("nan")  # mean distance in mid-map cells

    def as_dict(self, vocab: list | None = None) -> dict:
        d = {"wer": float(self.wer), "sub": self.wer.sub, "del": self.wer.dele, "ins": self.wer.ins,
             "ref_len": self.wer.ref_len, "keypoint_error_cells": self.keypoint_error}
        for name, r in self.per_cue.items():
            d[f"wer_{name}"] = float(r)
        return d


def build_model(cfg: RunConfig) -> STMCModel:
    return STMCModel(cfg.model_config(), np.random.default_rng(cfg.seed))


def corpus_from_config(cfg: RunConfig):
    """``(vocab, splits)`` from ``data_dir`` when set, otherwise generated in memory."""
    if cfg.data_dir:
        vocab, splits, _ = read_dataset(cfg.data_dir)
        return vocab, splits
    corpus = generate_corpus(cfg.n_glosses, cfg.n_train, cfg.n_dev, cfg.n_test, cfg.canvas, cfg.seed,
                             (cfg.sentence_min, cfg.sentence_max), (cfg.duration_min, cfg.duration_max))
    return corpus.vocab, corpus.splits


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(model: STMCModel, clips: list, beam: int = 20, per_cue: bool = False, batch: int = 4) -> EvalReport:
    hyps: dict = {}
    cue_hyps: dict = {c: {} for c in CUES} if per_cue else {}
    dist_sum, dist_n = 0.0, 0
    h = model.config.smc.mid_size
    with no_grad():
        for i in range(0, len(clips), batch):
            chunk = clips[i:i + batch]
            outs = model([c.frames for c in chunk], intra=per_cue)
            for clip, out in zip(chunk, outs):
                hyps[clip.clip_id] = decode(out.inter, beam)
                for name, lp in zip(CUES, out.intra):
                    cue_hyps[name][clip.clip_id] = decode(lp, beam)
                err = (out.keypoints.data - clip.keypoints) * (h - 1)
                dist_sum += float(np.sqrt((err.astype(np.float64) ** 2).sum(axis=-1)).sum())
                dist_n += err.shape[0] * err.shape[1]
    refs = {c.clip_id: c.glosses for c in clips}
    report = EvalReport(corpus_wer((refs[k], v) for k, v in hyps.items()), hyps,
                        keypoint_error=dist_sum / max(dist_n, 1))
    for name, hs in cue_hyps.items():
        report.per_cue[name] = corpus_wer((refs[k], v) for k, v in hs.items())
    return report


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _aug_floor(clip: Clip, tmc_min: int) -> int:
    # CTC admissibility after the temporal poolings: T' >= L + repeats
    return max(4, tmc_min * min_frames(clip.glosses))


def epoch_batches(clips: list, cfg: RunConfig, epoch: int, tmc_min: int) -> list:
    """The epoch's (augmented) batches; a pure function of (seed, epoch)."""
    rng = np.random.default_rng([cfg.seed, epoch])
    order = rng.permutation(len(clips))
    seeds = rng.integers(0, 2**63, size=len(clips))
    batches = []
    for start in range(0, len(order), cfg.batch_size):
        batch = []
        for idx in order[start:start + cfg.batch_size]:
            clip = clips[idx]
            if cfg.augment:
                clip = augment(clip, int(seeds[idx]), min_frames=_aug_floor(clip, tmc_min),
                               discard_prob=cfg.aug_discard_prob, flip_prob=cfg.aug_flip_prob)
            batch.append(clip)
        batches.append(batch)
    return batches


def save_run_state(directory: Path, tag: str, model: STMCModel, opt: Adam, meta: dict) -> None:
    arrays = model_state(model)
    if opt is not None:
        names = [n for n, _ in model.named_parameters()]
        for name, m, v in zip(names, opt.state.m, opt.state.v):
            arrays[f"adam.m.{name}"] = m
            arrays[f"adam.v.{name}"] = v
        meta = dict(meta, adam_step=opt.state.step)
    save_checkpoint(directory / f"{tag}.ckpt", arrays)
    (directory / f"{tag}.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")


def load_run_state(directory: Path, tag: str, model: STMCModel, opt: Adam | None = None) -> dict:
    arrays = load_checkpoint(directory / f"{tag}.ckpt")
    meta = json.loads((directory / f"{tag}.json").read_text(encoding="utf-8"))
    load_into(model, {k: v for k, v in arrays.items() if not k.startswith("adam.")})
    if opt is not None and "adam_step" in meta:
        names = [n for n, _ in model.named_parameters()]
        opt.state.m = [arrays[f"adam.m.{n}"].astype(p.dtype) for n, p in zip(names, opt.params)]
        opt.state.v = [arrays[f"adam.v.{n}"].astype(p.dtype) for n, p in zip(names, opt.params)]
        opt.state.step = int(meta["adam_step"])
    return meta


def check_vocab(meta: dict, vocab: list) -> None:
    if list(meta.get("vocab", [])) != list(vocab):
        raise VocabularyMismatch(f"checkpoint vocabulary {meta.get('vocab')} does not match dataset {vocab}")


def train(cfg: RunConfig, out_dir=None, resume: bool = False, corpus=None, model: STMCModel | None = None,
          quiet: bool = False) -> dict:
    """Train, logging one JSON line per epoch to ``metrics.jsonl``; returns a summary."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    vocab, splits = corpus if corpus is not None else corpus_from_config(cfg)
    if len(vocab) != cfg.n_glosses:
        raise VocabularyMismatch(f"dataset has {len(vocab)} glosses, config expects n_glosses={cfg.n_glosses}")
    train_clips, dev_clips = splits.get("train", []), splits.get("dev", [])
    if not train_clips:
        raise ValueError("no training clips")
    model = model or build_model(cfg)
    params = model.parameters()
    opt = Adam(params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
               clip_norm=cfg.clip_norm if cfg.clip_norm > 0 else None)
    tmc_min = model.config.tmc.min_frames
    start_epoch, best = 0, None
    metrics_path = out / "metrics.jsonl"
    if resume:
        meta = load_run_state(out, "last", model, opt)
        check_vocab(meta, vocab)
        start_epoch = int(meta["epoch"]) + 1
        best = meta.get("best_dev_wer")
        kept = [ln for ln in metrics_path.read_text().splitlines() if json.loads(ln)["epoch"] < start_epoch]
        metrics_path.write_text("".join(ln + "\n" for ln in kept))
    elif metrics_path.exists():
        metrics_path.unlink()
    t0 = time.time()
    summary = {"epochs_run": 0, "best_dev_wer": best, "stopped": "epochs"}
    for epoch in range(start_epoch, cfg.epochs):
        te = time.time()
        sums: dict = {}
        n_batches = 0
        for b, batch in enumerate(epoch_batches(train_clips, cfg, epoch, tmc_min)):
            outs = model([c.frames for c in batch])
            parts = batch_loss(outs, batch, cfg.alpha, cfg.beta, cfg.beta_mode)
            value = float(parts.total.data)
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss {value} at epoch {epoch} batch {b} "
                                     f"(clips {[c.clip_id for c in batch]})")
            opt.zero_grad()
            backward(parts.total)
            for p in params:
                if p.grad is not None and not np.all(np.isfinite(p.grad)):
                    raise NumericalError(f"non-finite gradient at epoch {epoch} batch {b}")
            opt.step()
            for k, v in parts.as_dict().items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1
        record = {"epoch": epoch, **{k: v / n_batches for k, v in sums.items()}}
        if dev_clips:
            dev = evaluate(model, dev_clips, cfg.beam)
            record["dev_wer"] = float(dev.wer)
            record["dev_del"], record["dev_ins"] = dev.wer.dele, dev.wer.ins
        if cfg.train_eval_every and (epoch + 1) % cfg.train_eval_every == 0:
            record["train_wer"] = float(evaluate(model, train_clips, cfg.beam).wer)
        record["epoch_seconds"] = round(time.time() - te, 3)
        with metrics_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
        if not quiet:
            log.info("epoch %d loss %.4f dev %s train %s (%.1fs)", epoch, record["loss"], record.get("dev_wer"),
                     record.get("train_wer"), record["epoch_seconds"])
        meta = {"vocab": list(vocab), "config": cfg.to_text(), "epoch": epoch}
        score = record.get("dev_wer", record["loss"])
        if best is None or score < best:
            best = score
            save_run_state(out, "best", model, None, dict(meta, dev_wer=record.get("dev_wer")))
        save_run_state(out, "last", model, opt, dict(meta, best_dev_wer=best))
        summary["epochs_run"] += 1
        summary["best_dev_wer"] = best
        summary["last"] = record
        if cfg.stop_train_wer >= 0 and record.get("train_wer", float("inf")) <= cfg.stop_train_wer:
            summary["stopped"] = "train_wer"
            break
        if cfg.time_budget and time.time() - t0 >= cfg.time_budget:
            summary["stopped"] = "time_budget"
            break
    summary["seconds"] = time.time() - t0
    return summary

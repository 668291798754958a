"""Command-line entry point: ``stmc gen-data | train | eval | decode | gradcheck``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .data.corpus import generate_corpus
from .data.io import DatasetError, decode_clip, read_dataset, write_dataset
from .tensor.checkpoint import CheckpointError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4

log = logging.getLogger("stmc")


def _config(args):
    overrides = {"seed": args.seed}
    if getattr(args, "data", None):
        overrides["data_dir"] = args.data
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "beam", None):
        overrides["beam"] = args.beam
    for key in ("epochs",):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    return load_config(args.config, paper_scale=args.paper_scale, **overrides)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    out = Path(args.out or cfg.data_dir or "data")
    if out.exists() and any(out.iterdir()) and not args.force:
        print(f"error: {out} exists and is not empty (use --force)", file=sys.stderr)
        return EXIT_DATA
    corpus = generate_corpus(cfg.n_glosses, cfg.n_train, cfg.n_dev, cfg.n_test, cfg.canvas, cfg.seed,
                             (cfg.sentence_min, cfg.sentence_max), (cfg.duration_min, cfg.duration_max))
    manifest = write_dataset(corpus.splits, corpus.vocab, out, extra={"config": cfg.to_text()})
    print(f"wrote {len(manifest['clips'])} clips, {len(corpus.vocab)} glosses to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .train import train
    cfg = _config(args)
    if not cfg.data_dir:
        print("error: train needs a dataset (--data or data_dir=)", file=sys.stderr)
        return EXIT_DATA
    summary = train(cfg, cfg.out_dir, resume=args.resume)
    print(json.dumps({k: v for k, v in summary.items() if k != "last"}))
    return EXIT_OK


def _load_trained(args, cfg_dir: Path):
    from .config import parse_config
    from .train import build_model, check_vocab, load_run_state
    meta = json.loads((cfg_dir / f"{args.tag}.json").read_text(encoding="utf-8"))
    cfg = parse_config(meta["config"])
    model = build_model(cfg)
    load_run_state(cfg_dir, args.tag, model)
    return cfg, model, meta, check_vocab


def cmd_eval(args) -> int:
    from .train import evaluate
    run = Path(args.checkpoint)
    cfg, model, meta, check_vocab = _load_trained(args, run)
    data_dir = args.data or cfg.data_dir
    vocab, splits, _ = read_dataset(data_dir, splits=[args.split])
    check_vocab(meta, vocab)
    clips = splits.get(args.split, [])
    if not clips:
        print(f"error: split {args.split!r} is empty", file=sys.stderr)
        return EXIT_DATA
    report = evaluate(model, clips, args.beam or cfg.beam, per_cue=args.per_cue)
    for clip in clips:
        print(f"{clip.clip_id}\t{' '.join(vocab[g - 1] for g in report.hypotheses[clip.clip_id])}")
    print(json.dumps({"split": args.split, **report.as_dict()}))
    return EXIT_OK


def cmd_decode(args) -> int:
    from .model import decode
    from .tensor.core import no_grad
    run = Path(args.checkpoint)
    cfg, model, meta, _ = _load_trained(args, run)
    vocab = meta["vocab"]
    path = Path(args.clip)
    frames, _ = decode_clip(path.read_bytes(), path.name)
    if frames.shape[0] < model.config.tmc.min_frames:
        print(f"error: clip has {frames.shape[0]} frames, need at least {model.config.tmc.min_frames}",
              file=sys.stderr)
        return EXIT_DATA
    with no_grad():
        out = model([frames], intra=False)[0]
    hyp = decode(out.inter, args.beam or cfg.beam)
    print(f"{path.stem}\t{' '.join(vocab[g - 1] for g in hyp)}")
    names = ["<blank>"] + list(vocab)
    post = np.exp(out.inter.data.astype(np.float64))
    for t, row in enumerate(post):
        top = np.argsort(-row, kind="stable")[:3]
        print(f"# t={t}\t" + "\t".join(f"{names[j]}:{row[j]:.3f}" for j in top))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .verify import run_gradcheck_suite
    results = run_gradcheck_suite(seed=args.seed or 0)
    ok = True
    for r in results:
        status = "ok" if r.passed else "FAIL"
        ok &= r.passed
        print(f"{status:4s} {r.name:28s} max_rel={r.max_rel_error:.2e} checked={r.checked} excluded={r.excluded}")
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--paper-scale", action="store_true", help="start from the large-model profile")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate the synthetic corpus")
    p.add_argument("--out", help="dataset directory")
    p.add_argument("--force", action="store_true", help="write into a non-empty directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train end to end")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="run directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", action="store_true", help="continue from <out>/last.ckpt")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "WER on a split"), ("decode", cmd_decode, "decode one clip")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("checkpoint", help="run directory holding <tag>.ckpt / <tag>.json")
        p.add_argument("--tag", default="best", help="checkpoint tag (best or last)")
        p.add_argument("--beam", type=int)
        if name == "eval":
            p.add_argument("--data", help="dataset directory (defaults to the run's data_dir)")
            p.add_argument("--split", default="dev")
            p.add_argument("--per-cue", action="store_true", help="also score each intra-cue encoder")
        else:
            p.add_argument("clip", help="clip file (.bin)")
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference verification suite")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    from .train import NumericalError, VocabularyMismatch
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) or args.command == "train"
                        else logging.WARNING, format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, VocabularyMismatch, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

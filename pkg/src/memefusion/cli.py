"""``memefusion train|eval|predict|report``.

Exit codes: 0 success, 1 internal error, 2 input error, 3 compatibility error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, RunConfig, build_run_config, load_config
from .data import clean_captions, load_manifest, prepare, synth_dataset, write_manifest
from .errors import CompatibilityError, InputError
from .fusion import MemeClassifier, predict, sigmoid
from .image import load_image, preprocess
from .metrics import ClassificationReport, render
from .text import Vocabulary, build_vocab, clean_caption, encode, load_stopwords
from .training import build_model, evaluate, train

log = logging.getLogger("memefusion")

CHECKPOINT_NAME = "model.ckpt"
VOCAB_NAME = "vocab.tsv"
HISTORY_NAME = "history.jsonl"
METRICS_NAME = "metrics.json"


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else build_run_config({})
    train_cfg = cfg.train
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    data_cfg = cfg.data
    if args.manifest:
        data_cfg = dataclasses.replace(data_cfg, train_manifest=args.manifest, synthetic=False)
    cfg = dataclasses.replace(
        cfg,
        train=train_cfg,
        data=data_cfg,
        out_dir=args.out or cfg.out_dir,
        threads=args.threads if args.threads is not None else cfg.threads,
    )
    cfg.validate()
    return cfg


def _write_report(rep: ClassificationReport, stem: Path) -> None:
    stem.with_suffix(".json").write_text(rep.to_json(), encoding="utf-8")
    stem.with_suffix(".txt").write_text(render(rep), encoding="utf-8")


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir)
    stopwords = load_stopwords(cfg.data.stopwords) if cfg.data.stopwords else frozenset()
    seed = cfg.train.seed
    if cfg.data.synthetic:
        train_samples = synth_dataset(seed, cfg.data.synthetic_n_per_class, cfg.data.synthetic_image_side)
        val_samples = synth_dataset(seed + 1, cfg.data.synthetic_n_per_class, cfg.data.synthetic_image_side)
        write_manifest(train_samples, out / "synthetic" / "train.csv", out / "synthetic" / "images")
        write_manifest(val_samples, out / "synthetic" / "val.csv", out / "synthetic" / "images")
    else:
        train_samples, stats = load_manifest(cfg.data.train_manifest, cfg.data.image_root or None)
        log.info("train split: %d troll, %d nontroll", stats.troll, stats.nontroll)
        val_samples = None
        if cfg.data.val_manifest:
            val_samples, _ = load_manifest(cfg.data.val_manifest, cfg.data.image_root or None)

    vocab = build_vocab(clean_captions(train_samples, stopwords), cfg.model.text.min_freq)
    text_cfg = cfg.model.text
    if text_cfg.vocab_size and text_cfg.vocab_size != len(vocab):
        raise CompatibilityError(f"text.vocab_size is {text_cfg.vocab_size} but the built vocabulary has {len(vocab)} entries")
    model_cfg = dataclasses.replace(cfg.model, text=dataclasses.replace(text_cfg, vocab_size=len(vocab)))

    image_size = model_cfg.vit.image_size
    train_split = prepare(train_samples, vocab, stopwords, text_cfg.max_len, image_size)
    val_split = prepare(val_samples, vocab, stopwords, text_cfg.max_len, image_size) if val_samples else None

    with threadpool_limits(limits=cfg.threads):
        result = train(train_split, model_cfg, cfg.train, val_split)

    out.mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    vocab.save(out / VOCAB_NAME)
    with (out / HISTORY_NAME).open("w", encoding="utf-8") as fh:
        for rec in result.history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    for epoch, rep in enumerate(result.epoch_reports, start=1):
        _write_report(rep, out / "reports" / f"val_epoch{epoch:02d}")
    train_rep = evaluate(result.model, train_split)
    _write_report(train_rep, out / "reports" / "train_final")
    save_checkpoint(
        out / CHECKPOINT_NAME,
        result.model.state_dict(),
        model_cfg.to_dict(),
        {"stopwords": sorted(stopwords), "train": dataclasses.asdict(cfg.train), "preset": cfg.preset},
    )
    print(f"trained {result.total_steps} steps; final train accuracy {train_rep.accuracy:.4f}; wrote {out}")
    return 0


def _load_model(checkpoint, vocab_path=None) -> tuple[MemeClassifier, Vocabulary, frozenset]:
    tensors, config, meta = load_checkpoint(checkpoint)
    try:
        model_cfg = ModelConfig.from_dict(config)
    except (KeyError, TypeError) as exc:
        raise CompatibilityError(f"checkpoint config is not understood: {exc}") from None
    vocab_path = Path(vocab_path) if vocab_path else Path(checkpoint).parent / VOCAB_NAME
    if not vocab_path.is_file():
        raise InputError(f"vocabulary file not found: {vocab_path}")
    try:
        vocab = Vocabulary.load(vocab_path)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if len(vocab) != model_cfg.text.vocab_size:
        raise CompatibilityError(
            f"vocabulary {vocab_path} has {len(vocab)} entries but the checkpoint expects {model_cfg.text.vocab_size}"
        )
    dtype = next(iter(tensors.values())).dtype if tensors else np.float32
    model = build_model(model_cfg, seed=0, dtype=dtype)
    try:
        model.load_state_dict(tensors)
    except (KeyError, ValueError) as exc:
        raise CompatibilityError(f"checkpoint does not match its config: {exc}") from None
    return model, vocab, frozenset(meta.get("stopwords", ()))


def cmd_eval(args) -> int:
    if not args.checkpoint or not args.manifest:
        raise InputError("eval needs --checkpoint and --manifest")
    model, vocab, stopwords = _load_model(args.checkpoint, args.vocab)
    samples, _ = load_manifest(args.manifest, args.image_root)
    split = prepare(samples, vocab, stopwords, model.cfg.text.max_len, model.cfg.vit.image_size)
    rep = evaluate(model, split)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / METRICS_NAME).write_text(rep.to_json(), encoding="utf-8")
    sys.stdout.write(render(rep))
    return 0


def cmd_predict(args) -> int:
    if not args.checkpoint or not args.image or args.caption is None:
        raise InputError("predict needs --checkpoint, --image and --caption")
    model, vocab, stopwords = _load_model(args.checkpoint, args.vocab)
    size = model.cfg.vit.image_size
    pixels = preprocess(load_image(args.image), size * 256 // 224, size)
    seq = encode(clean_caption(args.caption, stopwords), vocab, model.cfg.text.max_len)
    logit = float(model(pixels[None], seq.ids[None], seq.attention_mask[None]).data[0])
    label = predict(logit, model.cfg.fusion.threshold)
    print(f"{label.slug}\t{sigmoid(logit):.4f}")
    return 0


def cmd_report(args) -> int:
    if args.metrics:
        path = Path(args.metrics)
    elif args.out:
        path = Path(args.out) / METRICS_NAME
    else:
        raise InputError("report needs --metrics <file> or --out <dir>")
    if not path.is_file():
        raise InputError(f"metrics file not found: {path}")
    try:
        rep = ClassificationReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a metrics document ({exc})") from None
    sys.stdout.write(render(rep))
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memefusion", description="Image+caption troll meme classifier")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key/value config file (dotted section names)")
    p.add_argument("--checkpoint")
    p.add_argument("--manifest")
    p.add_argument("--image-root", dest="image_root")
    p.add_argument("--vocab", help="vocabulary file (default: vocab.tsv next to the checkpoint)")
    p.add_argument("--image")
    p.add_argument("--caption")
    p.add_argument("--metrics", help="metrics.json for the report command")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(limits=args.threads or 1):
            return COMMANDS[args.command](args)
    except (InputError, CompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

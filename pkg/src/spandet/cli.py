"""Command-line entry points: train, eval, predict, sweep."""
from __future__ import annotations

import argparse
import os
import sys

from spandet.checkpoint import load_checkpoint
from spandet.config import ModelConfig, parse_config
from spandet.data import discover_classes, filter_single_class, parse_conll
from spandet.decoder import sweep_table, threshold_sweep, write_predictions_jsonl, \
    write_sweep_csv
from spandet.model import restore_model
from spandet.report import save_sweep_figure, save_training_figure, \
    write_history_csv
from spandet.train import evaluate, predict_spans, train


def _config_keys(text: str) -> set:
    keys = set()
    for line in text.splitlines():
        stripped = line.split("#", 1)[0].strip()
        if "=" in stripped:
            keys.add(stripped.partition("=")[0].strip())
    return keys


def _load_train_config(config_path, train_path) -> ModelConfig:
    """Parse the flat config; discover classes from the corpus if omitted."""
    with open(config_path, encoding="utf-8") as fh:
        text = fh.read()
    keys = _config_keys(text)
    base = None
    if "classes" not in keys:
        tag_column = -1
        for line in text.splitlines():
            stripped = line.split("#", 1)[0].strip()
            if stripped.startswith("tag_column"):
                tag_column = int(stripped.partition("=")[2])
        base = ModelConfig(classes=discover_classes(train_path, tag_column))
    return parse_config(text, base)


def _parse_thresholds(text: str) -> list:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range form is start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("threshold step must be positive")
        values, i = [], 0
        while True:
            t = round(start + i * step, 10)
            if t > stop + 1e-9:
                return values
            values.append(t)
            i += 1
    return [float(p) for p in text.split(",") if p.strip()]


def _load_eval_setup(args):
    ckpt = load_checkpoint(args.ckpt)
    model = restore_model(ckpt)
    cfg = ckpt.config
    sentences = parse_conll(args.data, cfg.tag_column, cfg.classes)
    return model, cfg, sentences


def _cmd_train(args) -> int:
    cfg = _load_train_config(args.config, args.train)
    train_sents = parse_conll(args.train, cfg.tag_column, cfg.classes)
    dev_sents = parse_conll(args.dev, cfg.tag_column, cfg.classes)
    if cfg.filter_single_class:
        kept = filter_single_class(train_sents,
                                   remove_full_cover=cfg.filter_full_cover)
        if len(kept) < len(train_sents):
            print(f"filtered {len(train_sents) - len(kept)} single-class "
                  f"sentences from the training set")
    else:
        kept = train_sents
    result = train(cfg, kept, dev_sents, out_path=args.out, log=print)
    stem = os.path.splitext(args.out)[0]
    write_history_csv(stem + "_history.csv", result.history)
    if not args.no_plot:
        save_training_figure(stem + "_loss.png", result.history)
    print(f"best dev F1 {result.best_f1:.4f} at epoch {result.best_epoch}; "
          f"checkpoint written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model, cfg, sentences = _load_eval_setup(args)
    threshold = cfg.threshold if args.threshold is None else args.threshold
    prf = evaluate(model, sentences, threshold, batch_size=cfg.batch_size)
    print(f"threshold {threshold:.2f}  precision {100 * prf.precision:.2f}  "
          f"recall {100 * prf.recall:.2f}  f1 {100 * prf.f1:.2f}")
    return 0


def _cmd_predict(args) -> int:
    model, cfg, sentences = _load_eval_setup(args)
    threshold = cfg.threshold if args.threshold is None else args.threshold
    spans = predict_spans(model, sentences, threshold,
                          batch_size=cfg.batch_size)
    write_predictions_jsonl(args.out, sentences, spans, cfg.classes)
    print(f"wrote {sum(len(s) for s in spans)} spans over {len(sentences)} "
          f"sentences to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    model, cfg, sentences = _load_eval_setup(args)
    thresholds = _parse_thresholds(args.thresholds)
    cands = model.predict_candidates(sentences, batch_size=cfg.batch_size)
    rows = threshold_sweep(cands, [len(s) for s in sentences],
                           [s.gold_spans for s in sentences], thresholds)
    write_sweep_csv(rows, args.out)
    if not args.no_plot:
        save_sweep_figure(os.path.splitext(args.out)[0] + ".png", rows)
    print(sweep_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spandet",
        description="Train and run the span-based entity detector.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--train", required=True, help="training corpus (CoNLL)")
    p.add_argument("--dev", required=True, help="development corpus (CoNLL)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--no-plot", action="store_true",
                   help="skip the training-curve PNG")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="write predicted spans as JSON lines")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("sweep", help="decode at several thresholds, write CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--thresholds", default="0.1:0.9:0.1",
                   help="start:stop:step range or comma list")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--no-plot", action="store_true",
                   help="skip the sweep PNG next to the CSV")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

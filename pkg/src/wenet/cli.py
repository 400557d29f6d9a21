"""Command-line interface: ``wenet <command> [flags]``.

Exit status is 0 on success, 1 on usage or configuration errors, and 2 on
data or numeric errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    CorpusSplit, Vocabulary, build_vocab, load_and_split, load_documents, tokenize,
    write_documents,
)
from .evaluation import MAX_N, NGramIndex, evaluate_corpus, plagiarism_table
from .exceptions import ConfigError, WenetError
from .model import generate
from .training import TrainConfig, train

logger = logging.getLogger("wenet")

PATH_KEYS = ("data_dir", "out")
SPLIT_FILES = {"train": "train.jsonl", "validation": "valid.jsonl", "test": "test.jsonl"}
VOCAB_FILE = "vocab.txt"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(TrainConfig)} | set(PATH_KEYS)
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = value if key in PATH_KEYS else _coerce(value)
    return values


def load_config(path, overrides: dict | None = None) -> tuple[TrainConfig, dict]:
    """TrainConfig plus path settings; ``overrides`` (non-None values) win."""
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    paths = {k: values.pop(k) for k in PATH_KEYS if k in values}
    return TrainConfig.from_dict(values), paths


def _load_split_dir(data_dir: Path, need=("train", "validation", "test")) -> CorpusSplit:
    parts = {}
    for name in ("train", "validation", "test"):
        path = data_dir / SPLIT_FILES[name]
        parts[name] = load_documents(path) if name in need else []
    return CorpusSplit(parts["train"], parts["validation"], parts["test"])


def _print_table(header: str, columns, rows, out=None):
    out = out or sys.stdout
    cells = [[header] + [str(c) for c in columns]]
    cells += [[label] + [f"{v:.1f}" for v in values] for label, values in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    for r in cells:
        out.write("  ".join(c.rjust(w) if i else c.ljust(w)
                            for i, (c, w) in enumerate(zip(r, widths))) + "\n")


def cmd_prepare(args):
    out_dir = Path(args.out_dir)
    split = load_and_split(args.input, seed=args.seed)
    vocab = build_vocab(split.train, min_freq=args.min_freq, max_size=args.vocab_size)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, filename in SPLIT_FILES.items():
        write_documents(getattr(split, name), out_dir / filename)
    vocab.save(out_dir / VOCAB_FILE)
    print(f"train {len(split.train)}  validation {len(split.validation)}  "
          f"test {len(split.test)}  vocabulary {len(vocab)}")


def _train_from_dir(cfg: TrainConfig, data_dir: Path):
    split = _load_split_dir(data_dir, need=("train", "validation"))
    vocab = Vocabulary.load(data_dir / VOCAB_FILE)
    return train(split, cfg, vocab=vocab,
                 on_epoch=lambda log: logger.info("epoch %d: train %.6f valid %s",
                                                  log.epoch, log.train_loss, log.valid_loss))


def cmd_train(args):
    cfg, paths = load_config(args.config, {"data_dir": args.data_dir, "out": args.out,
                                           "seed": args.seed, "epochs": args.epochs})
    if "data_dir" not in paths or "out" not in paths:
        raise UsageError("train needs --data-dir and --out (or config keys data_dir/out)")
    data_dir, out = Path(paths["data_dir"]), Path(paths["out"])
    result = _train_from_dir(cfg, data_dir)
    save_checkpoint(result.checkpoint, out)
    log = [{"epoch": e.epoch, "train_loss": e.train_loss, "valid_loss": e.valid_loss}
           for e in result.history]
    Path(str(out) + ".losses.json").write_text(json.dumps(log, indent=2) + "\n", encoding="utf-8")
    for e in result.history:
        valid = "-" if e.valid_loss is None else f"{e.valid_loss:.6f}"
        print(f"epoch {e.epoch:3d}  train {e.train_loss:.6f}  valid {valid}")
    print(f"saved best checkpoint (epoch {result.checkpoint.epoch}) to {out}")


def cmd_generate(args):
    ckpt = load_checkpoint(args.checkpoint)
    d = ckpt.config.iterations if args.iterations is None else args.iterations
    if d < 0:
        raise UsageError("--iterations must be >= 0")
    title = tokenize(args.title)
    if not title:
        raise UsageError("--title is empty")
    max_len = args.max_len or ckpt.config.max_decode_len
    drafts = generate(ckpt.vocab.encode(title), ckpt.params, d, max_len)
    for draft in drafts:
        print(f"X({draft.iteration}): {' '.join(ckpt.vocab.decode(draft.without_eos()))}")


def cmd_evaluate(args):
    if args.iterations is not None and args.iterations < 0:
        raise UsageError("--iterations must be >= 0")
    ckpt = load_checkpoint(args.checkpoint)
    split = _load_split_dir(Path(args.data_dir), need=("train", args.subset))
    report = evaluate_corpus(ckpt, split, args.iterations, subset=args.subset)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_plagcheck(args):
    if not 1 <= args.max_n <= MAX_N:
        raise UsageError(f"--max-n must be within 1..{MAX_N}")
    train_docs = load_documents(args.train_file)
    test_docs = load_documents(args.test_file)
    index = NGramIndex.build((doc.abstract for doc in train_docs), args.max_n)
    table = plagiarism_table(index, [doc.abstract for doc in test_docs], args.max_n)
    _print_table("n", list(table), [("overlap %", list(table.values()))])
    if args.out:
        Path(args.out).write_text(
            json.dumps({str(n): p for n, p in table.items()}, indent=2) + "\n", encoding="utf-8")


def cmd_sweep(args):
    if args.max_iterations < 1:
        raise UsageError("--max-iterations must be >= 1")
    cfg, paths = load_config(args.config, {"data_dir": args.data_dir})
    if "data_dir" not in paths:
        raise UsageError("sweep needs --data-dir")
    data_dir = Path(paths["data_dir"])
    split = _load_split_dir(data_dir)
    results = {}
    for d in range(1, args.max_iterations + 1):
        cfg_d = TrainConfig.from_dict({**cfg.to_dict(), "iterations": d})
        result = _train_from_dir(cfg_d, data_dir)
        report = evaluate_corpus(result.checkpoint, split, d)
        results[d] = report
        logger.info("d=%d meteor %.4f rouge-l %.4f", d, report.meteor, report.rouge_l)
    _print_table("n", list(results), [
        ("METEOR", [100 * r.meteor for r in results.values()]),
        ("ROUGE-L", [100 * r.rouge_l for r in results.values()]),
    ])
    if args.out:
        payload = {str(d): r.to_dict() for d, r in results.items()}
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wenet", description="Writing-editing network for abstract generation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="split a JSONL corpus and build the vocabulary")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-freq", type=int, default=2)
    p.add_argument("--vocab-size", type=int, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model and save the best checkpoint")
    p.add_argument("--config")
    p.add_argument("--data-dir")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="print the drafts for one title")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--title", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--max-len", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated abstracts and write a JSON report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--subset", choices=("test", "validation", "train"), default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plagcheck", help="n-gram overlap of test abstracts with training abstracts")
    p.add_argument("--train-file", required=True)
    p.add_argument("--test-file", required=True)
    p.add_argument("--max-n", type=int, default=MAX_N)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plagcheck)

    p = sub.add_parser("sweep", help="train and evaluate for d = 1..max iterations")
    p.add_argument("--config")
    p.add_argument("--data-dir")
    p.add_argument("--max-iterations", type=int, default=6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"wenet {args.command}: {exc}", file=sys.stderr)
        return 1
    except (WenetError, OSError, ArithmeticError) as exc:
        print(f"wenet {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

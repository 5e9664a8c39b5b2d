"""``genrec`` command line: preprocess, pretrain, finetune, evaluate, recommend.

Every subcommand prints a final ``status=ok ...`` line on success and
``status=error message=...`` on failure (exit code 1).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import checkpoint, corpus
from .config import RunConfig, load_config
from .decoding import beam_search, build_trie
from .evaluation import evaluate
from .model import GenRecModel
from .tasks import run_stage
from .tokenizer import Tokenizer, TokenizerError, Vocab

logger = logging.getLogger("genrec")

SPLITS, VOCAB, STATS, LOSS_LOG = "splits.tsv", "vocab.txt", "stats.txt", "loss.log"


class CLIError(Exception):
    pass


def _status(**fields):
    return "status=ok " + " ".join(f"{k}={v}" for k, v in fields.items())


def load_workdir(cfg):
    """Splits and tokenizer from a preprocessed workdir; checks the vocabulary file."""
    path = cfg.work / SPLITS
    if not path.exists():
        raise CLIError(f"missing split file {path}; run `genrec preprocess` first")
    with open(path, encoding="utf-8") as fh:
        splits = corpus.read_splits(fh)
    tokenizer = Tokenizer.from_sequences(splits, max_length=cfg.max_length)
    vocab_path = cfg.work / VOCAB
    if vocab_path.exists():
        on_disk = Vocab.from_text(vocab_path.read_text(encoding="utf-8"))
        if on_disk != tokenizer.vocab:
            raise CLIError(f"{vocab_path} does not match the vocabulary rebuilt from {path}")
    return splits, tokenizer


def cmd_preprocess(cfg):
    raw = Path(cfg.raw_path)
    if not raw.exists():
        raise CLIError(f"raw interaction file {raw} not found")
    with open(raw, "rb") as fh:
        interactions = corpus.ingest(fh)
    seqs = corpus.core_filter(corpus.build_sequences(interactions), cfg.min_count)
    if not seqs:
        raise CLIError(f"no users survive {cfg.min_count}-core filtering")
    splits = [corpus.leave_one_out(s) for s in seqs]
    tokenizer = Tokenizer.from_sequences(splits, max_length=cfg.max_length)
    st = corpus.stats(seqs)

    cfg.work.mkdir(parents=True, exist_ok=True)
    with open(cfg.work / SPLITS, "w", encoding="utf-8", newline="\n") as fh:
        corpus.write_splits(splits, fh)
    (cfg.work / VOCAB).write_text(tokenizer.vocab.to_text(), encoding="utf-8")
    (cfg.work / STATS).write_text(st.to_text(), encoding="utf-8")
    print(st.to_text(), end="")
    return _status(command="preprocess", users=st.num_users, items=st.num_items,
                   vocab_hash=tokenizer.fingerprint())


def _train(cfg, stage_name, model, splits, tokenizer, out):
    stage = cfg.stage(stage_name)
    with open(cfg.work / LOSS_LOG, "a", encoding="utf-8") as log:
        result = run_stage(model, splits, tokenizer, stage, log=log)
    checkpoint.save(out, model, stage=stage_name, epoch=stage.epochs,
                    vocab_hash=tokenizer.fingerprint(), seed=stage.seed)
    return result


def cmd_pretrain(cfg, out=None):
    splits, tokenizer = load_workdir(cfg)
    model = GenRecModel(cfg.model_config(tokenizer), seed=cfg.seed)
    out = Path(out or cfg.work / "pretrain.ckpt")
    result = _train(cfg, "pretrain", model, splits, tokenizer, out)
    return _status(command="pretrain", checkpoint=out, final_loss=f"{result.epoch_losses[-1]:.6f}")


def cmd_finetune(cfg, from_checkpoint=None, out=None):
    splits, tokenizer = load_workdir(cfg)
    want = cfg.model_config(tokenizer)
    if from_checkpoint:
        model, manifest = checkpoint.load(from_checkpoint, vocab_hash=tokenizer.fingerprint())
        if model.config != want:
            raise CLIError(f"{from_checkpoint}: model configuration differs from the run configuration")
    else:
        model = GenRecModel(want, seed=cfg.seed)
    out = Path(out or cfg.work / ("finetune.ckpt" if from_checkpoint else "finetune_scratch.ckpt"))
    result = _train(cfg, "finetune", model, splits, tokenizer, out)
    return _status(command="finetune", checkpoint=out, pretrained=bool(from_checkpoint),
                   final_loss=f"{result.epoch_losses[-1]:.6f}")


def _load_trained(cfg, ckpt, tokenizer):
    ckpt = Path(ckpt or cfg.work / "finetune.ckpt")
    if not ckpt.exists():
        raise CLIError(f"checkpoint {ckpt} not found")
    model, _ = checkpoint.load(ckpt, vocab_hash=tokenizer.fingerprint())
    return model


def cmd_evaluate(cfg, ckpt=None, phase="test", out=None):
    splits, tokenizer = load_workdir(cfg)
    model = _load_trained(cfg, ckpt, tokenizer)
    report = evaluate(model, tokenizer, splits, phase, beam_width=cfg.beam_width, k_list=cfg.ks)
    out = Path(out or cfg.work / f"report_{phase}.txt")
    out.write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")
    return _status(command="evaluate", phase=phase, report=out)


def format_recommendation(user_id, ranked):
    return user_id + "\t" + ",".join(f"{item}:{score:.6f}" for item, score in ranked)


def cmd_recommend(cfg, user_id, ckpt=None):
    if not user_id:
        raise CLIError("--user is required")
    splits, tokenizer = load_workdir(cfg)
    by_user = {s.user_id: s for s in splits}
    if user_id not in by_user:
        raise CLIError(f"unknown user {user_id!r}")
    model = _load_trained(cfg, ckpt, tokenizer)
    seq = tokenizer.encode(user_id, by_user[user_id].items, mask="append")
    ranked = beam_search(model, seq, build_trie(tokenizer), cfg.beam_width)
    print(format_recommendation(user_id, ranked))
    return _status(command="recommend", user=user_id, count=len(ranked))


def build_parser():
    parser = argparse.ArgumentParser(prog="genrec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("preprocess", "pretrain", "finetune", "evaluate", "recommend"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--workdir")
        if name in ("finetune", "evaluate", "recommend"):
            p.add_argument("--from", dest="from_checkpoint", metavar="CHECKPOINT")
        if name in ("pretrain", "finetune", "evaluate"):
            p.add_argument("--out")
        if name == "evaluate":
            p.add_argument("--phase", choices=("validation", "test"), default="test")
        if name == "recommend":
            p.add_argument("--user")
    return parser


def run(args):
    cfg: RunConfig = load_config(args.config).override(seed=args.seed, workdir=args.workdir)
    if args.command == "preprocess":
        return cmd_preprocess(cfg)
    if args.command == "pretrain":
        return cmd_pretrain(cfg, args.out)
    if args.command == "finetune":
        return cmd_finetune(cfg, args.from_checkpoint, args.out)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.from_checkpoint, args.phase, args.out)
    return cmd_recommend(cfg, args.user, args.from_checkpoint)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        line = run(args)
    except (CLIError, OSError, ValueError, TokenizerError, checkpoint.CheckpointError) as exc:
        print(f"status=error message={exc}", file=sys.stderr)
        return 1
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())

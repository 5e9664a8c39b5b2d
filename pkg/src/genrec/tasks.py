"""Masked-item examples for pretraining, finetuning and evaluation, and the training loop.

Only the training part of each leave-one-out split feeds training:

* pretraining masks one uniformly chosen train item in place;
* finetuning appends [MASK] to all but the last train item and targets it;
* evaluation appends [MASK] to the history and targets the held-out item.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .model import collate
from .numerics import AdamWState, WarmupSchedule, adamw_step, lr_at
from .tokenizer import MASK_ID

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaskedExample:
    user_id: str
    input: object  # TokenSequence with exactly one [MASK]
    target_item: str
    target_tokens: tuple
    mask_origin: str  # "pretrain" | "finetune" | "validation" | "test"
    mask_index: int | None = None  # position in the item list for pretraining

    def __post_init__(self):
        n = sum(1 for t in self.input.ids if t == MASK_ID)
        if n != 1:
            raise ValueError(f"example for {self.user_id!r} has {n} [MASK] tokens")


@dataclass
class StageConfig:
    stage: str = "finetune"
    epochs: int = 25
    batch_size: int = 32
    seed: int = 0
    base_lr: float = 1e-5
    weight_decay: float = 1e-5
    warmup_fraction: float = 0.05
    grad_clip: float | None = None

    def __post_init__(self):
        if self.stage not in ("pretrain", "finetune"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")


class TrainingDiverged(RuntimeError):
    pass


def make_pretrain_example(split, tokenizer, rng):
    items = split.train_items
    if not items:
        raise ValueError(f"user {split.user_id!r} has no training items to mask")
    k = int(rng.integers(len(items)))
    return MaskedExample(
        split.user_id,
        tokenizer.encode(split.user_id, items, mask=k),
        items[k],
        tuple(tokenizer.target_ids(items[k])),
        "pretrain",
        k,
    )


def make_finetune_example(split, tokenizer):
    """Returns None (with a warning) when fewer than two train items exist."""
    items = split.train_items
    if len(items) < 2:
        logger.warning("user %s: %d train items, no finetune example", split.user_id, len(items))
        return None
    return MaskedExample(
        split.user_id,
        tokenizer.encode(split.user_id, items[:-1], mask="append"),
        items[-1],
        tuple(tokenizer.target_ids(items[-1])),
        "finetune",
    )


def make_eval_example(split, tokenizer, phase):
    if phase == "validation":
        history, target = split.train_items, split.val_item
    elif phase == "test":
        history, target = split.train_items + (split.val_item,), split.test_item
    else:
        raise ValueError(f"phase must be 'validation' or 'test', got {phase!r}")
    return MaskedExample(
        split.user_id,
        tokenizer.encode(split.user_id, history, mask="append"),
        target,
        tuple(tokenizer.target_ids(target)),
        phase,
    )


@dataclass
class StageResult:
    epoch_losses: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    log_lines: list = field(default_factory=list)


def _clip(params, max_norm):
    total = math.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in params))
    if total > max_norm:
        for p in params:
            p.grad *= max_norm / (total + 1e-6)


def run_stage(model, splits, tokenizer, stage, log=None):
    """Train ``model`` in place for one stage and return its loss history.

    Pretraining draws a fresh mask position per user every epoch; finetuning
    examples are built once. Batches are a seeded permutation of the users.
    ``log`` is an optional text file object that receives one line per epoch.
    """
    rng = np.random.default_rng(stage.seed)
    model.rng = np.random.default_rng([stage.seed, 1])
    splits = list(splits)

    if stage.stage == "finetune":
        fixed = [e for e in (make_finetune_example(s, tokenizer) for s in splits) if e is not None]
        n = len(fixed)
    else:
        fixed = None
        n = len(splits)
    if n == 0:
        raise ValueError("no training examples")

    steps_per_epoch = math.ceil(n / stage.batch_size)
    schedule = WarmupSchedule(stage.epochs * steps_per_epoch, stage.base_lr, stage.warmup_fraction)
    opt = AdamWState(lr=stage.base_lr, weight_decay=stage.weight_decay)
    params = model.parameters()
    result = StageResult()
    step = 0
    model.train()
    try:
        for epoch in range(1, stage.epochs + 1):
            if fixed is None:
                examples = [make_pretrain_example(s, tokenizer, rng) for s in splits]
            else:
                examples = fixed
            order = rng.permutation(n)
            total, count = 0.0, 0
            for start in range(0, n, stage.batch_size):
                chunk = [examples[i] for i in order[start:start + stage.batch_size]]
                model.zero_grad()
                loss = model.loss(collate([e.input for e in chunk]), [e.target_tokens for e in chunk])
                value = loss.item()
                if not math.isfinite(value):
                    users = ",".join(e.user_id for e in chunk)
                    raise TrainingDiverged(
                        f"{stage.stage}: non-finite loss at step {step + 1} (epoch {epoch}); users {users}")
                nx.backward(loss)
                if stage.grad_clip:
                    _clip(params, stage.grad_clip)
                step += 1
                lr = lr_at(schedule, step)
                adamw_step(params, opt, lr)
                result.step_losses.append(value)
                total += value * len(chunk)
                count += len(chunk)
            mean_loss = total / count
            result.epoch_losses.append(mean_loss)
            line = f"{stage.stage}\t{epoch}\t{mean_loss:.6f}\t{lr:.6g}"
            result.log_lines.append(line)
            logger.info("%s epoch %d loss %.4f lr %.3g", stage.stage, epoch, mean_loss, lr)
            if log is not None:
                log.write(line + "\n")
                log.flush()
    finally:
        model.eval()
        model.rng = None
    return result

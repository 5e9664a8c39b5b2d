"""Hit ratio and NDCG over the full item catalogue for leave-one-out splits."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .decoding import beam_search, build_trie, exhaustive_rank
from .tasks import make_eval_example
from .tokenizer import TokenizerError

logger = logging.getLogger(__name__)

DEFAULT_K = (1, 5, 10)


def hit(ranked, target, k):
    if k < 1:
        raise ValueError("k must be at least 1")
    return int(target in list(ranked)[:k])


def ndcg(ranked, target, k):
    """Single relevant item: 1/log2(rank + 1) inside the cutoff, else 0."""
    if k < 1:
        raise ValueError("k must be at least 1")
    for r, item in enumerate(list(ranked)[:k], start=1):
        if item == target:
            return 1.0 / math.log2(r + 1)
    return 0.0


def metric_names(k_list=DEFAULT_K):
    ks = sorted(set(k_list))
    return [f"HR@{k}" for k in ks] + [f"NDCG@{k}" for k in ks if k > 1]


@dataclass
class EvalReport:
    phase: str
    metrics: dict
    num_users_evaluated: int
    num_users_excluded: int = 0
    beam_width: int | None = None
    per_user: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, name):
        return self.metrics[name]

    def to_text(self):
        lines = [f"phase={self.phase}"]
        lines += [f"{name}={value:.4f}" for name, value in self.metrics.items()]
        lines.append(f"num_users_evaluated={self.num_users_evaluated}")
        lines.append(f"num_users_excluded={self.num_users_excluded}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        phase = kv.pop("phase")
        n = int(kv.pop("num_users_evaluated"))
        excluded = int(kv.pop("num_users_excluded", 0))
        return cls(phase, {k: float(v) for k, v in kv.items()}, n, excluded)


def score_rankings(rankings, targets, k_list=DEFAULT_K):
    """Mean HR/NDCG over users. ``rankings`` are item-id lists, best first."""
    if not rankings:
        raise ValueError("nothing to evaluate")
    names = metric_names(k_list)
    totals = dict.fromkeys(names, 0.0)
    for ranked, target in zip(rankings, targets):
        for k in sorted(set(k_list)):
            totals[f"HR@{k}"] += hit(ranked, target, k)
            if k > 1:
                totals[f"NDCG@{k}"] += ndcg(ranked, target, k)
    return {name: totals[name] / len(rankings) for name in names}


def evaluate(model, tokenizer, splits, phase, beam_width=20, k_list=DEFAULT_K, trie=None, exact=False):
    """Rank the held-out item of every user and average the metrics.

    ``exact=True`` ranks with ``exhaustive_rank`` instead of the beam (only
    for small catalogues). Users whose example cannot be built are counted in
    ``num_users_excluded``.
    """
    if not exact and beam_width < max(k_list):
        logger.warning("beam_width %d < max k %d: targets below the beam count as misses",
                       beam_width, max(k_list))
    if trie is None and not exact:
        trie = build_trie(tokenizer)
    rankings, targets, per_user = [], [], {}
    excluded = 0
    for split in sorted(splits, key=lambda s: s.user_id):
        try:
            ex = make_eval_example(split, tokenizer, phase)
        except (TokenizerError, KeyError, ValueError) as exc:
            logger.warning("user %s excluded from %s: %s", split.user_id, phase, exc)
            excluded += 1
            continue
        if exact:
            ranked = exhaustive_rank(model, ex.input, tokenizer)
        else:
            ranked = beam_search(model, ex.input, trie, beam_width)
        rankings.append(ranked.items)
        targets.append(ex.target_item)
        per_user[split.user_id] = ranked
    if not rankings:
        raise ValueError(f"empty {phase} set")
    metrics = score_rankings(rankings, targets, k_list)
    return EvalReport(phase, metrics, len(rankings), excluded, None if exact else beam_width, per_user)

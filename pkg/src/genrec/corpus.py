"""Interaction logs to per-user chronological sequences and leave-one-out splits."""
from __future__ import annotations

import io
from collections import Counter, defaultdict
from dataclasses import dataclass


class CorpusFormatError(ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    timestamp: int

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise ValueError("user_id and item_id must be non-empty")
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.timestamp}")


@dataclass(frozen=True)
class UserSequence:
    user_id: str
    items: tuple

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class SplitSequence:
    user_id: str
    train_items: tuple
    val_item: str
    test_item: str

    @property
    def items(self):
        return self.train_items + (self.val_item, self.test_item)


@dataclass(frozen=True)
class DatasetStats:
    num_users: int
    num_items: int
    num_interactions: int
    avg_items_per_user: float
    avg_users_per_item: float

    def to_text(self):
        return (
            f"# Users\t{self.num_users}\n"
            f"# Items\t{self.num_items}\n"
            f"# Interactions\t{self.num_interactions}\n"
            f"Avg. Items / User\t{self.avg_items_per_user:.1f}\n"
            f"Avg. Users / Item\t{self.avg_users_per_item:.1f}\n"
        )


def ingest(source):
    """Parse tab-separated ``user_id, item_id, timestamp`` lines.

    ``source`` may be bytes, str, or a binary/text file object. Blank lines
    are skipped; any other malformed line raises ``CorpusFormatError``.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)
    out = []
    for line_no, raw in enumerate(source, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise CorpusFormatError(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        user_id, item_id, ts = fields
        try:
            timestamp = int(ts)
        except ValueError:
            raise CorpusFormatError(line_no, f"timestamp {ts!r} is not an integer") from None
        try:
            out.append(Interaction(user_id, item_id, timestamp))
        except ValueError as exc:
            raise CorpusFormatError(line_no, str(exc)) from None
    return out


def build_sequences(interactions):
    # sorted() is stable, so equal timestamps keep their input order
    by_user = defaultdict(list)
    for it in interactions:
        by_user[it.user_id].append(it)
    return [
        UserSequence(u, tuple(it.item_id for it in sorted(by_user[u], key=lambda it: it.timestamp)))
        for u in sorted(by_user)
    ]


def core_filter(sequences, min_count=5):
    """Iteratively drop sparse users and items until every survivor has ``min_count``.

    Item support counts the number of sequences an item occurs in. Dropping
    an item removes all its occurrences from the remaining sequences.
    """
    if min_count < 1:
        raise ValueError("min_count must be at least 1")
    seqs = {s.user_id: s.items for s in sequences}
    while True:
        seqs = {u: items for u, items in seqs.items() if len(items) >= min_count}
        support = Counter(i for items in seqs.values() for i in set(items))
        rare = {i for i, c in support.items() if c < min_count}
        if not rare:
            break
        seqs = {u: tuple(i for i in items if i not in rare) for u, items in seqs.items()}
    return [UserSequence(u, seqs[u]) for u in sorted(seqs)]


def leave_one_out(seq):
    items = tuple(seq.items)
    if len(items) < 3:
        raise ValueError(f"user {seq.user_id!r} has {len(items)} items; need at least 3 to split")
    return SplitSequence(seq.user_id, items[:-2], items[-2], items[-1])


def stats(sequences):
    sequences = list(sequences)
    if not sequences:
        return DatasetStats(0, 0, 0, 0.0, 0.0)
    total = sum(len(s.items) for s in sequences)
    users = len({s.user_id for s in sequences})
    items = len({i for s in sequences for i in s.items})
    return DatasetStats(users, items, total, total / users, total / items if items else 0.0)


def write_splits(splits, fh):
    """One line per user, sorted by user id: ``user  train,items  val  test``."""
    for s in sorted(splits, key=lambda s: s.user_id):
        bad = [i for i in s.items if "," in i or "\t" in i]
        if bad:
            raise ValueError(f"item id {bad[0]!r} cannot be written to a split file")
        fh.write(f"{s.user_id}\t{','.join(s.train_items)}\t{s.val_item}\t{s.test_item}\n")


def read_splits(fh):
    out = []
    for line_no, line in enumerate(fh, start=1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise CorpusFormatError(line_no, f"expected 4 tab-separated fields, got {len(fields)}")
        user_id, train, val, test = fields
        out.append(SplitSequence(user_id, tuple(train.split(",")), val, test))
    return out

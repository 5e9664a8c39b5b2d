"""Serialize user/item histories into token ids with per-token entity tags.

Words look like ``user_7`` or ``item_1234``. A word is split into its alpha
prefix, an underscore, and its digits chunked left to right in pairs, so
``item_1234`` becomes ``item _ 12 34``. Users and items are indexed by the
order they first appear in the training corpus.
"""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass

logger = logging.getLogger(__name__)

PAD, BEG, END, MASK = "[PAD]", "[BEG]", "[END]", "[MASK]"
SPECIALS = (PAD, BEG, END, MASK)
PAD_ID, BEG_ID, END_ID, MASK_ID = range(4)

_WORD = re.compile(r"^([A-Za-z]+)_([0-9]+)$")


class TokenizerError(ValueError):
    pass


class MalformedGeneration(ValueError):
    def __init__(self, tokens, reason):
        super().__init__(f"cannot decode {tokens!r} as an item: {reason}")
        self.tokens = tokens


@dataclass(frozen=True)
class EntityTag:
    kind: str = "none"  # "none" | "user" | "item"
    index: int = -1

    def __repr__(self):
        return "None" if self.kind == "none" else f"{self.kind[0].upper()}{self.index}"


NO_TAG = EntityTag()


def user_tag(index):
    return EntityTag("user", index)


def item_tag(index):
    return EntityTag("item", index)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple
    tags: tuple
    true_length: int
    dropped_items: int = 0

    def __post_init__(self):
        if len(self.ids) != len(self.tags):
            raise ValueError("ids and tags must have the same length")

    def __len__(self):
        return len(self.ids)


def tokenize_word(word):
    m = _WORD.match(word)
    if m is None:
        raise TokenizerError(f"word {word!r} is not of the form <letters>_<digits>")
    prefix, digits = m.groups()
    return [prefix, "_"] + [digits[i:i + 2] for i in range(0, len(digits), 2)]


class Vocab:
    def __init__(self, tokens=()):
        self.id_to_token = list(SPECIALS)
        self.token_to_id = {t: i for i, t in enumerate(SPECIALS)}
        for t in tokens:
            self.add(t)

    def add(self, token):
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.id_to_token == other.id_to_token

    def to_text(self):
        return "".join(t + "\n" for t in self.id_to_token)

    @classmethod
    def from_text(cls, text):
        lines = text.splitlines()
        if tuple(lines[:4]) != SPECIALS:
            raise TokenizerError("vocabulary file must start with [PAD] [BEG] [END] [MASK]")
        vocab = cls(lines[4:])
        if len(vocab) != len(lines):
            raise TokenizerError("vocabulary file contains duplicate tokens")
        return vocab


class Tokenizer:
    """Maps users and items to indices and sequences to ``TokenSequence``."""

    def __init__(self, user_ids, item_ids, max_length=512):
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.item_index = {t: i for i, t in enumerate(self.item_ids)}
        if len(self.user_index) != len(self.user_ids) or len(self.item_index) != len(self.item_ids):
            raise TokenizerError("duplicate user or item id")
        self.max_length = max_length
        self.vocab = Vocab()
        for i in range(len(self.user_ids)):
            for t in tokenize_word(f"user_{i}"):
                self.vocab.add(t)
        for i in range(len(self.item_ids)):
            for t in tokenize_word(f"item_{i}"):
                self.vocab.add(t)
        self._item_tokens = [self._word_ids(f"item_{i}") for i in range(len(self.item_ids))]

    @classmethod
    def from_sequences(cls, sequences, max_length=512):
        """Index users in the given order and items by first appearance."""
        users, items, seen = [], [], set()
        for s in sequences:
            users.append(s.user_id)
            for i in s.items:
                if i not in seen:
                    seen.add(i)
                    items.append(i)
        return cls(users, items, max_length)

    @property
    def num_users(self):
        return len(self.user_ids)

    @property
    def num_items(self):
        return len(self.item_ids)

    def fingerprint(self):
        """Hash over the vocabulary and the user/item index order."""
        h = hashlib.sha256()
        h.update(self.vocab.to_text().encode("utf-8"))
        for name in (*self.user_ids, "\x00", *self.item_ids):
            h.update(name.encode("utf-8") + b"\n")
        return h.hexdigest()[:16]

    def _word_ids(self, word):
        return [self.vocab.token_to_id[t] for t in tokenize_word(word)]

    def serialize(self, user_id, items):
        if not items:
            raise TokenizerError("cannot serialize an empty item list")
        if user_id not in self.user_index:
            raise TokenizerError(f"unknown user {user_id!r}")
        words = [f"user_{self.user_index[user_id]}"]
        for it in items:
            if it not in self.item_index:
                raise TokenizerError(f"unknown item {it!r}")
            words.append(f"item_{self.item_index[it]}")
        return " ".join(words)

    def item_token_ids(self, item_id):
        """Token ids of one item word, without [BEG]/[END]."""
        return list(self._item_tokens[self.item_index[item_id]])

    def target_ids(self, item_id):
        return [BEG_ID, *self.item_token_ids(item_id), END_ID]

    def encode(self, user_id, items, mask=None):
        """Tokenize ``user_id`` and ``items`` wrapped in [BEG] ... [END].

        ``mask`` is None (no mask), ``"append"`` (one [MASK] after the last
        item) or an integer k (all tokens of item k become one [MASK]).
        """
        items = list(items)
        if mask is not None and mask != "append":
            if isinstance(mask, bool) or not isinstance(mask, int):
                raise TypeError(f"mask must be None, 'append' or an item index, got {mask!r}")
            if not 0 <= mask < len(items):
                raise IndexError(f"mask index {mask} outside {len(items)} items")
        if user_id not in self.user_index:
            raise TokenizerError(f"unknown user {user_id!r}")
        for it in items:
            if it not in self.item_index:
                raise TokenizerError(f"unknown item {it!r}")

        uidx = self.user_index[user_id]
        user_part = [(t, user_tag(uidx)) for t in self._word_ids(f"user_{uidx}")]
        item_parts = []
        for k, it in enumerate(items):
            if k == mask:
                item_parts.append([(MASK_ID, NO_TAG)])
            else:
                tag = item_tag(self.item_index[it])
                item_parts.append([(t, tag) for t in self._item_tokens[tag.index]])
        if mask == "append":
            item_parts.append([(MASK_ID, NO_TAG)])

        # keep the most recent items; the user word and the mask always stay
        budget = self.max_length - 2 - len(user_part)
        dropped = 0
        while sum(len(p) for p in item_parts) > budget:
            droppable = [k for k, p in enumerate(item_parts) if p[0][0] != MASK_ID]
            if not droppable:
                raise TokenizerError("max_length too small to hold the user and the mask")
            item_parts.pop(droppable[0])
            dropped += 1
        if dropped:
            logger.warning("user %s: dropped %d oldest items to fit max_length=%d",
                           user_id, dropped, self.max_length)

        body = user_part + [pair for p in item_parts for pair in p]
        ids = (BEG_ID, *(t for t, _ in body), END_ID)
        tags = (NO_TAG, *(g for _, g in body), NO_TAG)
        return TokenSequence(ids, tags, len(ids), dropped)

    def decode_item(self, ids):
        """Map generated token ids back to an item id, ignoring special tokens."""
        tokens = [self.vocab.id_to_token[i] if 0 <= i < len(self.vocab) else f"<{i}>" for i in ids]
        content = [t for t in tokens if t not in SPECIALS]
        text = "".join(content)
        m = re.fullmatch(r"item_([0-9]+)", text)
        if m is None:
            raise MalformedGeneration(tokens, "expected item_<digits>")
        digits = m.group(1)
        index = int(digits)
        if str(index) != digits or index >= len(self.item_ids):
            raise MalformedGeneration(tokens, f"no item with index {digits}")
        if content != tokenize_word(f"item_{index}"):
            raise MalformedGeneration(tokens, "token boundaries do not match the item word")
        return self.item_ids[index]

"""Trie-constrained beam search over item token sequences.

At each decoder step a hypothesis may only emit tokens that extend some
item's token sequence, or [END] once it spells a whole item, so every
finished hypothesis names a real item. Scores are summed token
log-probabilities including [END], with no length normalization. Ties are
broken by smaller item index.

``exhaustive_rank`` scores every item by teacher forcing and is the test
oracle for the search.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .model import collate
from .tokenizer import BEG_ID, END_ID, PAD_ID, MalformedGeneration

MAX_EXHAUSTIVE_ITEMS = 10_000


class TrieNode:
    __slots__ = ("children", "item", "min_item")

    def __init__(self):
        self.children = {}
        self.item = None  # item index if a whole item ends here
        self.min_item = None  # smallest item index in this subtree

    @property
    def is_terminal(self):
        return self.item is not None


class ItemTrie:
    def __init__(self, item_ids):
        self.root = TrieNode()
        self.item_ids = list(item_ids)
        self.max_depth = 0

    def __len__(self):
        return sum(1 for _ in self.terminals())

    def insert(self, tokens, index):
        node = self.root
        for t in tokens:
            if node.min_item is None or index < node.min_item:
                node.min_item = index
            node = node.children.setdefault(t, TrieNode())
        if node.is_terminal:
            raise ValueError(
                f"items {self.item_ids[node.item]!r} and {self.item_ids[index]!r} share a token sequence")
        node.item = index
        if node.min_item is None or index < node.min_item:
            node.min_item = index
        self.max_depth = max(self.max_depth, len(tokens))

    def terminals(self):
        """Yield ``(depth, node)`` for every terminal node."""
        stack = [(0, self.root)]
        while stack:
            depth, node = stack.pop()
            if node.is_terminal:
                yield depth, node
            stack.extend((depth + 1, c) for c in node.children.values())

    def shared_prefix_terminals(self):
        """Item ids whose token sequence is a proper prefix of another item's."""
        return sorted((self.item_ids[n.item] for _, n in self.terminals() if n.children),
                      key=self.item_ids.index)

    def item_tokens(self, index):
        """Recover the token path for item ``index``."""
        path = []

        def walk(node):
            if node.item == index:
                return True
            for tok, child in node.children.items():
                path.append(tok)
                if walk(child):
                    return True
                path.pop()
            return False

        if not walk(self.root):
            raise KeyError(index)
        return path


def build_trie(tokenizer):
    trie = ItemTrie(tokenizer.item_ids)
    for index, item in enumerate(tokenizer.item_ids):
        trie.insert(tokenizer.item_token_ids(item), index)
    return trie


@dataclass(frozen=True)
class RankedPrediction:
    entries: tuple  # ((item_id, log_prob), ...) best first

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def items(self):
        return [item for item, _ in self.entries]

    @property
    def scores(self):
        return [score for _, score in self.entries]

    def rank_of(self, item):
        """1-based rank of ``item``, or None when absent."""
        for r, (it, _) in enumerate(self.entries, start=1):
            if it == item:
                return r
        return None


def _encode_one(model, seq):
    batch = collate([seq])
    with nx.no_grad():
        enc = model.encode_batch(batch)
    return enc.data, batch.pad_mask


def _next_log_probs(model, enc, pad_mask, prefixes, width):
    """Log-probabilities of the token after each prefix, shape [N, V].

    Prefixes are right-padded to a fixed ``width`` so every call sees the
    same shapes as the teacher-forced oracle.
    """
    n = len(prefixes)
    ids = np.full((n, width), PAD_ID, dtype=np.int64)
    for b, p in enumerate(prefixes):
        ids[b, :len(p)] = p
    last = np.array([len(p) - 1 for p in prefixes])
    with nx.no_grad():
        logits = model.decode(ids, nx.Tensor(np.repeat(enc, n, axis=0)), np.repeat(pad_mask, n, axis=0))
        logp = nx.log_softmax(logits).data
    return logp[np.arange(n), last]


def beam_search(model, seq, trie, beam_width=20, constrained=True, tokenizer=None):
    """Top ``beam_width`` items for the masked position in ``seq``.

    With ``constrained=False`` the decoder may emit any token; finished
    hypotheses that do not spell an item (checked via ``tokenizer``) and
    duplicates are dropped, so the result may be shorter than the beam or empty.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be at least 1")
    if not constrained and tokenizer is None:
        raise ValueError("unconstrained decoding needs a tokenizer to validate outputs")
    enc, pad_mask = _encode_one(model, seq)
    width = trie.max_depth + 1
    vocab_size = model.config.vocab_size

    # live hypothesis: (score, tokens, node); node is None when unconstrained
    live = [(0.0, (BEG_ID,), trie.root)]
    finished = []  # (score, item_index)
    for _ in range(trie.max_depth + 1):
        if not live:
            break
        logp = _next_log_probs(model, enc, pad_mask, [h[1] for h in live], width)
        candidates = []
        for (score, tokens, node), row in zip(live, logp):
            if constrained:
                if node.is_terminal:
                    candidates.append((score + float(row[END_ID]), node.item, tokens, None))
                for tok, child in node.children.items():
                    candidates.append((score + float(row[tok]), child.min_item, tokens + (tok,), child))
            else:
                for tok in range(vocab_size):
                    if tok in (PAD_ID, BEG_ID):
                        continue
                    candidates.append((score + float(row[tok]), tok, tokens + (tok,), tok == END_ID))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for score, key, tokens, child in candidates[:beam_width]:
            if constrained:
                if child is None:
                    finished.append((score, key))
                else:
                    live.append((score, tokens, child))
            elif child:
                try:
                    item = tokenizer.decode_item(tokens)
                except MalformedGeneration:
                    continue
                finished.append((score, tokenizer.item_index[item]))
            else:
                live.append((score, tokens, None))
        if len(finished) >= beam_width and live:
            kth = sorted(finished, key=lambda f: (-f[0], f[1]))[beam_width - 1][0]
            if max(h[0] for h in live) < kth:
                break

    best = {}
    for score, index in finished:
        if index not in best or score > best[index]:
            best[index] = score
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:beam_width]
    if not ranked and constrained:
        raise RuntimeError("beam search finished no hypotheses")
    return RankedPrediction(tuple((trie.item_ids[i], s) for i, s in ranked))


def item_log_probs(model, seq, token_lists, width=None, chunk=512):
    """Teacher-forced log P(tokens + [END] | seq) for each token list."""
    enc, pad_mask = _encode_one(model, seq)
    width = width or max(len(t) for t in token_lists) + 1
    out = []
    for start in range(0, len(token_lists), chunk):
        part = token_lists[start:start + chunk]
        n = len(part)
        ids = np.full((n, width), PAD_ID, dtype=np.int64)
        for b, toks in enumerate(part):
            ids[b, :len(toks) + 1] = (BEG_ID, *toks)
        with nx.no_grad():
            logits = model.decode(ids, nx.Tensor(np.repeat(enc, n, axis=0)), np.repeat(pad_mask, n, axis=0))
            logp = nx.log_softmax(logits).data
        for b, toks in enumerate(part):
            total = 0.0
            for pos, tok in enumerate((*toks, END_ID)):
                total += float(logp[b, pos, tok])
            out.append(total)
    return out


def exhaustive_rank(model, seq, tokenizer, limit=None):
    """Rank every item by its exact sequence log-probability."""
    n = tokenizer.num_items
    if n > MAX_EXHAUSTIVE_ITEMS:
        raise ValueError(f"{n} items exceeds the exhaustive ranking guard of {MAX_EXHAUSTIVE_ITEMS}")
    token_lists = [tokenizer.item_token_ids(i) for i in tokenizer.item_ids]
    scores = item_log_probs(model, seq, token_lists, width=max(len(t) for t in token_lists) + 1)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    if limit is not None:
        order = order[:limit]
    return RankedPrediction(tuple((tokenizer.item_ids[i], scores[i]) for i in order))

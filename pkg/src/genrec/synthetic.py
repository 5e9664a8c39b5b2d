"""Synthetic interaction logs with a known next-item rule."""
from __future__ import annotations

import argparse

import numpy as np

from .corpus import Interaction


def cyclic_interactions(num_users=200, num_items=30, seq_len=8, noise=0.0, seed=0):
    """Each user walks the item cycle ``i, i+1, ...`` (mod ``num_items``) from a random start.

    With ``noise > 0`` each emitted item is independently replaced by a
    uniformly random item with that probability; the walk itself continues
    unchanged. Timestamps increase by one per step.
    """
    rng = np.random.default_rng(seed)
    width = len(str(num_users - 1))
    out = []
    for u in range(num_users):
        start = int(rng.integers(num_items))
        for step in range(seq_len):
            item = (start + step) % num_items
            if noise and rng.random() < noise:
                item = int(rng.integers(num_items))
            out.append(Interaction(f"u{u:0{width}d}", f"i{item}", 1_000 + step))
    return out


def to_tsv(interactions):
    return "".join(f"{it.user_id}\t{it.item_id}\t{it.timestamp}\n" for it in interactions)


def main(argv=None):
    parser = argparse.ArgumentParser(description="Write a synthetic cyclic interaction log as TSV.")
    parser.add_argument("--out", required=True)
    parser.add_argument("--users", type=int, default=200)
    parser.add_argument("--items", type=int, default=30)
    parser.add_argument("--length", type=int, default=8)
    parser.add_argument("--noise", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rows = cyclic_interactions(args.users, args.items, args.length, args.noise, args.seed)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_tsv(rows))


if __name__ == "__main__":
    main()

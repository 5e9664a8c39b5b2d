"""
Turning interaction histories into tokens
=========================================

Users and items get integer indices in order of first appearance. A user
becomes the word ``user_<k>`` and an item ``item_<k>``; each word is split
into a prefix, an underscore, and two-digit chunks of the index.
"""
from genrec import Tokenizer, tokenize_word

# the index 1234 is chunked left to right
print(tokenize_word("item_1234"))
print(tokenize_word("item_12345"))

# a tiny catalogue
tok = Tokenizer(["alice", "bob"], ["apple", "pear", "plum", "fig"])
print(tok.serialize("bob", ["plum", "apple", "pear"]))

# encoder input with a [MASK] appended, as used for next-item prediction
seq = tok.encode("bob", ["plum", "apple"], mask="append")
print([tok.vocab.id_to_token[i] for i in seq.ids])
print(seq.tags)

# masking an item in place collapses its tokens to one [MASK]
seq = tok.encode("bob", ["plum", "apple", "pear"], mask=1)
print([tok.vocab.id_to_token[i] for i in seq.ids])

# decoder targets are wrapped in [BEG] ... [END] and decode back to the item
target = tok.target_ids("fig")
print(target, "->", tok.decode_item(target))

"""Generative sequential recommendation with a masked-item encoder-decoder."""
from .corpus import (
    DatasetStats,
    Interaction,
    SplitSequence,
    UserSequence,
    build_sequences,
    core_filter,
    ingest,
    leave_one_out,
    stats,
)
from .decoding import ItemTrie, RankedPrediction, beam_search, build_trie, exhaustive_rank
from .evaluation import EvalReport, evaluate, hit, ndcg
from .model import GenRecConfig, GenRecModel, param_count
from .tasks import (
    MaskedExample,
    StageConfig,
    make_eval_example,
    make_finetune_example,
    make_pretrain_example,
    run_stage,
)
from .tokenizer import MalformedGeneration, TokenSequence, Tokenizer, Vocab, tokenize_word

__version__ = "0.1.0"

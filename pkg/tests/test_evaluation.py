import logging
import math

import numpy as np
import pytest

import genrec.numerics as nx
from genrec.corpus import SplitSequence, build_sequences, core_filter, leave_one_out
from genrec.evaluation import EvalReport, evaluate, hit, metric_names, ndcg, score_rankings
from genrec.model import GenRecConfig, GenRecModel
from genrec.synthetic import cyclic_interactions
from genrec.tokenizer import END_ID, Tokenizer

RANKING = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k"]


def test_hit_cases():
    assert hit(RANKING, "a", 5) == 1
    assert hit(RANKING, "f", 5) == 0
    assert all(hit(RANKING, "zz", k) == 0 for k in (1, 5, 10))


def test_ndcg_cases():
    assert ndcg(RANKING, "a", 5) == 1.0
    assert ndcg(RANKING, "c", 5) == 0.5
    assert ndcg(RANKING, "k", 10) == 0.0


def test_k_must_be_positive():
    with pytest.raises(ValueError):
        hit(RANKING, "a", 0)
    with pytest.raises(ValueError):
        ndcg(RANKING, "a", 0)


def test_metric_names():
    assert metric_names() == ["HR@1", "HR@5", "HR@10", "NDCG@5", "NDCG@10"]


def brute_force(rankings, targets, ks):
    """Independent tally: find the rank by scanning, then apply the definitions."""
    totals = {}
    for ranked, target in zip(rankings, targets):
        rank = None
        for pos in range(len(ranked)):
            if ranked[pos] == target:
                rank = pos + 1
                break
        for k in ks:
            inside = rank is not None and rank <= k
            totals[f"HR@{k}"] = totals.get(f"HR@{k}", 0) + (1 if inside else 0)
            if k > 1:
                totals[f"NDCG@{k}"] = totals.get(f"NDCG@{k}", 0) + (1 / math.log2(rank + 1) if inside else 0)
    return {name: v / len(rankings) for name, v in totals.items()}


def random_pairs(n, seed, catalogue=30):
    rng = np.random.default_rng(seed)
    rankings, targets = [], []
    for _ in range(n):
        length = int(rng.integers(0, 21))
        rankings.append([f"i{j}" for j in rng.permutation(catalogue)[:length]])
        targets.append(f"i{rng.integers(catalogue)}")
    return rankings, targets


def test_score_rankings_matches_brute_force_50_users():
    rankings, targets = random_pairs(50, seed=0)
    got = score_rankings(rankings, targets)
    want = brute_force(rankings, targets, (1, 5, 10))
    assert got.keys() == want.keys()
    for name in got:
        assert got[name] == pytest.approx(want[name], abs=1e-12)


def test_duplicating_users_leaves_metrics_unchanged():
    rankings, targets = random_pairs(40, seed=1)
    once = score_rankings(rankings, targets)
    twice = score_rankings(rankings * 2, targets * 2)
    for name in once:
        assert twice[name] == pytest.approx(once[name], abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_metric_monotonicity(seed):
    rankings, targets = random_pairs(100, seed=seed)
    m = score_rankings(rankings, targets, (1, 5, 10))
    assert 0 <= m["HR@1"] <= m["HR@5"] <= m["HR@10"] <= 1
    assert m["NDCG@5"] <= m["NDCG@10"]
    assert m["NDCG@5"] <= m["HR@5"] and m["NDCG@10"] <= m["HR@10"]


@pytest.mark.parametrize("k", [1, 5, 10])
def test_uniform_random_ranking_hit_rate(k):
    v, n = 50, 10_000
    rng = np.random.default_rng(k)
    hits = sum(hit(list(rng.permutation(v)), int(rng.integers(v)), k) for _ in range(n))
    p = k / v
    assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_empty_input_errors():
    with pytest.raises(ValueError):
        score_rankings([], [])


def test_report_text_round_trip():
    report = EvalReport("test", {"HR@1": 0.01234567, "HR@5": 0.0397, "NDCG@10": 0.0507}, 12, 1)
    text = report.to_text()
    assert "HR@5=0.0397" in text and "NDCG@10=0.0507" in text and "HR@1=0.0123" in text
    back = EvalReport.from_text(text)
    assert back.phase == "test" and back.num_users_evaluated == 12 and back.num_users_excluded == 1
    assert back["HR@5"] == 0.0397


# evaluate()


class OracleModel:
    """Decoder that always spells the held-out item of whichever user it is given."""

    def __init__(self, tokenizer, answers):
        self.config = type("C", (), {"vocab_size": len(tokenizer.vocab)})()
        self.paths = {tokenizer.user_index[u]: [*tokenizer.item_token_ids(i), END_ID] for u, i in answers.items()}
        self.path = None

    def encode_batch(self, batch):
        user = int(batch.user_idx[0][batch.user_idx[0] >= 0][0])
        self.path = self.paths[user]
        return nx.Tensor(np.zeros((1, batch.ids.shape[1], 4)))

    def decode(self, prefix_ids, enc, pad_mask):
        n, t = prefix_ids.shape
        logits = np.zeros((n, t, self.config.vocab_size))
        for pos, tok in enumerate(self.path[:t]):
            logits[:, pos, tok] = 20.0
        return nx.Tensor(logits)


@pytest.fixture(scope="module")
def fixture_data():
    seqs = core_filter(build_sequences(cyclic_interactions(50, 30, 8, noise=0.3, seed=2)))
    return [leave_one_out(s) for s in seqs], Tokenizer.from_sequences(seqs)


@pytest.mark.parametrize("phase", ["validation", "test"])
def test_oracle_model_scores_perfectly(fixture_data, phase):
    splits, tok = fixture_data
    answers = {s.user_id: (s.val_item if phase == "validation" else s.test_item) for s in splits}
    report = evaluate(OracleModel(tok, answers), tok, splits, phase)
    assert all(v == 1.0 for v in report.metrics.values())
    assert report.num_users_evaluated == len(splits)


def random_model(tok, seed=0):
    cfg = GenRecConfig(vocab_size=len(tok.vocab), num_users=tok.num_users, num_items=tok.num_items,
                       d_model=16, num_encoder_layers=1, num_decoder_layers=1, num_heads=2, ffn_dim=32)
    m = GenRecModel(cfg, seed=seed)
    for name, p in m.params.items():
        if name.endswith(".w") or name.startswith("emb."):
            p.data *= 20
    return m


def test_evaluate_matches_brute_force_tally(fixture_data):
    splits, tok = fixture_data
    assert len(splits) == 50
    report = evaluate(random_model(tok), tok, splits, "test")
    users = sorted(report.per_user)
    targets = {s.user_id: s.test_item for s in splits}
    want = brute_force([report.per_user[u].items for u in users], [targets[u] for u in users], (1, 5, 10))
    for name, value in want.items():
        assert report[name] == pytest.approx(value, abs=1e-12)


def test_evaluate_is_deterministic(fixture_data):
    splits, tok = fixture_data
    m = random_model(tok, seed=3)
    assert evaluate(m, tok, splits, "validation").to_text() == evaluate(m, tok, splits, "validation").to_text()


def test_exact_mode_agrees_with_full_beam(fixture_data):
    splits, tok = fixture_data
    m = random_model(tok, seed=5)
    beam = evaluate(m, tok, splits[:10], "test", beam_width=tok.num_items)
    exact = evaluate(m, tok, splits[:10], "test", exact=True)
    assert beam.metrics == exact.metrics


def test_narrow_beam_warns_and_truncates(fixture_data, caplog):
    splits, tok = fixture_data
    m = random_model(tok, seed=1)
    with caplog.at_level(logging.WARNING):
        narrow = evaluate(m, tok, splits, "test", beam_width=3)
    assert "beam_width 3" in caplog.text
    assert narrow["HR@5"] == narrow["HR@10"]
    assert all(len(r) <= 3 for r in narrow.per_user.values())


def test_unformable_users_are_counted(fixture_data):
    splits, tok = fixture_data
    bad = SplitSequence("ghost", ("nope",), "i1", "i2")
    report = evaluate(random_model(tok), tok, [*splits[:5], bad], "test")
    assert (report.num_users_evaluated, report.num_users_excluded) == (5, 1)


def test_empty_eval_set_errors(fixture_data):
    _, tok = fixture_data
    with pytest.raises(ValueError, match="empty"):
        evaluate(random_model(tok), tok, [], "test")

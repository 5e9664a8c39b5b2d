import numpy as np
import pytest

from genrec import checkpoint
from genrec.cli import format_recommendation, load_workdir, main
from genrec.config import load_config, parse_config
from genrec.decoding import RankedPrediction
from genrec.evaluation import evaluate
from genrec.model import GenRecConfig, GenRecModel
from genrec.synthetic import cyclic_interactions, to_tsv

TINY = """\
d_model=16
num_encoder_layers=1
num_decoder_layers=1
num_heads=2
ffn_dim=32
pretrain_epochs=2
finetune_epochs={finetune}
batch_size=16
lr=1e-3
beam_width=10
"""


@pytest.fixture
def workspace(tmp_path):
    raw = tmp_path / "raw.tsv"
    rows = cyclic_interactions(40, 30, 8, noise=0.1, seed=1)
    # one user with only four interactions; filtered out by the 5-core rule
    short = "".join(f"short\ti{k}\t{k}\n" for k in range(4))
    raw.write_text(to_tsv(rows) + short)
    conf = tmp_path / "run.conf"
    conf.write_text(f"raw_path={raw}\nworkdir={tmp_path / 'work'}\n" + TINY.format(finetune=2))
    return tmp_path, str(conf)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_preprocess_is_deterministic_and_filters(workspace, capsys):
    tmp, conf = workspace
    code, out, _ = run_cli(capsys, "preprocess", "--config", conf)
    assert code == 0 and out.strip().splitlines()[-1].startswith("status=ok command=preprocess")
    first = (tmp / "work" / "splits.tsv").read_bytes()
    run_cli(capsys, "preprocess", "--config", conf)
    assert (tmp / "work" / "splits.tsv").read_bytes() == first
    users = [line.split("\t")[0] for line in first.decode().splitlines()]
    assert "short" not in users and len(users) == 40


def test_stats_report_matches_tally(workspace, capsys):
    tmp, conf = workspace
    run_cli(capsys, "preprocess", "--config", conf)
    splits, _ = load_workdir(load_config(conf))
    items = [i for s in splits for i in s.items]
    stats = dict(line.split("\t") for line in (tmp / "work" / "stats.txt").read_text().splitlines())
    assert int(stats["# Users"]) == len(splits)
    assert int(stats["# Items"]) == len(set(items))
    assert int(stats["# Interactions"]) == len(items)
    assert stats["Avg. Items / User"] == f"{len(items) / len(splits):.1f}"


def test_missing_split_file_is_reported(workspace, capsys):
    _, conf = workspace
    code, out, err = run_cli(capsys, "pretrain", "--config", conf)
    assert code == 1
    assert err.strip().splitlines()[-1].startswith("status=error message=missing split file")


def test_missing_raw_file(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text(f"raw_path={tmp_path / 'nope.tsv'}\nworkdir={tmp_path}\n")
    code, _, err = run_cli(capsys, "preprocess", "--config", str(conf))
    assert code == 1 and "nope.tsv" in err


def test_bad_config_key(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("learning_rate=1\n")
    code, _, err = run_cli(capsys, "preprocess", "--config", str(conf))
    assert code == 1 and "learning_rate" in err


def test_config_parsing_and_overrides():
    cfg = parse_config("# comment\nseed = 4  # trailing\nlr=2e-3\n")
    assert cfg.seed == 4 and cfg.lr == 2e-3 and cfg.finetune_epochs == 25
    assert cfg.override(seed=9, workdir=None).seed == 9
    with pytest.raises(ValueError, match="seed"):
        parse_config("seed=abc")


@pytest.fixture
def trained(workspace, capsys):
    tmp, conf = workspace
    for argv in (["preprocess"], ["pretrain"], ["finetune", "--from", str(tmp / "work" / "pretrain.ckpt")]):
        code, _, err = run_cli(capsys, *argv, "--config", conf)
        assert code == 0, err
    return tmp, conf


def test_pipeline_is_byte_reproducible(trained, capsys):
    tmp, conf = trained
    work = tmp / "work"
    first = {name: (work / name).read_bytes() for name in ("pretrain.ckpt", "finetune.ckpt")}
    run_cli(capsys, "evaluate", "--config", conf)
    report = (work / "report_test.txt").read_bytes()
    for argv in (["pretrain"], ["finetune", "--from", str(work / "pretrain.ckpt")], ["evaluate"]):
        run_cli(capsys, *argv, "--config", conf)
    assert {name: (work / name).read_bytes() for name in first} == first
    assert (work / "report_test.txt").read_bytes() == report


def test_report_format(trained, capsys):
    tmp, conf = trained
    code, out, _ = run_cli(capsys, "evaluate", "--config", conf, "--phase", "validation")
    assert code == 0
    lines = (tmp / "work" / "report_validation.txt").read_text().splitlines()
    keys = [line.split("=")[0] for line in lines]
    assert keys == ["phase", "HR@1", "HR@5", "HR@10", "NDCG@5", "NDCG@10",
                    "num_users_evaluated", "num_users_excluded"]
    for line in lines[1:6]:
        value = line.split("=")[1]
        assert len(value.split(".")[1]) == 4
    assert out.strip().splitlines()[-1].startswith("status=ok command=evaluate phase=validation")


def test_cli_report_matches_in_memory_evaluation(trained, capsys):
    tmp, conf = trained
    cfg = load_config(conf)
    splits, tok = load_workdir(cfg)
    model, _ = checkpoint.load(tmp / "work" / "finetune.ckpt")
    run_cli(capsys, "evaluate", "--config", conf)
    expected = evaluate(model, tok, splits, "test", beam_width=cfg.beam_width, k_list=cfg.ks).to_text()
    assert (tmp / "work" / "report_test.txt").read_text() == expected


def test_finetune_manifest_and_scratch_variant(trained, capsys):
    tmp, conf = trained
    work = tmp / "work"
    _, manifest = checkpoint.load(work / "finetune.ckpt")
    assert manifest["stage"] == "finetune" and manifest["epoch"] == "2"
    code, out, _ = run_cli(capsys, "finetune", "--config", conf)
    assert code == 0 and "pretrained=False" in out
    assert (work / "finetune_scratch.ckpt").read_bytes() != (work / "finetune.ckpt").read_bytes()


def test_default_finetune_epochs_recorded(tmp_path):
    cfg = parse_config("")
    assert cfg.stage("finetune").epochs == 25
    model = GenRecModel(GenRecConfig(vocab_size=20, num_users=2, num_items=3, d_model=8, num_heads=2,
                                     ffn_dim=8, num_encoder_layers=1, num_decoder_layers=1))
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, model, stage="finetune", epoch=cfg.stage("finetune").epochs, vocab_hash="abc")
    assert checkpoint.load(path)[1]["epoch"] == "25"


def test_recommend_output(trained, capsys):
    tmp, conf = trained
    splits, _ = load_workdir(load_config(conf))
    user = splits[0].user_id
    code, out, _ = run_cli(capsys, "recommend", "--config", conf, "--user", user)
    assert code == 0
    line, status = out.strip().splitlines()[-2:]
    assert status == f"status=ok command=recommend user={user} count=10"
    uid, ranked = line.split("\t")
    assert uid == user
    entries = [e.rsplit(":", 1) for e in ranked.split(",")]
    assert len(entries) == 10
    scores = [float(s) for _, s in entries]
    assert scores == sorted(scores, reverse=True)
    _, again, _ = run_cli(capsys, "recommend", "--config", conf, "--user", user)
    assert again == out


def test_recommend_unknown_user(trained, capsys):
    _, conf = trained
    code, _, err = run_cli(capsys, "recommend", "--config", conf, "--user", "nobody")
    assert code == 1 and "nobody" in err.strip().splitlines()[-1]


def test_format_recommendation_golden():
    ranked = RankedPrediction((("i3", -0.5), ("i10", -1.25)))
    assert format_recommendation("u7", ranked) == "u7\ti3:-0.500000,i10:-1.250000"


# checkpoints


def small_model(seed=0):
    cfg = GenRecConfig(vocab_size=30, num_users=4, num_items=6, d_model=8, num_heads=2, ffn_dim=16,
                       num_encoder_layers=1, num_decoder_layers=2, max_length=32)
    return GenRecModel(cfg, seed=seed)


def test_save_load_save_is_byte_identical(tmp_path):
    blob = checkpoint.dumps(small_model(), stage="pretrain", epoch=3, vocab_hash="f00d")
    model, manifest = checkpoint.loads(blob)
    assert checkpoint.dumps(model, **{k: manifest[k] for k in ("stage", "epoch", "vocab_hash")}) == blob
    path = tmp_path / "a.ckpt"
    checkpoint.save(path, model, stage="pretrain", epoch=3, vocab_hash="f00d")
    assert path.read_bytes() == blob


def test_loaded_parameters_match():
    model = small_model(seed=7)
    loaded, _ = checkpoint.loads(checkpoint.dumps(model))
    assert loaded.config == model.config
    for name, p in model.params.items():
        np.testing.assert_array_equal(loaded.params[name].data, p.data)


def test_vocab_hash_mismatch_is_refused(tmp_path):
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, small_model(), vocab_hash="aaaa")
    with pytest.raises(checkpoint.CheckpointError, match="vocabulary"):
        checkpoint.load(path, vocab_hash="bbbb")
    checkpoint.load(path, vocab_hash="aaaa")


def test_truncated_checkpoint_is_rejected():
    blob = checkpoint.dumps(small_model())
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-7])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"no separator here")


def test_finetune_refuses_mismatched_vocab(trained, capsys):
    tmp, conf = trained
    other = tmp / "other.ckpt"
    checkpoint.save(other, small_model(), vocab_hash="deadbeef")
    code, _, err = run_cli(capsys, "finetune", "--config", conf, "--from", str(other))
    assert code == 1 and "status=error" in err

"""
Does pretraining help?
======================

On a noisy synthetic log (20% of items replaced at random) the same model
is finetuned twice: once after masked-item pretraining and once from
scratch. One seed of the desk configuration; takes about a minute.
"""
from genrec import Tokenizer, build_sequences, core_filter, evaluate, leave_one_out, run_stage
from genrec.config import load_config
from genrec.model import GenRecModel
from genrec.synthetic import cyclic_interactions

cfg = load_config("configs/desk.conf")
seqs = core_filter(build_sequences(cyclic_interactions(noise=0.2, seed=0)))
splits = [leave_one_out(s) for s in seqs]
tok = Tokenizer.from_sequences(seqs)

for pretrain in (True, False):
    model = GenRecModel(cfg.model_config(tok), seed=cfg.seed)
    if pretrain:
        run_stage(model, splits, tok, cfg.stage("pretrain"))
    run_stage(model, splits, tok, cfg.stage("finetune"))
    report = evaluate(model, tok, splits, "test", beam_width=cfg.beam_width)
    label = "with pretraining" if pretrain else "from scratch"
    print(f"{label:>17}: " + "  ".join(f"{k}={v:.4f}" for k, v in report.metrics.items()))

"""Run configuration: flat ``key=value`` files with command-line overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .model import GenRecConfig
from .tasks import StageConfig


@dataclass
class RunConfig:
    raw_path: str = "data/interactions.tsv"
    workdir: str = "work"
    min_count: int = 5
    max_length: int = 512
    d_model: int = 64
    num_encoder_layers: int = 2
    num_decoder_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 256
    dropout: float = 0.1
    positions: str = "from_end"
    pos_init: str = "sinusoidal"
    pos_scale: float = 0.1
    pretrain_epochs: int = 20
    finetune_epochs: int = 25
    batch_size: int = 16
    lr: float = 1e-5
    weight_decay: float = 1e-5
    warmup_fraction: float = 0.05
    grad_clip: float = 0.0
    beam_width: int = 20
    k_list: str = "1,5,10"
    seed: int = 0

    @property
    def ks(self):
        return tuple(int(k) for k in self.k_list.split(","))

    @property
    def work(self):
        return Path(self.workdir)

    def model_config(self, tokenizer):
        return GenRecConfig(
            vocab_size=len(tokenizer.vocab), num_users=tokenizer.num_users, num_items=tokenizer.num_items,
            d_model=self.d_model, num_encoder_layers=self.num_encoder_layers,
            num_decoder_layers=self.num_decoder_layers, num_heads=self.num_heads, ffn_dim=self.ffn_dim,
            max_length=self.max_length, dropout=self.dropout, positions=self.positions,
            pos_init=self.pos_init, pos_scale=self.pos_scale)

    def stage(self, name):
        epochs = self.pretrain_epochs if name == "pretrain" else self.finetune_epochs
        # distinct but fixed seeds per stage
        seed = self.seed if name == "pretrain" else self.seed + 1
        return StageConfig(name, epochs, self.batch_size, seed, self.lr, self.weight_decay,
                           self.warmup_fraction, self.grad_clip or None)

    def override(self, **values):
        return dataclasses.replace(self, **{k: v for k, v in values.items() if v is not None})


def _coerce(field_type, key, value):
    conv = {"int": int, "float": float, "str": str}[field_type]
    try:
        return conv(value)
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {value!r} as {field_type}") from None


def parse_config(text):
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ValueError(f"config line {line_no}: expected key=value")
        if key not in types:
            raise ValueError(f"config line {line_no}: unknown key {key!r}")
        values[key] = _coerce(types[key], key, value)
    return RunConfig(**values)


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))

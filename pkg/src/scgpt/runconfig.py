"""Key=value run configuration shared by the command-line stages.

A config file sets dotted keys, one per line; blank lines and ``#``
comments are skipped:

    vocab = out/vocab.bpe
    model.n_layers = 2
    model.d_model = 64
    train.start_lr = 5e-5
    train.batch_size = 8
    decode.n_candidates = 5

``vocab`` names the trained tokenizer file, resolved relative to the
config file itself so a run directory can move as a unit.  The seed is
deliberately not a config key; it comes from the command line so one
config can drive many seeded runs.
"""

import os
from dataclasses import dataclass, field

from .decoding import DecodeConfig
from .errors import ParseError
from .model import ModelConfig
from .training import TrainConfig, default_train_config

_MODEL_KEYS = {
    "n_layers": int,
    "n_heads": int,
    "d_model": int,
    "d_ff": int,
    "max_context": int,
    "dropout": float,
}
_TRAIN_KEYS = {
    "start_lr": float,
    "weight_decay": float,
    "batch_size": int,
    "max_epochs": int,
    "early_stop_patience": int,
    "val_fraction": float,
    "grad_clip": float,
}
_DECODE_KEYS = {
    "n_candidates": int,
    "max_new_tokens": int,
    "top_k": int,
    "temperature": float,
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed config: overrides layered onto each stage's defaults."""

    vocab: str | None = None
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    decode: dict = field(default_factory=dict)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, **self.model)

    def train_config(self, stage: str, seed: int = 0) -> TrainConfig:
        return default_train_config(stage, seed=seed, **self.train)

    def decode_config(self, seed: int = 0, **overrides) -> DecodeConfig:
        kw = dict(self.decode, seed=seed)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return DecodeConfig(**kw)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    vocab = None
    sections = {"model": {}, "train": {}, "decode": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ParseError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if key == "vocab":
            vocab = value
            continue
        section, _, name = key.partition(".")
        types = {"model": _MODEL_KEYS, "train": _TRAIN_KEYS, "decode": _DECODE_KEYS}.get(section)
        if types is None or name not in types:
            raise ParseError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            sections[section][name] = types[name](value)
        except ValueError:
            raise ParseError(
                f"{source}:{lineno}: {key} needs a {types[name].__name__}, got {value!r}"
            ) from None
    return RunConfig(vocab=vocab, **sections)


def load_config(path) -> RunConfig:
    """Parse a config file; a relative vocab path is anchored at the file."""
    with open(path, encoding="utf-8") as fh:
        rc = parse_config(fh.read(), source=str(path))
    if rc.vocab is not None and not os.path.isabs(rc.vocab):
        anchored = os.path.join(os.path.dirname(os.path.abspath(path)), rc.vocab)
        rc = RunConfig(os.path.normpath(anchored), rc.model, rc.train, rc.decode)
    return rc

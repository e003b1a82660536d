"""Experiment configuration: a nested YAML file validated before any compute.

Scalar values can be overridden by CLI flags; the file itself is copied
verbatim into the run directory so every run is self-describing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .encoder import CnnConfig, EncoderConfig
from .errors import ConfigError
from .model import ModelConfig
from .prosody import DEFAULT_CONTEXT_S, DEFAULT_MAX_FRAMES
from .training import EmbeddingSpec, TrainConfig


@dataclass
class DataConfig:
    train_trees: list = field(default_factory=list)
    dev_trees: str = ""
    test_trees: str = ""
    alignments: str = ""
    frame_tracks: str = ""  # directory of <speaker>.csv files
    vector_store: str = ""
    word_vectors: str = ""
    features_cache: str = ""
    speechify: bool = False


@dataclass
class FeatureConfig:
    context_s: float = DEFAULT_CONTEXT_S
    max_frames: int = DEFAULT_MAX_FRAMES


@dataclass
class EvalConfig:
    delete_punctuation: bool = False
    n_resamples: int = 10000


@dataclass
class ExperimentConfig:
    data: DataConfig
    model: ModelConfig
    embedding: EmbeddingSpec
    features: FeatureConfig
    train: TrainConfig
    eval: EvalConfig
    output_dir: str
    source_path: str = ""
    source_text: str = ""

    def uses_prosody(self):
        return self.model.encoder.use_prosody


def _section(raw, name):
    value = raw.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return value


def _build(cls, section, name, **overrides):
    known = {f: section[f] for f in section}
    known.update(overrides)
    try:
        return cls(**known)
    except TypeError as exc:
        raise ConfigError(f"config section {name!r}: {exc}") from None


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    data_raw = _section(raw, "data")
    train_trees = data_raw.get("train_trees", [])
    if isinstance(train_trees, str):
        train_trees = [train_trees]
    data_raw = dict(data_raw, train_trees=list(train_trees))
    data = _build(DataConfig, data_raw, "data")

    model_raw = _section(raw, "model")
    encoder = _build(EncoderConfig, _section(model_raw, "encoder"), "model.encoder")
    cnn = _build(CnnConfig, _section(model_raw, "cnn"), "model.cnn")
    model = ModelConfig(
        encoder=encoder, cnn=cnn, span_hidden=int(model_raw.get("span_hidden", 256))
    )
    emb_raw = dict(_section(model_raw, "embedding"))
    emb_raw.setdefault("store_path", data.vector_store)
    emb_raw.setdefault("vectors_path", data.word_vectors)
    embedding = _build(EmbeddingSpec, emb_raw, "model.embedding")

    features = _build(FeatureConfig, _section(raw, "features"), "features")
    train_raw = _section(raw, "train")
    for key in ("seeds", "corpus_weights"):
        if key in train_raw:
            train_raw[key] = tuple(train_raw[key])
    train = _build(TrainConfig, train_raw, "train")
    eval_cfg = _build(EvalConfig, _section(raw, "eval"), "eval")

    output_dir = raw.get("output_dir", "")
    if not output_dir:
        raise ConfigError(f"{path}: output_dir is required")

    cfg = ExperimentConfig(
        data=data,
        model=model,
        embedding=embedding,
        features=features,
        train=train,
        eval=eval_cfg,
        output_dir=output_dir,
        source_path=str(path),
        source_text=text,
    )
    _validate(cfg)
    return cfg


def _validate(cfg):
    if len(cfg.data.train_trees) not in (0, len(cfg.train.corpus_weights)):
        raise ConfigError(
            f"{len(cfg.data.train_trees)} train tree files but "
            f"{len(cfg.train.corpus_weights)} corpus weights"
        )
    if cfg.embedding.mode == "frozen" and not cfg.embedding.store_path:
        raise ConfigError("embedding mode 'frozen' needs data.vector_store")
    if cfg.embedding.mode == "finetuned" and not cfg.embedding.vectors_path:
        raise ConfigError("embedding mode 'finetuned' needs data.word_vectors")


def validate_paths(cfg, need=("train", "dev")):
    """Check referenced input files exist before any compute starts."""
    checks = []
    if "train" in need:
        checks += [("data.train_trees", p) for p in cfg.data.train_trees]
        if not cfg.data.train_trees:
            raise ConfigError("data.train_trees is required for this command")
    if "dev" in need and cfg.data.dev_trees:
        checks.append(("data.dev_trees", cfg.data.dev_trees))
    if "test" in need and cfg.data.test_trees:
        checks.append(("data.test_trees", cfg.data.test_trees))
    if cfg.data.alignments:
        checks.append(("data.alignments", cfg.data.alignments))
    if cfg.data.frame_tracks:
        checks.append(("data.frame_tracks", cfg.data.frame_tracks))
    if cfg.data.vector_store:
        checks.append(("data.vector_store", cfg.data.vector_store))
    if cfg.data.word_vectors:
        checks.append(("data.word_vectors", cfg.data.word_vectors))
    for name, path in checks:
        if not os.path.exists(path):
            raise ConfigError(f"{name}: path does not exist: {path}")


def write_snapshot(cfg, run_dir):
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(cfg.source_text)

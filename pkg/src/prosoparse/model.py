"""Full parser model: embedding provider + encoder + span scorer.

Also owns checkpoint I/O (named parameters against an architecture
signature) and the weight-surgery helpers used to relate a text+prosody
model to its text-only twin: zeroing the prosody pathway of the wider
model reproduces the narrower model's span scores exactly, which doubles
as a correctness check and as a warm-start path between the two variants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .chart import SpanScorer, cky_decode, margin_loss, score_spans
from .embeddings import EmbeddingProvider, WordVocab
from .encoder import CnnConfig, Encoder, EncoderConfig
from .errors import AlignmentError, CheckpointError, DataError
from .tensorfile import read_tensors, write_tensors
from .treebank import LabelVocab

CHECKPOINT_KIND = "prosoparse-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig
    cnn: CnnConfig
    span_hidden: int = 256

    def to_dict(self):
        enc = self.encoder
        return {
            "encoder": {
                "layers": enc.layers,
                "heads": enc.heads,
                "d_content": enc.d_content,
                "d_position": enc.d_position,
                "d_prosody": enc.d_prosody,
                "d_ff": enc.d_ff,
                "dropout": enc.dropout,
                "max_len": enc.max_len,
            },
            "cnn": {
                "widths": list(self.cnn.widths),
                "filters_per_width": self.cnn.filters_per_width,
            },
            "span_hidden": self.span_hidden,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            encoder=EncoderConfig(**d["encoder"]),
            cnn=CnnConfig(
                widths=tuple(d["cnn"]["widths"]),
                filters_per_width=d["cnn"]["filters_per_width"],
            ),
            span_hidden=d["span_hidden"],
        )


class ParserModel:
    def __init__(self, config, provider, label_vocab, seed=0, dtype=np.float32):
        self.config = config
        self.provider = provider
        self.label_vocab = label_vocab
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(
            config.encoder, config.cnn, provider.dim, rng=rng, dtype=dtype
        )
        self.scorer = SpanScorer(
            config.encoder.d_total,
            len(label_vocab),
            hidden=config.span_hidden,
            rng=rng,
            dtype=dtype,
        )

    @property
    def uses_prosody(self):
        return self.config.encoder.use_prosody

    def parameters(self):
        yield from self.provider.parameters()
        yield from self.encoder.parameters()
        yield from self.scorer.parameters()

    def param_dict(self):
        return {p.name: p for p in self.parameters()}

    # ------------------------------------------------------------------

    def score_sentence(self, tape, sent):
        e = self.provider.embed(tape, sent.sentence_id, sent.words)
        prosody = sent.prosody if self.uses_prosody else None
        if self.uses_prosody:
            if prosody is None:
                raise DataError(
                    f"sentence {sent.sentence_id!r} has no prosodic features but "
                    "the model expects them"
                )
            if len(prosody.patches) != len(sent.tokens):
                raise AlignmentError(
                    f"sentence {sent.sentence_id!r}: prosodic features cover "
                    f"{len(prosody.patches)} words for {len(sent.tokens)} tokens"
                )
        encoded = self.encoder.encode(tape, e, prosody)
        return score_spans(tape, encoded, self.scorer, self.label_vocab)

    def parse_sentence(self, sent):
        tape = ag.Tape(train=False, dtype=self.dtype)
        scores = self.score_sentence(tape, sent)
        return cky_decode(scores, sent.tokens)

    def sentence_loss(self, tape, sent):
        scores = self.score_sentence(tape, sent)
        return margin_loss(scores, sent.gold_spans)

    # ------------------------------------------------------------------

    def save(self, path, extra_meta=None):
        meta = {
            "kind": CHECKPOINT_KIND,
            "version": CHECKPOINT_VERSION,
            "model": self.config.to_dict(),
            "labels": self.label_vocab.symbols,
            "embedding": {
                "mode": self.provider.mode,
                "dim": self.provider.dim,
                "words": self.provider.vocab.words if self.provider.vocab else None,
            },
        }
        if extra_meta:
            meta.update(extra_meta)
        write_tensors(path, {p.name: p.value for p in self.parameters()}, meta)

    @classmethod
    def load(cls, path, store=None, dtype=np.float32):
        meta, tensors = read_tensors(path)
        if meta.get("kind") != CHECKPOINT_KIND:
            raise CheckpointError(f"{path}: not a parser checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version")
        config = ModelConfig.from_dict(meta["model"])
        emb = meta["embedding"]
        if emb["mode"] == "frozen":
            if store is None:
                raise CheckpointError(
                    f"{path}: frozen-embedding checkpoint needs a vector store"
                )
            if store.dim != emb["dim"]:
                raise CheckpointError(
                    f"{path}: store dim {store.dim} != checkpoint dim {emb['dim']}"
                )
            provider = EmbeddingProvider.frozen(store)
        else:
            vocab = WordVocab(emb["words"][1:])  # index 0 is UNK already
            table = ag.Parameter(
                "embeddings.table",
                np.zeros((len(vocab), emb["dim"]), dtype=dtype),
            )
            provider = EmbeddingProvider(
                emb["mode"], emb["dim"], vocab=vocab, table=table
            )
        label_vocab = LabelVocab(meta["labels"][1:])
        model = cls(config, provider, label_vocab, seed=0, dtype=dtype)
        load_parameters(model, tensors, source=str(path))
        return model, meta


def load_parameters(model, tensors, source="checkpoint"):
    """Overwrite model parameters from named tensors; shapes must agree."""
    params = model.param_dict()
    mismatches = []
    missing = [name for name in params if name not in tensors]
    extra = [name for name in tensors if name not in params]
    for name, param in params.items():
        if name in tensors and tensors[name].shape != param.value.shape:
            mismatches.append(
                f"{name}: checkpoint {tensors[name].shape} vs model {param.value.shape}"
            )
    if missing or extra or mismatches:
        raise CheckpointError(
            f"{source}: architecture mismatch; "
            f"missing={missing} extra={extra} shape_diffs={mismatches}"
        )
    for name, param in params.items():
        param.value[...] = tensors[name].astype(param.value.dtype)


def clone_model(model, dtype=None, seed=0):
    """Structural copy of a model, optionally at a different precision."""
    dtype = np.dtype(dtype or model.dtype)
    provider = model.provider
    if provider.trainable:
        new_provider = EmbeddingProvider(
            provider.mode,
            provider.dim,
            vocab=provider.vocab,
            table=ag.Parameter(provider.table.name, provider.table.value.astype(dtype)),
        )
    else:
        new_provider = provider
    twin = ParserModel(model.config, new_provider, model.label_vocab, seed=seed, dtype=dtype)
    src = {p.name: p for p in model.parameters()}
    for p in twin.parameters():
        p.value[...] = src[p.name].value.astype(dtype)
    return twin


# ----------------------------------------------------------------------
# prosody-pathway surgery


def _text_width(config):
    return config.encoder.d_content + config.encoder.d_position


def prosody_pathway(model):
    """(parameter, column/row slice) pairs that inject or carry prosody.

    Zeroing every listed slice makes the model's span scores equal those of
    the text-only twin sharing its remaining weights.
    """
    if not model.uses_prosody:
        return
    d_text = _text_width(model.config)
    enc = model.encoder
    yield enc.w_prosody, np.s_[:]
    yield enc.b_prosody, np.s_[:]
    for layer in enc.layers:
        pros_attn = layer.attn[-1]
        for p in (pros_attn.wq, pros_attn.wk, pros_attn.wv, pros_attn.wo):
            yield p, np.s_[:]
        for norm in (layer.norm1[-1], layer.norm2[-1]):
            yield norm.gain, np.s_[:]
            yield norm.bias, np.s_[:]
        yield layer.ff_w1, np.s_[d_text:, :]
        yield layer.ff_w2, np.s_[:, d_text:]
        yield layer.ff_b2, np.s_[d_text:]
    start, stop = enc.sentinels[-1]
    yield start, np.s_[:]
    yield stop, np.s_[:]
    yield model.scorer.w1, np.s_[d_text:, :]


def zero_prosody_pathway(model):
    for param, sl in prosody_pathway(model):
        param.value[sl] = 0


def build_text_twin(model, seed=0):
    """Text-only model carrying the text-stream weights of a prosody model."""
    cfg = model.config
    text_cfg = ModelConfig(
        encoder=EncoderConfig(
            layers=cfg.encoder.layers,
            heads=cfg.encoder.heads,
            d_content=cfg.encoder.d_content,
            d_position=cfg.encoder.d_position,
            d_prosody=0,
            d_ff=cfg.encoder.d_ff,
            dropout=cfg.encoder.dropout,
            max_len=cfg.encoder.max_len,
        ),
        cnn=cfg.cnn,
        span_hidden=cfg.span_hidden,
    )
    twin = ParserModel(
        text_cfg, model.provider, model.label_vocab, seed=seed, dtype=model.dtype
    )
    d_text = _text_width(cfg)
    src = {p.name: p.value for p in model.parameters()}
    for p in twin.parameters():
        if p.name not in src:
            continue
        s = src[p.name]
        if s.shape == p.value.shape:
            p.value[...] = s
        elif p.name.endswith("ff.w1") or p.name == "span.w1":
            p.value[...] = s[:d_text, :]
        elif p.name.endswith("ff.w2"):
            p.value[...] = s[:, :d_text]
        elif p.name.endswith("ff.b2"):
            p.value[...] = s[:d_text]
        else:
            raise DataError(f"cannot transplant parameter {p.name}: {s.shape} -> {p.value.shape}")
    return twin

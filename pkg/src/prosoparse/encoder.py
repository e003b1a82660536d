"""Factored self-attention encoder over lexical, positional and prosodic streams.

Each word contributes three input streams: a projected word embedding, a
learned position embedding, and (optionally) a projection of its prosodic
features, i.e. pause/duration values plus the CNN summary of its energy/f0
frame patch.  Attention keeps the streams factored: every layer learns
separate query/key/value maps per stream, attention logits are the sum of
the per-stream dot products, and values are aggregated per stream and
re-projected within the stream.  Streams only mix inside the position-wise
feed-forward block.  Layer norm is applied per stream so that a model whose
prosody pathway is zeroed is numerically identical to a narrower text-only
model with the same remaining weights.

Word outputs are split into forward/backward halves per stream to build
fencepost (word boundary) vectors, with learned sentinel halves at the
sentence edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import ConfigError, DataError, LengthError
from .prosody import N_PAUSE_BUCKETS

PAUSE_EMB_DIM = 4
N_DURATION_SCALARS = 2  # duration_norm, log1p(duration_raw)
PHI_DIM = 2 * PAUSE_EMB_DIM + N_DURATION_SCALARS
CNN_IN_CHANNELS = 3  # energy, f0, word-interior mask


@dataclass(frozen=True)
class CnnConfig:
    widths: tuple = (3, 5, 10)
    filters_per_width: int = 32

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(self.widths))
        if len(set(self.widths)) != len(self.widths) or any(w < 1 for w in self.widths):
            raise ConfigError(f"cnn widths must be distinct and >= 1: {self.widths}")
        if self.filters_per_width < 1:
            raise ConfigError("filters_per_width must be >= 1")

    @property
    def output_dim(self):
        return len(self.widths) * self.filters_per_width


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 4
    heads: int = 4
    d_content: int = 256
    d_position: int = 64
    d_prosody: int = 64  # 0 disables the prosody stream (text-only model)
    d_ff: int = 512
    dropout: float = 0.2
    max_len: int = 300

    def __post_init__(self):
        for name in ("d_content", "d_position"):
            self._check_stream(name, getattr(self, name), required=True)
        self._check_stream("d_prosody", self.d_prosody, required=False)
        if self.layers < 1 or self.heads < 1 or self.d_ff < 1:
            raise ConfigError("layers, heads and d_ff must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must be in [0, 1): {self.dropout}")

    def _check_stream(self, name, width, required):
        if width == 0 and not required:
            return
        if width < 1:
            raise ConfigError(f"{name} must be positive, got {width}")
        if width % self.heads != 0:
            raise ConfigError(f"{name}={width} not divisible by heads={self.heads}")
        if width % 2 != 0:
            raise ConfigError(f"{name}={width} must be even for fencepost splitting")

    @property
    def use_prosody(self):
        return self.d_prosody > 0

    @property
    def stream_dims(self):
        dims = [self.d_content, self.d_position]
        if self.use_prosody:
            dims.append(self.d_prosody)
        return dims

    @property
    def d_total(self):
        return sum(self.stream_dims)


@dataclass
class ProsodyInputs:
    """Per-word prosodic inputs for one sentence."""

    pause_before: np.ndarray  # [T] bucket ids
    pause_after: np.ndarray  # [T] bucket ids
    duration_scalars: np.ndarray  # [T, 2]: duration_norm, log1p(duration_raw)
    patches: list  # [T] FramePatch

    def __post_init__(self):
        T = len(self.patches)
        if not (
            len(self.pause_before) == len(self.pause_after) == T
            and self.duration_scalars.shape == (T, N_DURATION_SCALARS)
        ):
            raise DataError("prosody inputs disagree on sentence length")


@dataclass
class EncodedSentence:
    fenceposts: ag.Var  # [(T+1) x d_total]
    n_words: int


def _xavier(rng, fan_in, fan_out, dtype):
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return (rng.standard_normal((fan_in, fan_out)) * scale).astype(dtype)


def _zeros(*shape, dtype):
    return np.zeros(shape, dtype=dtype)


def _ones(*shape, dtype):
    return np.ones(shape, dtype=dtype)


class _StreamAttention:
    def __init__(self, name, dim, rng, dtype):
        self.dim = dim
        self.wq = ag.Parameter(f"{name}.wq", _xavier(rng, dim, dim, dtype))
        self.wk = ag.Parameter(f"{name}.wk", _xavier(rng, dim, dim, dtype))
        self.wv = ag.Parameter(f"{name}.wv", _xavier(rng, dim, dim, dtype))
        self.wo = ag.Parameter(f"{name}.wo", _xavier(rng, dim, dim, dtype))

    def parameters(self):
        yield from (self.wq, self.wk, self.wv, self.wo)


class _StreamNorm:
    def __init__(self, name, dim, dtype):
        self.gain = ag.Parameter(f"{name}.gain", _ones(dim, dtype=dtype))
        self.bias = ag.Parameter(f"{name}.bias", _zeros(dim, dtype=dtype))

    def parameters(self):
        yield from (self.gain, self.bias)

    def __call__(self, tape, x):
        normed = ag.layer_norm(x)
        return ag.add_bias(ag.mul(normed, tape.watch(self.gain)), tape.watch(self.bias))


class _Layer:
    def __init__(self, name, config, rng, dtype):
        dims = config.stream_dims
        names = _stream_names(config)
        self.attn = [
            _StreamAttention(f"{name}.attn.{s}", d, rng, dtype)
            for s, d in zip(names, dims)
        ]
        self.norm1 = [_StreamNorm(f"{name}.norm1.{s}", d, dtype) for s, d in zip(names, dims)]
        self.norm2 = [_StreamNorm(f"{name}.norm2.{s}", d, dtype) for s, d in zip(names, dims)]
        d_total = config.d_total
        self.ff_w1 = ag.Parameter(f"{name}.ff.w1", _xavier(rng, d_total, config.d_ff, dtype))
        self.ff_b1 = ag.Parameter(f"{name}.ff.b1", _zeros(config.d_ff, dtype=dtype))
        self.ff_w2 = ag.Parameter(f"{name}.ff.w2", _xavier(rng, config.d_ff, d_total, dtype))
        self.ff_b2 = ag.Parameter(f"{name}.ff.b2", _zeros(d_total, dtype=dtype))

    def parameters(self):
        for group in (*self.attn, *self.norm1, *self.norm2):
            yield from group.parameters()
        yield from (self.ff_w1, self.ff_b1, self.ff_w2, self.ff_b2)


def _stream_names(config):
    return ("content", "position", "prosody")[: 2 + int(config.use_prosody)]


class Encoder:
    """Parameters and forward pass from input features to fencepost vectors."""

    def __init__(self, config, cnn_config, embed_dim, rng=None, dtype=np.float32):
        self.config = config
        self.cnn_config = cnn_config
        self.embed_dim = embed_dim
        rng = rng or np.random.default_rng(0)
        dt = np.dtype(dtype)

        self.w_content = ag.Parameter(
            "encoder.input.content.w", _xavier(rng, embed_dim, config.d_content, dt)
        )
        self.b_content = ag.Parameter(
            "encoder.input.content.b", _zeros(config.d_content, dtype=dt)
        )
        self.pos_table = ag.Parameter(
            "encoder.positions",
            (rng.standard_normal((config.max_len, config.d_position))
             / np.sqrt(config.d_position)).astype(dt),
        )

        if config.use_prosody:
            self.pause_before_table = ag.Parameter(
                "encoder.pause_before",
                (rng.standard_normal((N_PAUSE_BUCKETS, PAUSE_EMB_DIM)) * 0.1).astype(dt),
            )
            self.pause_after_table = ag.Parameter(
                "encoder.pause_after",
                (rng.standard_normal((N_PAUSE_BUCKETS, PAUSE_EMB_DIM)) * 0.1).astype(dt),
            )
            self.cnn_filters = []
            for w in cnn_config.widths:
                wmat = ag.Parameter(
                    f"encoder.cnn.w{w}.filters",
                    (rng.standard_normal((w, CNN_IN_CHANNELS, cnn_config.filters_per_width))
                     * np.sqrt(2.0 / (w * CNN_IN_CHANNELS))).astype(dt),
                )
                bias = ag.Parameter(
                    f"encoder.cnn.w{w}.bias",
                    _zeros(cnn_config.filters_per_width, dtype=dt),
                )
                self.cnn_filters.append((wmat, bias))
            pros_in = PHI_DIM + cnn_config.output_dim
            self.w_prosody = ag.Parameter(
                "encoder.input.prosody.w", _xavier(rng, pros_in, config.d_prosody, dt)
            )
            self.b_prosody = ag.Parameter(
                "encoder.input.prosody.b", _zeros(config.d_prosody, dtype=dt)
            )

        self.layers = [
            _Layer(f"encoder.layer{i}", config, rng, dt) for i in range(config.layers)
        ]

        self.sentinels = []
        for name, dim in zip(_stream_names(config), config.stream_dims):
            start = ag.Parameter(
                f"encoder.sentinel.{name}.start",
                (rng.standard_normal((1, dim // 2)) * 0.1).astype(dt),
            )
            stop = ag.Parameter(
                f"encoder.sentinel.{name}.stop",
                (rng.standard_normal((1, dim // 2)) * 0.1).astype(dt),
            )
            self.sentinels.append((start, stop))

    def parameters(self):
        yield from (self.w_content, self.b_content, self.pos_table)
        if self.config.use_prosody:
            yield from (self.pause_before_table, self.pause_after_table)
            for wmat, bias in self.cnn_filters:
                yield from (wmat, bias)
            yield from (self.w_prosody, self.b_prosody)
        for layer in self.layers:
            yield from layer.parameters()
        for start, stop in self.sentinels:
            yield from (start, stop)

    # ------------------------------------------------------------------
    # prosodic feature sub-networks

    def prosody_cnn(self, tape, patch):
        """CNN summary of one word's frame patch: [1 x widths*filters].

        Energy, f0 and the word-interior mask enter as three channels; each
        filter width is convolved (same padding), rectified and max-pooled
        over time, and the per-width outputs are concatenated in ascending
        width order.
        """
        x = np.concatenate(
            [patch.frames, patch.word_interior_mask[:, None].astype(patch.frames.dtype)],
            axis=1,
        )
        x_var = tape.constant(x)
        pieces = []
        for wmat, bias in self.cnn_filters:
            conv = ag.conv1d(x_var, tape.watch(wmat), tape.watch(bias))
            pieces.append(ag.max_pool_time(ag.relu(conv)))
        return ag.concat(pieces, axis=1)

    def phi_matrix(self, tape, prosody):
        """Pause/duration feature rows [T x PHI_DIM]."""
        before = ag.embedding_lookup(tape, self.pause_before_table, prosody.pause_before)
        after = ag.embedding_lookup(tape, self.pause_after_table, prosody.pause_after)
        scalars = tape.constant(prosody.duration_scalars)
        return ag.concat([before, after, scalars], axis=1)

    def prosody_stream(self, tape, prosody):
        phi = self.phi_matrix(tape, prosody)
        s_rows = ag.concat(
            [self.prosody_cnn(tape, patch) for patch in prosody.patches], axis=0
        )
        joint = ag.concat([phi, s_rows], axis=1)
        return ag.add_bias(
            ag.matmul(joint, tape.watch(self.w_prosody)), tape.watch(self.b_prosody)
        )

    # ------------------------------------------------------------------

    def _attention(self, tape, streams, layer):
        cfg = self.config
        heads = cfg.heads
        qkv = []
        for x, attn in zip(streams, layer.attn):
            q = ag.matmul(x, tape.watch(attn.wq))
            k = ag.matmul(x, tape.watch(attn.wk))
            v = ag.matmul(x, tape.watch(attn.wv))
            qkv.append((q, k, v, attn.dim // heads))

        per_stream_heads = [[] for _ in streams]
        for h in range(heads):
            logits = None
            for (q, k, _v, dh) in qkv:
                qh = ag.slice_cols(q, h * dh, (h + 1) * dh)
                kh = ag.slice_cols(k, h * dh, (h + 1) * dh)
                part = ag.smul(ag.matmul(qh, ag.transpose(kh)), 1.0 / np.sqrt(dh))
                logits = part if logits is None else ag.add(logits, part)
            weights = ag.softmax(logits)
            for si, (_q, _k, v, dh) in enumerate(qkv):
                vh = ag.slice_cols(v, h * dh, (h + 1) * dh)
                per_stream_heads[si].append(ag.matmul(weights, vh))

        outs = []
        for si, (x, attn) in enumerate(zip(streams, layer.attn)):
            merged = ag.concat(per_stream_heads[si], axis=1)
            proj = ag.matmul(merged, tape.watch(attn.wo))
            proj = ag.dropout(proj, cfg.dropout)
            outs.append(layer.norm1[si](tape, ag.add(x, proj)))
        return outs

    def _feed_forward(self, tape, streams, layer):
        cfg = self.config
        x = ag.concat(streams, axis=1)
        h = ag.relu(ag.add_bias(ag.matmul(x, tape.watch(layer.ff_w1)), tape.watch(layer.ff_b1)))
        f = ag.add_bias(ag.matmul(h, tape.watch(layer.ff_w2)), tape.watch(layer.ff_b2))
        f = ag.dropout(f, cfg.dropout)
        y = ag.add(x, f)
        outs = []
        lo = 0
        for si, dim in enumerate(cfg.stream_dims):
            piece = ag.slice_cols(y, lo, lo + dim)
            outs.append(layer.norm2[si](tape, piece))
            lo += dim
        return outs

    def encode(self, tape, e_var, prosody=None):
        """Fencepost representations [(T+1) x d_total] for one sentence."""
        cfg = self.config
        T = e_var.value.shape[0]
        if T < 1:
            raise DataError("cannot encode an empty sentence")
        if T > cfg.max_len:
            raise LengthError(f"sentence length {T} exceeds max_len {cfg.max_len}")
        if e_var.value.shape[1] != self.embed_dim:
            raise DataError(
                f"embedding width {e_var.value.shape[1]} != encoder's {self.embed_dim}"
            )

        content = ag.add_bias(
            ag.matmul(e_var, tape.watch(self.w_content)), tape.watch(self.b_content)
        )
        positions = ag.embedding_lookup(tape, self.pos_table, np.arange(T))
        streams = [content, positions]
        if cfg.use_prosody:
            if prosody is None:
                raise DataError("model expects prosodic features but none were given")
            streams.append(self.prosody_stream(tape, prosody))

        for i, layer in enumerate(self.layers):
            streams = self._attention(tape, streams, layer)
            streams = self._feed_forward(tape, streams, layer)
            for s in streams:
                ag.check_finite(s, f"encoder layer {i}")

        pieces = []
        for si, (x, dim) in enumerate(zip(streams, cfg.stream_dims)):
            half = dim // 2
            fwd = ag.slice_cols(x, 0, half)
            bwd = ag.slice_cols(x, half, dim)
            start, stop = self.sentinels[si]
            fwd_stack = ag.concat([tape.watch(start), fwd], axis=0)
            bwd_stack = ag.concat([bwd, tape.watch(stop)], axis=0)
            pieces.append(ag.concat([fwd_stack, bwd_stack], axis=1))
        fenceposts = ag.concat(pieces, axis=1)
        return EncodedSentence(fenceposts=fenceposts, n_words=T)

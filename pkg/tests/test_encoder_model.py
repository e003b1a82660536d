import numpy as np
import pytest

from conftest import build_tiny_model
from prosoparse import autograd as ag
from prosoparse.encoder import CnnConfig, Encoder, EncoderConfig
from prosoparse.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    LengthError,
    NumericError,
)
from prosoparse.model import (
    ParserModel,
    build_text_twin,
    clone_model,
    zero_prosody_pathway,
)
from prosoparse.prosody import FramePatch


def sent_scores(model, sent, train=False, rng=None):
    tape = ag.Tape(rng=rng, train=train, dtype=model.dtype)
    return model.score_sentence(tape, sent)


class TestEncoderShapes:
    def test_config_validation(self):
        with pytest.raises(ConfigError):
            EncoderConfig(d_content=15, heads=2)  # not divisible
        with pytest.raises(ConfigError):
            EncoderConfig(d_content=6, heads=3)  # odd stream width

    def test_single_word_fenceposts(self, featurized_corpus):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents)
        one = next(s for s in sents if len(s) == 1)
        tape = ag.Tape(dtype=model.dtype)
        e = model.provider.embed(tape, one.sentence_id, one.words)
        enc = model.encoder.encode(tape, e, one.prosody)
        assert enc.fenceposts.value.shape == (2, model.config.encoder.d_total)

    def test_too_long_sentence(self, featurized_corpus):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents)
        tape = ag.Tape(dtype=model.dtype)
        e = tape.constant(np.zeros((50, model.provider.dim), dtype=np.float32))
        with pytest.raises(LengthError):
            model.encoder.encode(tape, e, None)

    def test_nan_detection_names_layer(self, featurized_corpus):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents, prosody=False)
        model.encoder.layers[1].ff_w2.value[:] = np.nan
        sent = sents[0]
        with pytest.raises(NumericError, match="layer 1"):
            sent_scores(model, sent)


class TestAttention:
    def capture_softmax(self, monkeypatch):
        captured = []
        real = ag.softmax

        def spy(x):
            out = real(x)
            captured.append(out.value.copy())
            return out

        monkeypatch.setattr(ag, "softmax", spy)
        return captured

    def test_attention_rows_sum_to_one(self, featurized_corpus, monkeypatch):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents)
        captured = self.capture_softmax(monkeypatch)
        sent = max(sents, key=len)
        sent_scores(model, sent)
        assert captured
        for weights in captured:
            np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-6)

    def test_not_permutation_invariant(self, featurized_corpus):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents, prosody=False)
        sent = max(sents, key=len)
        tape = ag.Tape(dtype=model.dtype)
        e = model.provider.embed(tape, sent.sentence_id, sent.words)
        out = model.encoder.encode(tape, e, None).fenceposts.value

        perm = np.arange(len(sent))[::-1].copy()
        tape2 = ag.Tape(dtype=model.dtype)
        e2 = model.provider.embed(
            tape2, sent.sentence_id, [sent.words[i] for i in perm]
        )
        out2 = model.encoder.encode(tape2, e2, None).fenceposts.value
        assert not np.allclose(out, out2, atol=1e-4)


class TestProsodyCnn:
    def encoder(self, widths=(3, 5), n=4, seed=0):
        cfg = EncoderConfig(
            layers=1, heads=2, d_content=8, d_position=4, d_prosody=4, d_ff=8,
            dropout=0.0, max_len=20,
        )
        return Encoder(
            cfg, CnnConfig(widths=widths, filters_per_width=n), embed_dim=6,
            rng=np.random.default_rng(seed),
        )

    def patch(self, frames):
        return FramePatch(
            frames=frames, word_interior_mask=np.ones(len(frames), dtype=bool)
        )

    def test_output_dim_is_widths_times_filters(self):
        enc = self.encoder(widths=(3, 5, 10), n=32)
        tape = ag.Tape()
        out = enc.prosody_cnn(tape, self.patch(np.random.default_rng(0).standard_normal((12, 2)).astype(np.float32)))
        assert out.value.shape == (1, 96)

    def test_zero_patch_zero_bias_gives_zeros(self):
        enc = self.encoder()
        frames = np.zeros((8, 2), dtype=np.float32)
        patch = FramePatch(frames=frames, word_interior_mask=np.zeros(8, dtype=bool))
        tape = ag.Tape()
        out = enc.prosody_cnn(tape, patch)
        np.testing.assert_array_equal(out.value, 0.0)

    def test_time_reversal_with_symmetric_filters(self):
        enc = self.encoder(widths=(3, 5), n=4)
        for wmat, _bias in enc.cnn_filters:
            w = wmat.value
            wmat.value[...] = 0.5 * (w + w[::-1])  # symmetric over time
        frames = np.random.default_rng(1).standard_normal((9, 2)).astype(np.float32)
        mask = np.zeros(9, dtype=bool)
        mask[2:7] = True  # symmetric mask so the reversed patch is well-formed
        tape = ag.Tape()
        fwd = enc.prosody_cnn(tape, FramePatch(frames=frames, word_interior_mask=mask))
        rev = enc.prosody_cnn(
            tape, FramePatch(frames=frames[::-1].copy(), word_interior_mask=mask[::-1].copy())
        )
        np.testing.assert_allclose(fwd.value, rev.value, atol=1e-5)


class TestFactorization:
    def test_additivity_zeroed_qk_matches_text_logits(self, featurized_corpus, monkeypatch):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents, prosody=True)
        zero_prosody_pathway(model)
        twin = build_text_twin(model)
        sent = max(sents, key=len)

        captured = []
        real = ag.softmax

        def spy(x):
            captured.append(x.value.copy())
            return real(x)

        monkeypatch.setattr(ag, "softmax", spy)
        sent_scores(model, sent)
        pros_logits = [c.copy() for c in captured]
        captured.clear()
        sent_scores(twin, sent)
        text_logits = captured
        assert len(pros_logits) == len(text_logits)
        heads = model.config.encoder.heads
        for i, (a, b) in enumerate(zip(pros_logits, text_logits)):
            if i < heads:  # first layer: identical inputs, exact equality
                np.testing.assert_array_equal(a, b)
            else:  # deeper layers: float32 summation order may differ by ulps
                np.testing.assert_allclose(a, b, atol=1e-6)

    def test_additivity_prosody_term_exactly_zero(self, featurized_corpus, monkeypatch):
        # with prosody q/k zeroed, the summed logits equal the
        # content+position sum exactly: the prosody term is the zero matrix
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents, prosody=True)
        zero_prosody_pathway(model)
        sent = max(sents, key=len)

        parts = []
        real_add = ag.add

        def spy_add(a, b):
            out = real_add(a, b)
            if a.value.ndim == 2 and a.value.shape[0] == a.value.shape[1] == len(sent):
                parts.append((a.value.copy(), b.value.copy(), out.value.copy()))
            return out

        monkeypatch.setattr(ag, "add", spy_add)
        sent_scores(model, sent)
        assert parts
        zero_adds = [
            (a, out) for a, b, out in parts if np.array_equal(b, np.zeros_like(b))
        ]
        # one all-zero prosody accumulation per head per layer
        cfg = model.config.encoder
        assert len(zero_adds) == cfg.layers * cfg.heads
        for a, out in zero_adds:
            np.testing.assert_array_equal(out, a)

    def test_span_scores_identity(self, featurized_corpus):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents, prosody=True)
        zero_prosody_pathway(model)
        twin = build_text_twin(model)
        for sent in sents[:6]:
            a = sent_scores(model, sent).dense
            b = sent_scores(twin, sent).dense
            np.testing.assert_allclose(a, b, atol=1e-6)

    def test_without_surgery_scores_differ(self, featurized_corpus):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents, prosody=True)
        twin = build_text_twin(model)
        sent = max(sents, key=len)
        a = sent_scores(model, sent).dense
        b = sent_scores(twin, sent).dense
        assert not np.allclose(a, b, atol=1e-4)


class TestFullModelGradients:
    def test_grad_check_full_loss(self, featurized_corpus):
        sents = featurized_corpus.sentences
        sent = next(s for s in sents if len(s) == 3)
        model64 = clone_model(build_tiny_model(sents, prosody=True), dtype=np.float64)
        params = list(model64.parameters())

        def f():
            tape = ag.Tape(train=False, dtype=np.float64)
            scores = model64.score_sentence(tape, sent)
            # hinge at a fixed (generally wrong) gold: gradient flows through
            # encoder, CNN and scorer
            loss, _ = __import__("prosoparse.chart", fromlist=["margin_loss"]).margin_loss(
                scores, sent.gold_spans
            )
            return loss

        err = ag.grad_check(f, params, n_samples=6, h=1e-5)
        assert err < 1e-3, f"max relative gradient error {err}"


class TestCheckpoints:
    def test_round_trip_identical_scores(self, featurized_corpus, tmp_path):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents)
        path = tmp_path / "m.ckpt"
        model.save(path, extra_meta={"seed": 3})
        back, meta = ParserModel.load(path)
        assert meta["seed"] == 3
        sent = sents[0]
        np.testing.assert_array_equal(
            sent_scores(model, sent).dense, sent_scores(back, sent).dense
        )

    def test_architecture_mismatch_lists_shapes(self, featurized_corpus, tmp_path):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents)
        path = tmp_path / "m.ckpt"
        model.save(path)
        from prosoparse.tensorfile import read_tensors, write_tensors

        meta, tensors = read_tensors(path)
        meta["model"]["span_hidden"] = 48  # widens span.w1/w2
        write_tensors(path, tensors, meta)
        with pytest.raises(CheckpointError, match="span.w1"):
            ParserModel.load(path)

    def test_model_requires_prosody_features(self, featurized_corpus):
        sents = featurized_corpus.sentences
        model = build_tiny_model(sents, prosody=True)
        bare = type(sents[0])(
            sentence_id="bare", tokens=sents[0].tokens, tree=sents[0].tree,
            gold_spans=sents[0].gold_spans, prosody=None,
        )
        with pytest.raises(DataError):
            sent_scores(model, bare)

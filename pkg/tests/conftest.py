import numpy as np
import pytest

from prosoparse.corpus import featurize
from prosoparse.embeddings import EmbeddingProvider
from prosoparse.encoder import CnnConfig, EncoderConfig
from prosoparse.model import ModelConfig, ParserModel
from prosoparse.synthdata import overfit_corpus
from prosoparse.treebank import LabelVocab


def tiny_model_config(prosody=True, dropout=0.0):
    return ModelConfig(
        encoder=EncoderConfig(
            layers=2,
            heads=2,
            d_content=16,
            d_position=8,
            d_prosody=8 if prosody else 0,
            d_ff=32,
            dropout=dropout,
            max_len=40,
        ),
        cnn=CnnConfig(widths=(3, 5), filters_per_width=4),
        span_hidden=24,
    )


def build_tiny_model(sentences, prosody=True, seed=3, dtype=np.float32, dropout=0.0,
                     emb_dim=12):
    provider = EmbeddingProvider.learned(
        [s.words for s in sentences],
        dim=emb_dim,
        min_count=1,
        rng=np.random.default_rng(seed + 100),
        dtype=dtype,
    )
    vocab = LabelVocab.from_trees([s.tree for s in sentences])
    return ParserModel(
        tiny_model_config(prosody=prosody, dropout=dropout),
        provider,
        vocab,
        seed=seed,
        dtype=dtype,
    )


@pytest.fixture(scope="session")
def featurized_corpus():
    data = overfit_corpus(n_sentences=24, seed=5)
    featurize(data.sentences, data.alignments, data.tracks)
    return data

"""Word vector providers: learned, pretrained-frozen, pretrained-finetuned.

Pretrained vectors arrive as files.  Contextual (frozen) vectors are keyed
by sentence id and used as constants; word-type vectors initialize a
trainable table for the finetuned mode.  Swapping providers changes only
the word-embedding stream; prosodic features are untouched.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .errors import AlignmentError, DataError, FormatError

UNK = "<unk>"
MODES = ("learned", "frozen", "finetuned")
DEFAULT_LEARNED_DIM = 128
DEFAULT_MIN_COUNT = 2
UNK_DROPOUT_P = 0.01


class WordVocab:
    """word -> index map with a reserved UNK entry at index 0."""

    def __init__(self, words=()):
        self.words = [UNK]
        self._index = {UNK: 0}
        for w in words:
            if w not in self._index:
                self._index[w] = len(self.words)
                self.words.append(w)

    @classmethod
    def from_tokens(cls, sentences, min_count=DEFAULT_MIN_COUNT):
        counts = {}
        for tokens in sentences:
            for w in tokens:
                counts[w] = counts.get(w, 0) + 1
        kept = [w for w in sorted(counts) if counts[w] >= min_count]
        return cls(kept)

    def index_or_unk(self, word):
        return self._index.get(word, 0)

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index


@dataclass
class VectorStore:
    """Per-sentence matrices of precomputed contextual vectors."""

    dim: int
    producer: str = ""
    sentences: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.sentences)

    def coverage(self, sentence_ids):
        """(covered, total) over the given sentence ids."""
        ids = list(sentence_ids)
        return sum(1 for sid in ids if sid in self.sentences), len(ids)


def load_vector_store(path):
    """Read the sentence-keyed vector store format.

    Header line "dim=<d> producer=<name>", then blocks of
    "sentence <id> <T>" followed by T lines of d floats.
    """
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        _warnings.warn(f"{path}: empty vector store")
        return VectorStore(dim=0)
    head = dict(
        part.split("=", 1) for part in lines[0].split() if "=" in part
    )
    if "dim" not in head:
        raise FormatError(f"{path}: header must declare dim=<d>, got {lines[0]!r}")
    dim = int(head["dim"])
    store = VectorStore(dim=dim, producer=head.get("producer", ""))
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 3 or parts[0] != "sentence":
            raise FormatError(f"{path}: expected 'sentence <id> <T>', got {lines[i]!r}")
        sid, t = parts[1], int(parts[2])
        if i + 1 + t > len(lines):
            raise FormatError(f"{path}: sentence {sid} truncated ({t} rows declared)")
        rows = []
        for j in range(t):
            row = np.array(lines[i + 1 + j].split(), dtype=np.float32)
            if row.shape[0] != dim:
                raise FormatError(
                    f"{path}: sentence {sid} row {j} has {row.shape[0]} dims, header says {dim}"
                )
            rows.append(row)
        store.sentences[sid] = np.stack(rows) if rows else np.zeros((0, dim), np.float32)
        i += 1 + t
    return store


def write_vector_store(path, store):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={store.dim} producer={store.producer or 'unknown'}\n")
        for sid, mat in store.sentences.items():
            fh.write(f"sentence {sid} {mat.shape[0]}\n")
            for row in mat:
                fh.write(" ".join(f"{x:.6f}" for x in row))
                fh.write("\n")


def load_word_vectors(path):
    """GloVe-style word vectors: one "word v1 .. vd" line per type."""
    words = []
    vecs = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            vec = np.array(parts[1:], dtype=np.float32)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise FormatError(
                    f"{path}:{lineno}: vector has {vec.shape[0]} dims, expected {dim}"
                )
            words.append(parts[0])
            vecs.append(vec)
    if not words:
        raise FormatError(f"{path}: no word vectors found")
    return words, np.stack(vecs)


class EmbeddingProvider:
    """Produces e_i rows for a sentence; gradient flow depends on mode."""

    def __init__(self, mode, dim, vocab=None, table=None, store=None):
        if mode not in MODES:
            raise DataError(f"unknown embedding mode {mode!r}")
        self.mode = mode
        self.dim = dim
        self.vocab = vocab
        self.table = table
        self.store = store

    @classmethod
    def learned(cls, sentences, dim=DEFAULT_LEARNED_DIM, min_count=DEFAULT_MIN_COUNT, rng=None, dtype=np.float32):
        vocab = WordVocab.from_tokens(sentences, min_count=min_count)
        rng = rng or np.random.default_rng(0)
        table = ag.Parameter(
            "embeddings.table",
            (rng.standard_normal((len(vocab), dim)) / np.sqrt(dim)).astype(dtype),
        )
        return cls("learned", dim, vocab=vocab, table=table)

    @classmethod
    def frozen(cls, store):
        return cls("frozen", store.dim, store=store)

    @classmethod
    def finetuned(cls, path, rng=None, dtype=np.float32):
        words, vecs = load_word_vectors(path)
        vocab = WordVocab(words)
        table = np.empty((len(vocab), vecs.shape[1]), dtype=dtype)
        table[0] = vecs.mean(axis=0)
        table[1:] = vecs
        return cls(
            "finetuned",
            vecs.shape[1],
            vocab=vocab,
            table=ag.Parameter("embeddings.table", table),
        )

    @property
    def trainable(self):
        return self.mode in ("learned", "finetuned")

    def parameters(self):
        if self.trainable:
            yield self.table

    def embed(self, tape, sentence_id, tokens):
        """e_i matrix [T x dim] for the sentence's word tokens."""
        T = len(tokens)
        if self.mode == "frozen":
            mat = self.store.sentences.get(sentence_id)
            if mat is None:
                raise DataError(f"sentence {sentence_id!r} missing from vector store")
            if mat.shape[0] != T:
                raise AlignmentError(
                    f"sentence {sentence_id!r}: store has {mat.shape[0]} vectors "
                    f"for {T} tokens"
                )
            return tape.constant(mat)
        ids = np.array([self.vocab.index_or_unk(w) for w in tokens], dtype=np.int64)
        if self.mode == "learned" and tape.train and tape.rng is not None:
            drop = tape.rng.random(T) < UNK_DROPOUT_P
            ids[drop] = 0
        return ag.embedding_lookup(tape, self.table, ids)

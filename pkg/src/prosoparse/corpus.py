"""Sentence records: trees, tokens, and per-word prosodic inputs.

Featurization runs corpus-wide in one sequential pass (duration statistics,
per-speaker track normalization), then per sentence.  The result can be
cached to a tensor file keyed by a content hash of the inputs, so repeated
training runs across seeds skip recomputation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import prosody as pros
from .encoder import N_DURATION_SCALARS, ProsodyInputs
from .errors import AlignmentError, DataError
from .prosody import DurationStats, FramePatch
from .tensorfile import read_tensors, write_tensors
from .treebank import sentence_of, tree_to_spans


@dataclass
class Sentence:
    sentence_id: str
    tokens: list  # (word, pos_tag) pairs
    tree: object = None
    gold_spans: set = None
    prosody: ProsodyInputs = None
    speaker_id: str = ""

    @property
    def words(self):
        return [w for w, _ in self.tokens]

    def __len__(self):
        return len(self.tokens)


def sentences_from_trees(trees, ids=None):
    out = []
    for i, tree in enumerate(trees):
        sid = ids[i] if ids is not None else f"s{i:05d}"
        out.append(
            Sentence(
                sentence_id=sid,
                tokens=sentence_of(tree),
                tree=tree,
                gold_spans=tree_to_spans(tree),
            )
        )
    return out


def _duration_scalars(pd_list):
    return np.array(
        [[p.duration_norm, np.log1p(p.duration_raw)] for p in pd_list],
        dtype=np.float32,
    )


def featurize(
    sentences,
    alignments,
    tracks,
    context_s=pros.DEFAULT_CONTEXT_S,
    max_frames=pros.DEFAULT_MAX_FRAMES,
):
    """Attach ProsodyInputs to each sentence from alignments and frame tracks.

    ``alignments`` maps sentence_id -> [WordAlignment]; ``tracks`` maps
    speaker_id -> FrameTrack.  Tracks are z-scored per speaker first;
    duration statistics are word-type means over all alignments.
    Returns the list of warnings from speaker normalization.
    """
    normalized, warnings = pros.normalize_speaker(
        {spk: [trk] for spk, trk in tracks.items()}
    )
    norm_tracks = {spk: trks[0] for spk, trks in normalized.items()}
    all_alis = [a for alis in alignments.values() for a in alis]
    stats = DurationStats.from_alignments(all_alis)

    for sent in sentences:
        alis = alignments.get(sent.sentence_id)
        if alis is None:
            raise DataError(f"no alignments for sentence {sent.sentence_id!r}")
        if len(alis) != len(sent):
            raise AlignmentError(
                f"sentence {sent.sentence_id!r}: {len(alis)} aligned words "
                f"for {len(sent)} tokens"
            )
        for (word, _), ali in zip(sent.tokens, alis):
            if word.lower() != ali.word.lower():
                raise AlignmentError(
                    f"sentence {sent.sentence_id!r}: token {word!r} vs "
                    f"aligned word {ali.word!r}"
                )
        speaker = alis[0].speaker_id
        track = norm_tracks.get(speaker)
        if track is None:
            raise DataError(
                f"sentence {sent.sentence_id!r}: no frame track for speaker {speaker!r}"
            )
        pd_list = pros.compute_pause_duration(alis, stats)
        patches = [
            pros.extract_frame_patch(track, ali, context_s, max_frames) for ali in alis
        ]
        sent.speaker_id = speaker
        sent.prosody = ProsodyInputs(
            pause_before=np.array([p.pause_before_bucket for p in pd_list], np.int64),
            pause_after=np.array([p.pause_after_bucket for p in pd_list], np.int64),
            duration_scalars=_duration_scalars(pd_list),
            patches=patches,
        )
    return warnings


def load_corpus(trees_path, alignments=None, speechify_trees=False):
    """Sentences from a tree file, optionally paired with alignments.

    When alignments are given, sentence ids follow the alignment file's
    order (which must correspond one-to-one with the tree file lines);
    otherwise ids are positional.
    """
    from .treebank import read_tree_file, speechify

    trees = read_tree_file(trees_path)
    if speechify_trees:
        trees = [speechify(t) for t in trees]
    ids = None
    if alignments is not None:
        ids = list(alignments.keys())
        if len(ids) != len(trees):
            raise DataError(
                f"{trees_path}: {len(trees)} trees but alignments cover "
                f"{len(ids)} sentences"
            )
    return sentences_from_trees(trees, ids=ids)


def content_hash(paths, extra=""):
    """sha256 over the raw bytes of the input files plus a parameter string."""
    h = hashlib.sha256()
    for path in sorted(str(p) for p in paths):
        h.update(path.encode("utf-8"))
        with open(path, "rb") as fh:
            h.update(fh.read())
    h.update(extra.encode("utf-8"))
    return h.hexdigest()


def save_feature_cache(path, sentences, meta=None):
    tensors = {}
    ids = []
    for sent in sentences:
        if sent.prosody is None:
            raise DataError(f"sentence {sent.sentence_id!r} has no features to cache")
        p = sent.prosody
        sid = sent.sentence_id
        ids.append(sid)
        frames = np.concatenate([pt.frames for pt in p.patches], axis=0)
        mask = np.concatenate([pt.word_interior_mask for pt in p.patches])
        lens = np.array([pt.n_frames for pt in p.patches], dtype=np.int64)
        tensors[f"{sid}.pause_before"] = p.pause_before
        tensors[f"{sid}.pause_after"] = p.pause_after
        tensors[f"{sid}.dur"] = p.duration_scalars
        tensors[f"{sid}.frames"] = frames
        tensors[f"{sid}.mask"] = mask
        tensors[f"{sid}.patch_lens"] = lens
    meta = dict(meta or {})
    meta["sentence_ids"] = ids
    write_tensors(path, tensors, meta)


def load_feature_cache(path, sentences):
    """Attach cached ProsodyInputs to the given sentences (matched by id)."""
    meta, tensors = read_tensors(path)
    by_id = {s.sentence_id: s for s in sentences}
    for sid in meta.get("sentence_ids", []):
        sent = by_id.get(sid)
        if sent is None:
            continue
        lens = tensors[f"{sid}.patch_lens"]
        frames = tensors[f"{sid}.frames"]
        mask = tensors[f"{sid}.mask"]
        patches = []
        off = 0
        for n in lens:
            patches.append(
                FramePatch(
                    frames=frames[off : off + n], word_interior_mask=mask[off : off + n]
                )
            )
            off += int(n)
        dur = tensors[f"{sid}.dur"]
        if dur.shape != (len(lens), N_DURATION_SCALARS):
            raise DataError(f"{path}: bad duration block for sentence {sid!r}")
        sent.prosody = ProsodyInputs(
            pause_before=tensors[f"{sid}.pause_before"],
            pause_after=tensors[f"{sid}.pause_after"],
            duration_scalars=dur.astype(np.float32),
            patches=patches,
        )
    return meta

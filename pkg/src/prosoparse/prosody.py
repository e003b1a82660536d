"""Word alignments, energy/f0 frame tracks, and pause/duration features.

Raw audio never enters the package: alignments and 10 ms frame tracks are
ingested from files.  This module turns them into (a) bucketed pause and
normalized duration features per word and (b) fixed-size energy/f0 frame
patches around each word for the convolutional feature extractor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DataError, FormatError

DEFAULT_FRAME_PERIOD = 0.010
DEFAULT_CONTEXT_S = 0.12
DEFAULT_MAX_FRAMES = 100
# Upper edges of the pause buckets in seconds; gaps beyond the last edge
# fall into bucket 5.
PAUSE_BUCKET_EDGES = (0.0, 0.05, 0.2, 1.0, 2.0)
N_PAUSE_BUCKETS = len(PAUSE_BUCKET_EDGES) + 1
SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class WordAlignment:
    word: str
    start: float
    end: float
    speaker_id: str = ""

    def __post_init__(self):
        if not (self.end > self.start >= 0.0):
            raise DataError(
                f"bad alignment for {self.word!r}: [{self.start}, {self.end}]"
            )

    @property
    def duration(self):
        return self.end - self.start


@dataclass
class FrameTrack:
    energy: np.ndarray
    f0: np.ndarray
    frame_period: float = DEFAULT_FRAME_PERIOD
    start_time: float = 0.0

    def __post_init__(self):
        self.energy = np.asarray(self.energy, dtype=np.float32)
        self.f0 = np.asarray(self.f0, dtype=np.float32)
        if self.energy.shape != self.f0.shape or self.energy.ndim != 1:
            raise FormatError(
                f"energy/f0 length mismatch: {self.energy.shape} vs {self.f0.shape}"
            )
        if self.frame_period <= 0:
            raise FormatError(f"frame_period must be positive, got {self.frame_period}")

    @property
    def n_frames(self):
        return len(self.energy)

    @property
    def end_time(self):
        return self.start_time + self.n_frames * self.frame_period


@dataclass(frozen=True)
class PauseDuration:
    pause_before_bucket: int
    pause_after_bucket: int
    duration_norm: float
    duration_raw: float


@dataclass
class FramePatch:
    frames: np.ndarray  # [n_frames, 2]: energy, f0 columns
    word_interior_mask: np.ndarray  # [n_frames] bool

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        self.word_interior_mask = np.asarray(self.word_interior_mask, dtype=bool)
        if self.frames.ndim != 2 or self.frames.shape[1] != 2:
            raise DataError(f"patch must be [n_frames, 2], got {self.frames.shape}")
        if len(self.word_interior_mask) != len(self.frames):
            raise DataError("mask length does not match frame count")

    @property
    def n_frames(self):
        return len(self.frames)


def pause_bucket(gap_s):
    """Monotone bucketization of a pause length in seconds into 0..5."""
    for bucket, edge in enumerate(PAUSE_BUCKET_EDGES):
        if gap_s <= edge:
            return bucket
    return N_PAUSE_BUCKETS - 1


@dataclass
class DurationStats:
    """Per-word-type mean durations with a global fallback."""

    means: dict = field(default_factory=dict)
    global_mean: float = 0.0

    @classmethod
    def from_alignments(cls, alignments):
        totals = {}
        counts = {}
        grand = 0.0
        n = 0
        for ali in alignments:
            totals[ali.word] = totals.get(ali.word, 0.0) + ali.duration
            counts[ali.word] = counts.get(ali.word, 0) + 1
            grand += ali.duration
            n += 1
        if n == 0:
            raise DataError("cannot compute duration statistics from zero alignments")
        return cls(
            means={w: totals[w] / counts[w] for w in totals},
            global_mean=grand / n,
        )

    def mean_for(self, word):
        return self.means.get(word, self.global_mean)


def _check_sorted(alignments):
    for i in range(1, len(alignments)):
        if alignments[i].start < alignments[i - 1].end:
            raise DataError(
                f"alignments unsorted or overlapping at index {i}: "
                f"{alignments[i - 1]} then {alignments[i]}"
            )


def compute_pause_duration(alignments, stats):
    """Pause buckets and normalized durations for a sentence's alignments.

    pause_before of word i is start_i - end_{i-1} (0 for the first word);
    pause_after mirrors it.  duration_norm divides by the word type's mean
    duration, falling back to the corpus-wide mean.
    """
    alignments = list(alignments)
    _check_sorted(alignments)
    out = []
    for i, ali in enumerate(alignments):
        before = 0.0 if i == 0 else ali.start - alignments[i - 1].end
        after = 0.0 if i == len(alignments) - 1 else alignments[i + 1].start - ali.end
        mean = stats.mean_for(ali.word)
        if mean <= 0:
            raise DataError(f"non-positive mean duration for word {ali.word!r}")
        out.append(
            PauseDuration(
                pause_before_bucket=pause_bucket(before),
                pause_after_bucket=pause_bucket(after),
                duration_norm=ali.duration / mean,
                duration_raw=ali.duration,
            )
        )
    return out


def extract_frame_patch(
    track,
    alignment,
    context_s=DEFAULT_CONTEXT_S,
    max_frames=DEFAULT_MAX_FRAMES,
):
    """Energy/f0 frames for a word plus symmetric context, zero-padded at
    track edges and center-cropped around the word midpoint when longer
    than ``max_frames``."""
    if alignment.end <= track.start_time or alignment.start >= track.end_time:
        raise AlignmentError(
            f"word {alignment.word!r} [{alignment.start}, {alignment.end}] "
            f"lies outside track [{track.start_time}, {track.end_time}]"
        )
    fp = track.frame_period
    lo = alignment.start - context_s
    n = int(round((alignment.duration + 2.0 * context_s) / fp))
    n = max(1, n)
    first = int(round((lo - track.start_time) / fp))
    if n > max_frames:
        # crop symmetrically: patch midpoint == word midpoint by construction
        drop = n - max_frames
        first += drop // 2
        n = max_frames

    frames = np.zeros((n, 2), dtype=np.float32)
    mask = np.zeros(n, dtype=bool)
    src_lo = max(first, 0)
    src_hi = min(first + n, track.n_frames)
    if src_lo < src_hi:
        dst_lo = src_lo - first
        frames[dst_lo : dst_lo + (src_hi - src_lo), 0] = track.energy[src_lo:src_hi]
        frames[dst_lo : dst_lo + (src_hi - src_lo), 1] = track.f0[src_lo:src_hi]
    times = track.start_time + (first + np.arange(n)) * fp
    mask[:] = (times >= alignment.start) & (times < alignment.end)
    return FramePatch(frames=frames, word_interior_mask=mask)


def normalize_speaker(tracks):
    """Z-score each speaker's tracks in place of raw values.

    Energy is normalized over all frames; f0 over voiced frames only
    (f0 > 0), leaving unvoiced frames at 0.  Returns (normalized tracks,
    warnings) where warnings lists speakers with no voiced frames.
    """
    normalized = {}
    warnings = []
    for speaker, speaker_tracks in tracks.items():
        speaker_tracks = list(speaker_tracks)
        if not speaker_tracks or all(t.n_frames == 0 for t in speaker_tracks):
            raise DataError(f"speaker {speaker!r} has no frames")
        energy_all = np.concatenate([t.energy for t in speaker_tracks]).astype(np.float64)
        f0_all = np.concatenate([t.f0 for t in speaker_tracks]).astype(np.float64)
        # 0 encodes unvoiced; != 0 (not > 0) keeps normalization idempotent,
        # since z-scored voiced frames may be negative
        voiced = f0_all != 0

        e_mu = energy_all.mean()
        e_sd = max(energy_all.std(), SIGMA_FLOOR)
        if voiced.any():
            f_mu = f0_all[voiced].mean()
            f_sd = max(f0_all[voiced].std(), SIGMA_FLOOR)
        else:
            f_mu, f_sd = 0.0, 1.0
            warnings.append(f"speaker {speaker!r} has no voiced frames; f0 left unscaled")

        out = []
        for t in speaker_tracks:
            e = ((t.energy.astype(np.float64) - e_mu) / e_sd).astype(np.float32)
            f = t.f0.astype(np.float64).copy()
            v = f != 0
            f[v] = (f[v] - f_mu) / f_sd
            out.append(
                FrameTrack(
                    energy=e,
                    f0=f.astype(np.float32),
                    frame_period=t.frame_period,
                    start_time=t.start_time,
                )
            )
        normalized[speaker] = out
    return normalized, warnings


def read_alignment_file(path):
    """Tab-separated alignments: sentence_id, word, start_s, end_s, speaker_id.

    Returns {sentence_id: [WordAlignment, ...]} preserving file order.
    """
    sentences = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise FormatError(
                    f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}"
                )
            sid, word, start_s, end_s, speaker = parts
            try:
                ali = WordAlignment(word, float(start_s), float(end_s), speaker)
            except (ValueError, DataError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            sentences.setdefault(sid, []).append(ali)
    for sid, alis in sentences.items():
        try:
            _check_sorted(alis)
        except DataError as exc:
            raise DataError(f"{path}: sentence {sid}: {exc}") from None
    return sentences


def write_alignment_file(path, sentences):
    with open(path, "w", encoding="utf-8") as fh:
        for sid, alis in sentences.items():
            for ali in alis:
                fh.write(
                    f"{sid}\t{ali.word}\t{ali.start:.4f}\t{ali.end:.4f}\t{ali.speaker_id}\n"
                )


def read_frame_track_file(path):
    """Comma-separated frames with a required header: time_s, energy, f0."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty frame track file") from None
        expected = ["time_s", "energy", "f0"]
        if [h.strip() for h in header] != expected:
            raise FormatError(f"{path}: expected header {expected}, got {header}")
        times, energy, f0 = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                times.append(float(row[0]))
                energy.append(float(row[1]))
                f0.append(float(row[2]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not times:
        raise FormatError(f"{path}: no frames")
    if len(times) == 1:
        period = DEFAULT_FRAME_PERIOD
    else:
        diffs = np.diff(times)
        period = float(np.median(diffs))
        if period <= 0 or not math.isclose(
            float(diffs.max()), float(diffs.min()), rel_tol=0.05, abs_tol=1e-4
        ):
            raise FormatError(f"{path}: frame times are not evenly spaced")
    return FrameTrack(
        energy=np.array(energy, dtype=np.float32),
        f0=np.array(f0, dtype=np.float32),
        frame_period=period,
        start_time=times[0],
    )


def write_frame_track_file(path, track):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "energy", "f0"])
        for i in range(track.n_frames):
            t = track.start_time + i * track.frame_period
            writer.writerow(
                [f"{t:.4f}", f"{track.energy[i]:.6f}", f"{track.f0[i]:.6f}"]
            )

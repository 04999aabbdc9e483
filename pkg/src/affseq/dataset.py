"""Per-frame feature and label ingestion, windowing, and overlap merging.

Feature matrices live in a small binary container (magic ``AFFW``); labels and
manifests are CSV. Tracks are z-score normalized with statistics drawn from
the training split only, then cut into length-15 windows with 5 frames of
overlap. Windowed predictions merge back to frame level by averaging every
window that covers a frame.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CoverageError,
    DomainError,
    FileFormatError,
    ParseError,
    TruncatedFileError,
    VersionMismatchError,
    WidthMismatchError,
)

MODALITY_DIMS = {"audio": 168, "expnet": 2048, "facepose": 714}

SEQUENCE_LEN = 15
SEQUENCE_OVERLAP = 5

FEATURE_MAGIC = b"AFFW"
FEATURE_VERSION = 1

LABEL_HEADER = ["frame", "valence", "arousal"]
MANIFEST_HEADER = [
    "video_id",
    "split",
    "audio_path",
    "expnet_path",
    "facepose_path",
    "label_path",
    "n_frames",
]

_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class FeatureTrack:
    """One video's per-frame feature matrix for a single modality."""

    video_id: str
    modality: str
    data: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITY_DIMS:
            raise DomainError(f"unknown modality {self.modality!r}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DomainError(f"feature track must be 2-D, got shape {data.shape}")
        want = MODALITY_DIMS[self.modality]
        if data.shape[1] != want:
            raise WidthMismatchError(
                f"{self.video_id or '<track>'}: modality {self.modality!r} expects width "
                f"{want}, got {data.shape[1]}"
            )
        if not np.all(np.isfinite(data)):
            raise DomainError(f"{self.video_id or '<track>'}: feature track has non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class LabelTrack:
    """Per-frame valence/arousal with a validity mask.

    Frames whose value falls outside [-1, 1] on either dimension (including
    the -5 sentinel for unannotated frames) are marked invalid.
    """

    video_id: str
    valence: np.ndarray
    arousal: np.ndarray
    valid: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.valence)

    def targets(self) -> np.ndarray:
        return np.stack([self.valence, self.arousal], axis=1)


@dataclass(frozen=True)
class SequenceWindow:
    """A length-15 slice of one track: per-modality features, targets, mask."""

    video_id: str
    start_frame: int
    features: dict[str, np.ndarray]
    targets: np.ndarray
    mask: np.ndarray


@dataclass
class NormalizationStats:
    """Per-modality column means and (floored) standard deviations."""

    mean: dict[str, np.ndarray] = field(default_factory=dict)
    std: dict[str, np.ndarray] = field(default_factory=dict)

    def modalities(self) -> list[str]:
        return sorted(self.mean)


@dataclass(frozen=True)
class ManifestRow:
    video_id: str
    split: str
    audio_path: Path | None
    expnet_path: Path | None
    facepose_path: Path | None
    label_path: Path | None
    n_frames: int

    def feature_path(self, modality: str) -> Path | None:
        return {
            "audio": self.audio_path,
            "expnet": self.expnet_path,
            "facepose": self.facepose_path,
        }[modality]


def write_feature_file(path, matrix) -> None:
    """Write a float matrix in the AFFW container (f32 little-endian, row-major)."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DomainError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, rows, cols))
        fh.write(matrix.astype("<f4").tobytes())


def load_feature_track(path, modality: str, video_id: str = "") -> FeatureTrack:
    """Read an AFFW feature file, checking magic, version, size, and width."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise TruncatedFileError(f"{path}: AFFW header needs 16 bytes, found {len(blob)}")
    if blob[:4] != FEATURE_MAGIC:
        raise FileFormatError(f"{path}: bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}")
    version, rows, cols = struct.unpack_from("<III", blob, 4)
    if version != FEATURE_VERSION:
        raise VersionMismatchError(f"{path}: AFFW version {version}, expected {FEATURE_VERSION}")
    expected = 4 * rows * cols
    found = len(blob) - 16
    if found < expected:
        raise TruncatedFileError(f"{path}: expected {expected} payload bytes, found {found}")
    if found > expected:
        raise FileFormatError(f"{path}: {found - expected} trailing bytes after payload")
    data = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=16).reshape(rows, cols)
    return FeatureTrack(video_id=video_id, modality=modality, data=data.astype(np.float64))


def load_labels(path, video_id: str = "") -> LabelTrack:
    """Read a ``frame,valence,arousal`` CSV with contiguous frame indices from 0."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty label file") from None
        if [h.strip() for h in header] != LABEL_HEADER:
            raise FileFormatError(f"{path}: label header must be {','.join(LABEL_HEADER)}")
        valence, arousal = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FileFormatError(f"{path}:{line_no}: expected 3 fields, got {len(row)}")
            try:
                idx = int(row[0])
                v = float(row[1])
                a = float(row[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{line_no}: non-numeric field ({exc})") from None
            if idx != len(valence):
                raise FileFormatError(
                    f"{path}:{line_no}: frame index {idx} out of order (expected {len(valence)})"
                )
            valence.append(v)
            arousal.append(a)
    valence = np.asarray(valence)
    arousal = np.asarray(arousal)
    valid = (np.abs(valence) <= 1.0) & (np.abs(arousal) <= 1.0)
    return LabelTrack(video_id=video_id, valence=valence, arousal=arousal, valid=valid)


def load_manifest(path) -> list[ManifestRow]:
    """Read the corpus manifest; relative paths resolve against the manifest's directory."""
    base = Path(path).parent
    rows: list[ManifestRow] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty manifest") from None
        if [h.strip() for h in header] != MANIFEST_HEADER:
            raise FileFormatError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise FileFormatError(
                    f"{path}:{line_no}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}"
                )
            video_id, split = row[0].strip(), row[1].strip()
            if split not in ("train", "val"):
                raise FileFormatError(f"{path}:{line_no}: split must be train or val, got {split!r}")
            try:
                n_frames = int(row[6])
            except ValueError:
                raise ParseError(f"{path}:{line_no}: non-numeric n_frames {row[6]!r}") from None
            if n_frames < 1:
                raise FileFormatError(f"{path}:{line_no}: n_frames must be ≥ 1, got {n_frames}")

            def resolve(cell: str) -> Path | None:
                cell = cell.strip()
                if not cell:
                    return None
                p = Path(cell)
                return p if p.is_absolute() else base / p

            rows.append(
                ManifestRow(
                    video_id=video_id,
                    split=split,
                    audio_path=resolve(row[2]),
                    expnet_path=resolve(row[3]),
                    facepose_path=resolve(row[4]),
                    label_path=resolve(row[5]),
                    n_frames=n_frames,
                )
            )
    return rows


def window_starts(n_frames: int, seq_len: int = SEQUENCE_LEN, overlap: int = SEQUENCE_OVERLAP) -> list[int]:
    """Window start indices: a regular hop-10 grid plus an anchored final window.

    Tracks shorter than ``seq_len`` get a single window at 0 (padded later).
    """
    if n_frames < 1:
        raise DomainError(f"n_frames must be ≥ 1, got {n_frames}")
    if n_frames <= seq_len:
        return [0]
    hop = seq_len - overlap
    starts = list(range(0, n_frames - seq_len + 1, hop))
    last = n_frames - seq_len
    if starts[-1] != last:
        starts.append(last)
    return starts


def build_windows(
    features: dict[str, FeatureTrack],
    labels: LabelTrack | None = None,
    seq_len: int = SEQUENCE_LEN,
    overlap: int = SEQUENCE_OVERLAP,
) -> list[SequenceWindow]:
    """Cut aligned tracks into SequenceWindows; short tracks edge-replicate and mask."""
    if not features:
        raise DomainError("at least one feature modality is required")
    lengths = {m: t.n_frames for m, t in features.items()}
    n_frames = next(iter(lengths.values()))
    if any(n != n_frames for n in lengths.values()):
        raise DomainError(f"feature tracks disagree on frame count: {lengths}")
    if labels is not None and labels.n_frames != n_frames:
        raise DomainError(
            f"labels have {labels.n_frames} frames but features have {n_frames}"
        )
    video_id = next(iter(features.values())).video_id

    if labels is not None:
        targets = labels.targets()
        valid = labels.valid
    else:
        targets = np.zeros((n_frames, 2))
        valid = np.ones(n_frames, dtype=bool)

    windows = []
    for start in window_starts(n_frames, seq_len, overlap):
        real = min(seq_len, n_frames - start)
        feat = {}
        for modality, track in features.items():
            block = track.data[start : start + real]
            if real < seq_len:
                pad = np.repeat(block[-1:], seq_len - real, axis=0)
                block = np.concatenate([block, pad], axis=0)
            feat[modality] = block
        tgt = np.zeros((seq_len, 2))
        tgt[:real] = targets[start : start + real]
        mask = np.zeros(seq_len, dtype=bool)
        mask[:real] = valid[start : start + real]
        windows.append(
            SequenceWindow(
                video_id=video_id, start_frame=start, features=feat, targets=tgt, mask=mask
            )
        )
    return windows


def compute_stats(tracks: list[FeatureTrack]) -> NormalizationStats:
    """Column mean/std per modality over the concatenated rows of ``tracks``.

    Standard deviations are population (1/N) and floored at 1e-8.
    """
    if not tracks:
        raise DomainError("cannot compute normalization statistics from zero tracks")
    stats = NormalizationStats()
    by_modality: dict[str, list[np.ndarray]] = {}
    for track in tracks:
        by_modality.setdefault(track.modality, []).append(track.data)
    for modality, blocks in by_modality.items():
        stacked = np.concatenate(blocks, axis=0)
        stats.mean[modality] = stacked.mean(axis=0)
        stats.std[modality] = np.maximum(stacked.std(axis=0), _STD_FLOOR)
    return stats


def normalize(track: FeatureTrack, stats: NormalizationStats) -> FeatureTrack:
    """Z-score a track's columns with its modality's training-split statistics."""
    if track.modality not in stats.mean:
        raise DomainError(f"no normalization statistics for modality {track.modality!r}")
    mean = stats.mean[track.modality]
    std = stats.std[track.modality]
    if mean.shape != (track.data.shape[1],):
        raise DomainError(
            f"stats width {mean.shape} does not match track width {track.data.shape[1]}"
        )
    return FeatureTrack(
        video_id=track.video_id,
        modality=track.modality,
        data=(track.data - mean) / np.maximum(std, _STD_FLOOR),
    )


def merge_window_predictions(
    windows: list[tuple[int, np.ndarray]], n_frames: int, seq_len: int = SEQUENCE_LEN
) -> np.ndarray:
    """Average per-frame predictions over every window covering each frame.

    Window positions past the track end (padding on short tracks) are ignored.
    Raises CoverageError if any frame is covered by no window.
    """
    if n_frames < 1:
        raise DomainError(f"n_frames must be ≥ 1, got {n_frames}")
    total = np.zeros((n_frames, 2))
    count = np.zeros(n_frames, dtype=np.int64)
    for start, block in windows:
        block = np.asarray(block, dtype=np.float64)
        if block.shape != (seq_len, 2):
            raise DomainError(f"window block must be [{seq_len} x 2], got {block.shape}")
        stop = min(start + seq_len, n_frames)
        if start < 0 or start >= n_frames:
            raise DomainError(f"window start {start} outside track of {n_frames} frames")
        total[start:stop] += block[: stop - start]
        count[start:stop] += 1
    if np.any(count == 0):
        missing = int(np.flatnonzero(count == 0)[0])
        raise CoverageError(f"frame {missing} is covered by no window")
    return total / count[:, None]

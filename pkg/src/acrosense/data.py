"""Recordings, corpora, manifest/CSV ingestion and athlete-disjoint splits."""

from __future__ import annotations

import csv
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

CHANNELS: tuple[str, ...] = (
    "acc_x", "acc_y", "acc_z",
    "gyr_x", "gyr_y", "gyr_z",
    "mag_x", "mag_y", "mag_z",
)
CSV_HEADER: tuple[str, ...] = ("t",) + CHANNELS
MANIFEST_KEYS = ("id", "athlete_id", "label", "sample_rate_hz", "path")


def channel_indices(names: Sequence[str] | None) -> tuple[int, ...]:
    """Resolve a channel mask (names, case-insensitive) to canonical indices."""
    if names is None:
        return tuple(range(len(CHANNELS)))
    out = []
    for name in names:
        key = str(name).strip().lower()
        if key not in CHANNELS:
            raise ValidationError(f"unknown channel {name!r}; expected one of {', '.join(CHANNELS)}")
        idx = CHANNELS.index(key)
        if idx in out:
            raise ValidationError(f"channel {name!r} listed twice")
        out.append(idx)
    if not out:
        raise ValidationError("channel mask is empty")
    return tuple(sorted(out))


@dataclass(frozen=True, eq=False)
class Recording:
    """One tumbling attempt: a (9, T) array in canonical channel order."""

    id: str
    athlete_id: str
    label: str
    sample_rate_hz: float
    channels: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.channels, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != len(CHANNELS):
            raise ValidationError(f"recording {self.id}: expected 9 channels, got shape {data.shape}")
        if data.shape[1] < 2:
            raise ValidationError(f"recording {self.id}: channels need at least 2 samples")
        if not np.all(np.isfinite(data)):
            raise ValidationError(f"recording {self.id}: NaN or Inf sample")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ValidationError(f"recording {self.id}: sample rate must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "channels", data)

    @property
    def length(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return (self.length - 1) / self.sample_rate_hz


@dataclass(frozen=True, eq=False)
class Corpus:
    recordings: tuple[Recording, ...]
    label_set: tuple[str, ...] = field(init=False)
    athlete_set: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        recs = tuple(self.recordings)
        ids = [r.id for r in recs]
        dupes = [i for i, c in Counter(ids).items() if c > 1]
        if dupes:
            raise ValidationError(f"duplicate recording ids: {', '.join(sorted(dupes)[:5])}")
        object.__setattr__(self, "recordings", recs)
        object.__setattr__(self, "label_set", tuple(sorted({r.label for r in recs})))
        object.__setattr__(self, "athlete_set", tuple(sorted({r.athlete_id for r in recs})))

    def __len__(self):
        return len(self.recordings)

    def __iter__(self):
        return iter(self.recordings)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.recordings]

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.recordings], dtype=object)

    @property
    def athletes(self) -> np.ndarray:
        return np.array([r.athlete_id for r in self.recordings], dtype=object)

    def label_counts(self) -> dict[str, int]:
        counts = Counter(r.label for r in self.recordings)
        return {label: counts[label] for label in self.label_set}

    def subset(self, ids: Iterable[str]) -> "Corpus":
        """Recordings with the given ids, in corpus order."""
        wanted = set(ids)
        missing = wanted - set(self.ids)
        if missing:
            raise ValidationError(f"unknown recording ids: {', '.join(sorted(missing)[:5])}")
        return Corpus(tuple(r for r in self.recordings if r.id in wanted))


@dataclass(frozen=True)
class SplitPlan:
    train_ids: tuple[str, ...]
    holdout_ids: tuple[str, ...]
    holdout_athletes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "train_ids": list(self.train_ids),
            "holdout_ids": list(self.holdout_ids),
            "holdout_athletes": list(self.holdout_athletes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(tuple(d["train_ids"]), tuple(d["holdout_ids"]), tuple(d["holdout_athletes"]))


# -- ingestion ---------------------------------------------------------------


def read_recording_csv(path: Path, rec_id: str) -> np.ndarray:
    """Parse one recording CSV into a (9, T) array in canonical order."""
    if not path.is_file():
        raise ValidationError(f"recording {rec_id}: file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"recording {rec_id}: empty file {path}") from None
        if sorted(header) != sorted(CSV_HEADER) or len(header) != len(CSV_HEADER):
            raise ValidationError(
                f"recording {rec_id}: {path} line 1: header must contain {','.join(CSV_HEADER)}, got {','.join(header)}"
            )
        order = [header.index(name) for name in CSV_HEADER]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ValidationError(
                    f"recording {rec_id}: {path} line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}"
                )
            try:
                values = [float(row[i]) for i in order]
            except ValueError:
                raise ValidationError(f"recording {rec_id}: {path} line {lineno}: malformed number") from None
            if not all(math.isfinite(v) for v in values):
                raise ValidationError(f"recording {rec_id}: {path} line {lineno}: NaN or Inf sample")
            if rows and values[0] <= rows[-1][0]:
                raise ValidationError(f"recording {rec_id}: {path} line {lineno}: time not increasing")
            rows.append(values)
    if len(rows) < 2:
        raise ValidationError(f"recording {rec_id}: {path} has fewer than 2 samples")
    return np.array(rows, dtype=np.float64)[:, 1:].T.copy()


def load_corpus(manifest_path) -> Corpus:
    """Load a manifest (JSON array) and every recording CSV it lists.

    Relative CSV paths are resolved against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ValidationError(f"manifest not found: {manifest_path}")
    try:
        entries = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {manifest_path}: invalid JSON ({exc})") from None
    if not isinstance(entries, list):
        raise ValidationError(f"manifest {manifest_path}: top level must be a JSON array")
    base = manifest_path.parent
    recordings = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or any(k not in entry for k in MANIFEST_KEYS):
            raise ValidationError(f"manifest entry {i}: needs keys {', '.join(MANIFEST_KEYS)}")
        rec_id = str(entry["id"])
        try:
            rate = float(entry["sample_rate_hz"])
        except (TypeError, ValueError):
            raise ValidationError(f"recording {rec_id}: sample_rate_hz is not a number") from None
        path = Path(entry["path"])
        if not path.is_absolute():
            path = base / path
        channels = read_recording_csv(path, rec_id)
        recordings.append(Recording(rec_id, str(entry["athlete_id"]), str(entry["label"]), rate, channels))
    return Corpus(tuple(recordings))


def write_corpus(corpus: Corpus, out_dir, float_format: str = ".8g") -> Path:
    """Write ``manifest.json`` plus one CSV per recording; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "recordings").mkdir(parents=True, exist_ok=True)
    manifest = []
    for rec in corpus:
        rel = f"recordings/{rec.id}.csv"
        t = np.arange(rec.length) / rec.sample_rate_hz
        lines = [",".join(CSV_HEADER)]
        data = np.vstack([t, rec.channels]).T
        for row in data:
            lines.append(",".join(format(float(v), float_format) for v in row))
        with open(out_dir / rel, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        manifest.append({
            "id": rec.id,
            "athlete_id": rec.athlete_id,
            "label": rec.label,
            "sample_rate_hz": rec.sample_rate_hz,
            "path": rel,
        })
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


# -- filtering and splitting ---------------------------------------------------


def filter_rare_labels(corpus: Corpus, min_count: int = 10) -> Corpus:
    """Drop every recording whose label occurs fewer than ``min_count`` times."""
    if min_count < 1:
        raise ValidationError("min_count must be >= 1")
    counts = Counter(r.label for r in corpus)
    kept = tuple(r for r in corpus if counts[r.label] >= min_count)
    if not kept:
        raise ValidationError(f"all labels rare: no label occurs at least {min_count} times")
    return Corpus(kept)


def make_split(
    corpus: Corpus,
    holdout_athlete_count: int,
    target_holdout_size: int,
    seed: int,
    max_candidates: int = 10_000,
) -> SplitPlan:
    """Pick holdout athletes whose recordings total closest to the target size.

    Candidate subsets are enumerated when there are at most ``max_candidates``
    of them, otherwise sampled with the seed. Candidates are visited in a
    seeded random order so ties resolve reproducibly. A candidate is feasible
    only if every label keeps at least one training recording.
    """
    athletes = corpus.athlete_set
    if holdout_athlete_count < 0 or holdout_athlete_count >= len(athletes):
        raise ValidationError(
            f"holdout_athlete_count must be in [0, {len(athletes) - 1}], got {holdout_athlete_count}"
        )
    owners: dict[str, set[str]] = {}
    for r in corpus:
        owners.setdefault(r.label, set()).add(r.athlete_id)
    thin = sorted(label for label, who in owners.items() if len(who) < 2)
    if thin:
        raise ValidationError(f"labels performed by fewer than two athletes: {', '.join(thin)}")

    if holdout_athlete_count == 0:
        return SplitPlan(tuple(corpus.ids), (), ())

    per_athlete = {a: Counter() for a in athletes}
    for r in corpus:
        per_athlete[r.athlete_id][r.label] += 1
    label_totals = Counter(r.label for r in corpus)
    rng = np.random.default_rng(seed)

    total = math.comb(len(athletes), holdout_athlete_count)
    if total <= max_candidates:
        candidates = list(itertools.combinations(range(len(athletes)), holdout_athlete_count))
        order = rng.permutation(len(candidates))
        candidates = [candidates[i] for i in order]
    else:
        seen = set()
        candidates = []
        while len(candidates) < max_candidates:
            pick = tuple(sorted(rng.choice(len(athletes), holdout_athlete_count, replace=False).tolist()))
            if pick not in seen:
                seen.add(pick)
                candidates.append(pick)

    best, best_gap = None, None
    blocking: Counter = Counter()
    for cand in candidates:
        held = Counter()
        for i in cand:
            held.update(per_athlete[athletes[i]])
        starved = [label for label in label_totals if held[label] >= label_totals[label]]
        if starved:
            blocking.update(starved)
            continue
        gap = abs(sum(held.values()) - target_holdout_size)
        if best_gap is None or gap < best_gap:
            best, best_gap = cand, gap
    if best is None:
        labels = ", ".join(sorted(blocking))
        raise ValidationError(f"no feasible holdout athlete set; labels left without training data: {labels}")

    chosen = {athletes[i] for i in best}
    train = tuple(r.id for r in corpus if r.athlete_id not in chosen)
    holdout = tuple(r.id for r in corpus if r.athlete_id in chosen)
    return SplitPlan(train, holdout, tuple(sorted(chosen)))

"""Fixed-length raw features: zero padding or linear resampling, then
per-channel standardisation fitted on the training rows only.

Also home of :class:`FeatureMatrix` and its binary container format::

    b"ACF1" | u32 rows | u32 cols | rows*cols float64 (LE, row-major) | JSON trailer
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import CHANNELS, Corpus, channel_indices
from .errors import ValidationError

DEFAULT_TARGET_LENGTH = 898
_MAGIC = b"ACF1"


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "interpolate"
    target_length: int = DEFAULT_TARGET_LENGTH
    normalization: str = "per_channel_zscore"
    channels: tuple[str, ...] = CHANNELS

    def __post_init__(self):
        if self.mode not in ("pad", "interpolate"):
            raise ValidationError(f"mode must be 'pad' or 'interpolate', got {self.mode!r}")
        if int(self.target_length) < 2:
            raise ValidationError("target_length must be >= 2")
        if self.normalization not in ("per_channel_zscore", "none"):
            raise ValidationError(f"unknown normalization {self.normalization!r}")
        channel_indices(self.channels)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """N x D matrix laid out channel-major, plus per-row provenance.

    ``row_meta`` holds ``(recording_id, athlete_id, label)`` per row.
    ``feature_layout`` always carries ``channels`` (names, in block order) and
    ``block_size``; ``norm_stats`` carries the per-channel ``mean``, ``std``
    and ``zero_variance`` flags used for standardisation.
    """

    values: np.ndarray
    row_meta: tuple[tuple[str, str, str], ...]
    feature_layout: dict = field(default_factory=dict)
    norm_stats: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError("feature values must be a 2-D matrix")
        if len(self.row_meta) != values.shape[0]:
            raise ValidationError("row_meta length does not match the number of rows")
        if not np.all(np.isfinite(values)):
            raise ValidationError("feature matrix contains NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_meta", tuple(tuple(m) for m in self.row_meta))

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return self.values.shape[0]

    @property
    def ids(self) -> list[str]:
        return [m[0] for m in self.row_meta]

    @property
    def groups(self) -> np.ndarray:
        return np.array([m[1] for m in self.row_meta], dtype=object)

    @property
    def labels(self) -> np.ndarray:
        return np.array([m[2] for m in self.row_meta], dtype=object)

    @property
    def label_set(self) -> tuple[str, ...]:
        return tuple(sorted({m[2] for m in self.row_meta}))

    @property
    def channel_names(self) -> list[str]:
        return list(self.feature_layout.get("channels", []))

    def channel_slices(self) -> list[slice]:
        """Column slice of each channel block, in layout order."""
        size = int(self.feature_layout["block_size"])
        return [slice(i * size, (i + 1) * size) for i in range(len(self.channel_names))]

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        return FeatureMatrix(
            self.values[rows], tuple(self.row_meta[i] for i in rows), self.feature_layout, self.norm_stats
        )

    def norm_hash(self) -> str:
        return stats_hash(self.norm_stats, self.feature_layout)

    # -- container I/O --------------------------------------------------------

    def to_bytes(self) -> bytes:
        n, d = self.values.shape
        trailer = json.dumps(
            {"row_meta": [list(m) for m in self.row_meta],
             "feature_layout": self.feature_layout,
             "norm_stats": self.norm_stats},
            sort_keys=True,
        ).encode("utf-8")
        return _MAGIC + struct.pack("<II", n, d) + self.values.astype("<f8").tobytes() + trailer

    @classmethod
    def from_bytes(cls, blob: bytes) -> "FeatureMatrix":
        if blob[:4] != _MAGIC:
            raise ValidationError("not a feature container (bad magic)")
        n, d = struct.unpack("<II", blob[4:12])
        end = 12 + 8 * n * d
        if len(blob) < end:
            raise ValidationError("feature container truncated")
        values = np.frombuffer(blob[12:end], dtype="<f8").reshape(n, d).astype(np.float64)
        try:
            meta = json.loads(blob[end:].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValidationError("feature container trailer is not valid JSON") from None
        return cls(values, tuple(tuple(m) for m in meta["row_meta"]), meta["feature_layout"], meta["norm_stats"])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "FeatureMatrix":
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"feature file not found: {path}")
        return cls.from_bytes(path.read_bytes())

    def to_csv(self, path) -> None:
        """Debug export: id, athlete, label, then one column per feature."""
        names = [f"{ch}_{j}" for ch in self.channel_names for j in range(int(self.feature_layout["block_size"]))]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(["id", "athlete_id", "label"] + names) + "\n")
            for meta, row in zip(self.row_meta, self.values):
                fh.write(",".join(list(meta) + [format(float(v), ".17g") for v in row]) + "\n")


def stats_hash(norm_stats: dict, feature_layout: dict | None = None) -> str:
    payload = json.dumps({"norm_stats": norm_stats, "layout": feature_layout or {}}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# -- per-channel transforms ------------------------------------------------------


def resample_linear(channel, target_length: int) -> np.ndarray:
    """Linear interpolation onto ``target_length`` evenly spaced positions.

    Sample k sits at input position k*(T-1)/(target_length-1), so both
    endpoints are reproduced exactly.
    """
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValidationError("resample_linear needs a 1-D sequence of length >= 2")
    if target_length < 2:
        raise ValidationError("target_length must be >= 2")
    positions = np.linspace(0.0, x.size - 1, int(target_length))
    out = np.interp(positions, np.arange(x.size, dtype=np.float64), x)
    out[0], out[-1] = x[0], x[-1]
    return out


def pad_zeros(channel, target_length: int) -> np.ndarray:
    """Append trailing zeros up to ``target_length``."""
    x = np.asarray(channel, dtype=np.float64)
    if x.size > target_length:
        raise ValidationError(f"sequence of length {x.size} exceeds target length {target_length}")
    out = np.zeros(int(target_length))
    out[: x.size] = x
    return out


def _resample_rows(block: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    fn = pad_zeros if cfg.mode == "pad" else resample_linear
    return np.stack([fn(row, cfg.target_length) for row in block])


# -- standardisation --------------------------------------------------------------


def fit_channel_stats(blocks: np.ndarray, fit_mask: np.ndarray) -> dict:
    """Per-channel mean/std over every sample of the fit rows.

    ``blocks`` has shape (N, C, L). A channel whose fit rows are (numerically)
    constant is flagged as zero-variance.
    """
    fit = blocks[fit_mask]
    if fit.shape[0] == 0:
        raise ValidationError("no rows to fit normalisation statistics on")
    means, stds, flags = [], [], []
    for c in range(blocks.shape[1]):
        vals = fit[:, c, :]
        mu = float(vals.mean())
        sd = float(np.sqrt(np.mean((vals - mu) ** 2)))
        zero = sd <= 1e-12 * max(1.0, abs(mu))
        means.append(mu)
        stds.append(sd)
        flags.append(bool(zero))
    return {"method": "per_channel_zscore", "mean": means, "std": stds, "zero_variance": flags}


def apply_channel_stats(blocks: np.ndarray, stats: dict) -> np.ndarray:
    out = np.empty_like(blocks)
    for c in range(blocks.shape[1]):
        if stats["zero_variance"][c]:
            out[:, c, :] = 0.0
        else:
            out[:, c, :] = (blocks[:, c, :] - stats["mean"][c]) / stats["std"][c]
    return out


def assemble(
    corpus: Corpus,
    blocks: np.ndarray,
    channels: Sequence[str],
    fit_rows,
    normalization: str,
    layout: dict,
) -> FeatureMatrix:
    """Standardise (N, C, L) blocks and flatten them channel-major."""
    fit_rows = list(fit_rows)
    ids = corpus.ids
    unknown = set(fit_rows) - set(ids)
    if unknown:
        raise ValidationError(f"fit_rows not in corpus: {', '.join(sorted(unknown)[:5])}")
    if normalization == "per_channel_zscore":
        fit_mask = np.isin(np.array(ids, dtype=object), np.array(fit_rows, dtype=object))
        stats = fit_channel_stats(blocks, fit_mask)
        blocks = apply_channel_stats(blocks, stats)
    else:
        stats = {"method": "none"}
    stats["channels"] = list(channels)
    layout = dict(layout, channels=list(channels), block_size=int(blocks.shape[2]))
    meta = tuple((r.id, r.athlete_id, r.label) for r in corpus)
    return FeatureMatrix(blocks.reshape(blocks.shape[0], -1), meta, layout, stats)


def build_features(corpus: Corpus, cfg: PipelineConfig, fit_rows) -> FeatureMatrix:
    """Raw time-domain features: (padded | resampled) channels, standardised."""
    idx = channel_indices(cfg.channels)
    names = [CHANNELS[i] for i in idx]
    blocks = np.stack([_resample_rows(r.channels[list(idx)], cfg) for r in corpus])
    layout = {"kind": "raw", "mode": cfg.mode, "target_length": int(cfg.target_length)}
    return assemble(corpus, blocks, names, fit_rows, cfg.normalization, layout)

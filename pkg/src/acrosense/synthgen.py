"""Seeded generator of labelled pseudo-IMU corpora.

Each recording is a quiet lead-in, a Hann-windowed burst of label-specific
sinusoids, and a quiet tail, on top of sensor offsets and Gaussian noise.
Rotational content dominates Gyr_X/Gyr_Y and vertical content Acc_Z.
Athletes modulate amplitude, tempo (a shared time warp) and phase.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import CHANNELS, Corpus, Recording, channel_indices
from .errors import ValidationError

DEFAULT_LABELS = ("BF", "BHS", "BL", "BT", "FW", "RO")

# Share of recordings per label (roughly the element mix of a cheer routine).
DEFAULT_LABEL_WEIGHTS = {"BF": 0.09, "BHS": 0.30, "BL": 0.14, "BT": 0.14, "FW": 0.09, "RO": 0.24}
# Fundamental movement frequency (Hz) and mean burst duration (s) per label.
DEFAULT_BASE_FREQ = {"BF": 1.5, "BHS": 3.0, "BL": 2.1, "BT": 2.4, "FW": 0.9, "RO": 3.8}
DEFAULT_DURATION_S = {"BF": 1.6, "BHS": 1.1, "BL": 1.5, "BT": 1.4, "FW": 2.0, "RO": 1.2}

CHANNEL_SCALE = np.array([4.0, 3.0, 12.0, 250.0, 350.0, 80.0, 8.0, 8.0, 8.0])
CHANNEL_OFFSET = np.array([0.0, 0.0, 9.81, 0.0, 0.0, 0.0, 20.0, -5.0, 40.0])


@dataclass(frozen=True)
class SynthConfig:
    n_athletes: int = 16
    labels: tuple[str, ...] = DEFAULT_LABELS
    n_recordings: int = 1102
    label_weights: dict = field(default_factory=lambda: dict(DEFAULT_LABEL_WEIGHTS))
    # Exact per-label counts; overrides n_recordings/label_weights when given.
    label_counts: dict | None = None
    base_freq_hz: dict = field(default_factory=lambda: dict(DEFAULT_BASE_FREQ))
    duration_s: dict = field(default_factory=lambda: dict(DEFAULT_DURATION_S))
    sample_rate_hz: float = 120.0
    lead_s: tuple[float, float] = (0.2, 0.6)
    min_samples: int = 180
    max_samples: int = 720
    noise_std: float = 0.5
    athlete_effects: bool = True
    amplitude_sigma: float = 0.2
    time_warp: float = 0.15
    phase_jitter: float = 0.3
    duration_jitter: float = 0.15
    # Per-athlete style component (fraction of channel scale) shared by all elements.
    athlete_signature: float = 0.25
    confusable_pairs: tuple[tuple[str, str], ...] = (("BL", "BT"), ("BL", "BHS"))
    coupling: float = 0.6
    repertoire_prob: float = 0.75
    # Channels that carry label information; others get one shared template.
    signal_channels: tuple[str, ...] | None = None
    template_seed: int = 1234
    seed: int = 0

    def __post_init__(self):
        if self.n_athletes < 2:
            raise ValidationError("need at least 2 athletes")
        if len(set(self.labels)) != len(self.labels) or not self.labels:
            raise ValidationError("labels must be non-empty and distinct")
        for name in ("noise_std", "amplitude_sigma", "time_warp", "phase_jitter", "duration_jitter", "coupling",
                     "athlete_signature"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.sample_rate_hz <= 0 or self.min_samples < 2 or self.max_samples < self.min_samples:
            raise ValidationError("invalid sample rate or duration bounds")
        for label in self.labels:
            if label not in self.base_freq_hz or label not in self.duration_s:
                raise ValidationError(f"label {label!r} needs base_freq_hz and duration_s entries")
            if self.base_freq_hz[label] <= 0 or self.duration_s[label] <= 0:
                raise ValidationError(f"label {label!r}: frequency and duration must be > 0")
        if self.label_counts is None and any(self.label_weights.get(l, 0) < 0 for l in self.labels):
            raise ValidationError("label weights must be >= 0")
        if self.signal_channels is not None:
            channel_indices(self.signal_channels)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown synth config keys: {', '.join(sorted(unknown))}")
        d = dict(d)
        for key in ("labels", "lead_s", "signal_channels"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if "confusable_pairs" in d:
            d["confusable_pairs"] = tuple(tuple(p) for p in d["confusable_pairs"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"synth config not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"synth config {path}: invalid JSON ({exc})") from None

    def to_dict(self) -> dict:
        return asdict(self)


def label_counts(cfg: SynthConfig) -> dict[str, int]:
    """Per-label recording counts (largest-remainder rounding of the weights)."""
    if cfg.label_counts is not None:
        counts = {l: int(cfg.label_counts.get(l, 0)) for l in cfg.labels}
        if any(c < 0 for c in counts.values()):
            raise ValidationError("label counts must be >= 0")
        return counts
    w = np.array([cfg.label_weights.get(l, 0.0) for l in cfg.labels], dtype=np.float64)
    if w.sum() <= 0:
        raise ValidationError("label weights sum to zero")
    raw = w / w.sum() * cfg.n_recordings
    counts = np.floor(raw).astype(int)
    short = cfg.n_recordings - counts.sum()
    for i in np.argsort(-(raw - counts), kind="stable")[:short]:
        counts[i] += 1
    return dict(zip(cfg.labels, counts.tolist()))


def templates(cfg: SynthConfig) -> dict[str, np.ndarray]:
    """Per-label (9, n_components, 2) arrays of (frequency Hz, amplitude)."""
    rng = np.random.default_rng(cfg.template_seed)
    ratio1 = rng.uniform(0.8, 1.6, size=len(CHANNELS))
    out = {}
    for label in cfg.labels:
        base = cfg.base_freq_hz[label]
        comps = np.empty((len(CHANNELS), 2, 2))
        comps[:, 0, 0] = base * ratio1
        comps[:, 0, 1] = CHANNEL_SCALE * rng.uniform(0.5, 1.0, size=len(CHANNELS))
        comps[:, 1, 0] = base * rng.uniform(1.5, 3.0, size=len(CHANNELS))
        comps[:, 1, 1] = 0.5 * CHANNEL_SCALE * rng.uniform(0.3, 1.0, size=len(CHANNELS))
        # Magnetometers see slow orientation changes only.
        comps[6:, :, 0] *= 0.25
        out[label] = comps
    # Each coupled label moves toward the mean of its partners' original templates.
    partners = {}
    for a, b in cfg.confusable_pairs:
        if a in out and b in out:
            partners.setdefault(a, []).append(b)
    original = {label: comps.copy() for label, comps in out.items()}
    for a, bs in partners.items():
        target = np.mean([original[b] for b in bs], axis=0)
        out[a] = (1.0 - cfg.coupling) * original[a] + cfg.coupling * target
    if cfg.signal_channels is not None:
        keep = list(channel_indices(cfg.signal_channels))
        shared = out[cfg.labels[0]].copy()
        for label in cfg.labels:
            mixed = shared.copy()
            mixed[keep] = out[label][keep]
            out[label] = mixed
    return out


def _assign_athletes(cfg: SynthConfig, counts: dict, rng) -> dict[str, list[int]]:
    """Athlete index for every recording of each label; >= 2 athletes per label."""
    n = cfg.n_athletes
    repertoire = rng.random((n, len(cfg.labels))) < cfg.repertoire_prob
    for j in range(len(cfg.labels)):
        while repertoire[:, j].sum() < 2:
            idle = np.flatnonzero(~repertoire[:, j])
            repertoire[rng.choice(idle), j] = True
    activity = np.exp(rng.normal(0.0, 0.3, size=n))
    out = {}
    for j, label in enumerate(cfg.labels):
        who = np.flatnonzero(repertoire[:, j])
        c = counts[label]
        if 0 < c < 2:
            raise ValidationError(f"label {label!r} needs at least 2 recordings to span 2 athletes")
        first = rng.permutation(who)[:2] if c else np.array([], dtype=int)
        p = activity[who] / activity[who].sum()
        rest = rng.choice(who, size=max(c - 2, 0), p=p) if c > 2 else np.array([], dtype=int)
        out[label] = np.concatenate([first, rest]).astype(int).tolist()
    return out


def _render(cfg, comps, n_samples, lead, burst, amp, warp, phases, rng, channel_offset):
    rate = cfg.sample_rate_hz
    t = np.arange(n_samples) / rate
    rel = t - lead
    inside = (rel >= 0) & (rel <= burst)
    window = np.where(inside, np.sin(np.pi * np.clip(rel, 0, burst) / burst) ** 2, 0.0)
    freqs = comps[:, :, 0] * warp
    amps = comps[:, :, 1] * amp
    waves = np.sin(2 * np.pi * freqs[:, :, None] * rel[None, None, :] + phases[:, :, None])
    signal = (amps[:, :, None] * waves).sum(axis=1) * window[None, :]
    signal += channel_offset[:, None]
    if cfg.noise_std > 0:
        signal += rng.normal(0.0, 1.0, size=signal.shape) * (cfg.noise_std * CHANNEL_SCALE)[:, None]
    return signal


def generate(cfg: SynthConfig | None = None) -> Corpus:
    """Build a corpus; a pure function of ``cfg`` (including its seed)."""
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    counts = label_counts(cfg)
    temps = templates(cfg)
    owners = _assign_athletes(cfg, counts, rng)
    effects = cfg.athlete_effects
    n = cfg.n_athletes
    amp = np.exp(rng.normal(0.0, cfg.amplitude_sigma, size=n)) if effects else np.ones(n)
    warp = 1.0 + rng.uniform(-cfg.time_warp, cfg.time_warp, size=n) if effects else np.ones(n)
    athlete_ids = [f"A{i + 1:02d}" for i in range(n)]
    style = np.zeros((n, len(CHANNELS), 1, 2))
    if effects and cfg.athlete_signature > 0:
        style[:, :, 0, 0] = rng.uniform(0.5, 5.0, size=(n, len(CHANNELS)))
        style[:, :, 0, 1] = cfg.athlete_signature * CHANNEL_SCALE * rng.uniform(0.5, 1.0, size=(n, len(CHANNELS)))

    jobs = [(label, a) for label in cfg.labels for a in owners[label]]
    order = rng.permutation(len(jobs))
    recordings = []
    for rec_no, j in enumerate(order):
        label, a = jobs[j]
        comps = temps[label]
        if effects and cfg.athlete_signature > 0:
            comps = np.concatenate([comps, style[a]], axis=1)
        rate = cfg.sample_rate_hz
        lo, hi = cfg.lead_s
        if effects:
            lead = rng.uniform(lo, hi)
            tail = rng.uniform(lo, hi)
            jitter = rng.uniform(-cfg.duration_jitter, cfg.duration_jitter)
            phases = cfg.phase_jitter * rng.uniform(0, 2 * np.pi, size=comps.shape[:2])
        else:
            # Only the quiet tail varies, so a label's recordings share their common prefix.
            lead, jitter = lo, 0.0
            tail = rng.uniform(lo, hi)
            phases = np.zeros(comps.shape[:2])
        burst = cfg.duration_s[label] / warp[a] * (1.0 + jitter)
        n_samples = int(round((lead + burst + tail) * rate)) + 1
        n_samples = int(np.clip(n_samples, cfg.min_samples, cfg.max_samples))
        burst = max(min(burst, (n_samples - 1) / rate - lead), 2.0 / rate)
        signal = _render(cfg, comps, n_samples, lead, burst, amp[a], warp[a], phases, rng, CHANNEL_OFFSET)
        recordings.append(Recording(f"r{rec_no:04d}", athlete_ids[a], label, rate, signal))
    return Corpus(tuple(recordings))

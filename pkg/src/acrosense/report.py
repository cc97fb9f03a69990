"""EvalReport assembly and its on-disk forms (eval.json, confusion.csv, SVG plots)."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

REPORT_KEYS = (
    "scheme", "kernel", "cv_accuracy_mean", "cv_accuracy_std", "holdout_accuracy",
    "label_order", "confusion_matrix", "learning_curve", "importance", "seeds",
    "config_hash", "config",
)


@dataclass
class EvalReport:
    scheme: str
    kernel: dict
    cv_accuracy_mean: float | None
    cv_accuracy_std: float | None
    holdout_accuracy: float | None
    label_order: list[str]
    confusion_matrix: list[list[int]]
    learning_curve: list[dict] = field(default_factory=list)
    importance: list[dict] = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def check(self) -> None:
        cm = np.asarray(self.confusion_matrix)
        if cm.size and self.holdout_accuracy is not None:
            if abs(np.trace(cm) / cm.sum() - self.holdout_accuracy) > 1e-12:
                raise ValidationError("confusion matrix trace does not match holdout accuracy")
        for name in ("cv_accuracy_mean", "holdout_accuracy"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} outside [0, 1]")

    def to_dict(self) -> dict:
        values = {
            "scheme": self.scheme,
            "kernel": self.kernel,
            "cv_accuracy_mean": self.cv_accuracy_mean,
            "cv_accuracy_std": self.cv_accuracy_std,
            "holdout_accuracy": self.holdout_accuracy,
            "label_order": list(self.label_order),
            "confusion_matrix": [list(map(int, row)) for row in self.confusion_matrix],
            "learning_curve": self.learning_curve,
            "importance": self.importance,
            "seeds": self.seeds,
            "config_hash": self.config_hash,
            "config": self.config,
        }
        return {k: values[k] for k in REPORT_KEYS}

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def write(self, out_dir) -> None:
        self.check()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(self.to_json(), encoding="utf-8")
        if self.confusion_matrix:
            write_confusion_csv(out / "confusion.csv", self.confusion_matrix, self.label_order)


def _encode(value, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return "null"
        text = format(v, ".17g")
        # Keep floats recognisable as floats ("1" -> "1.0").
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        seq = list(value)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.number, bool)) or v is None for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def dumps(value, indent: int = 2) -> str:
    """JSON with insertion-ordered keys and floats printed to 17 significant digits."""
    return _encode(value, indent, 0) + "\n"


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_confusion_csv(path, matrix, label_order) -> None:
    lines = ["true\\predicted," + ",".join(label_order)]
    for label, row in zip(label_order, matrix):
        lines.append(label + "," + ",".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_confusion_csv(path):
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    order = lines[0].split(",")[1:]
    matrix = [[int(v) for v in line.split(",")[1:]] for line in lines[1:]]
    return order, matrix


# -- SVG plots -------------------------------------------------------------------------------


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "acrosense"
    return plt


def _save(fig, plt, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_learning_curves(path, curves: dict) -> None:
    """``curves`` maps a scheme name to a list of curve-point dicts."""
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, points in curves.items():
        pts = [p for p in points if not p.get("degenerate")]
        if not pts:
            continue
        x = np.array([p["train_size"] for p in pts])
        m = np.array([p["mean_accuracy"] for p in pts])
        s = np.array([p["std_accuracy"] for p in pts])
        ax.plot(x, m, marker="o", label=name)
        ax.fill_between(x, m - s, m + s, alpha=0.25)
    ax.set_xlabel("training set size")
    ax.set_ylabel("holdout accuracy")
    ax.legend()
    fig.tight_layout()
    _save(fig, plt, path)


def plot_importance(path, importance: list[dict]) -> None:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    names = [d["channel"] for d in importance]
    ax.bar(names, [d["mean_drop"] for d in importance], yerr=[d["std_drop"] for d in importance], capsize=3)
    ax.set_ylabel("accuracy drop")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    _save(fig, plt, path)


def plot_projection(path, projected, assignments, ratios) -> None:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.scatter(projected[:, 0], projected[:, 1] if projected.shape[1] > 1 else np.zeros(len(projected)),
               c=assignments, cmap="tab10", s=8)
    ax.set_xlabel(f"PC1 ({ratios[0]:.1%})")
    if len(ratios) > 1:
        ax.set_ylabel(f"PC2 ({ratios[1]:.1%})")
    fig.tight_layout()
    _save(fig, plt, path)

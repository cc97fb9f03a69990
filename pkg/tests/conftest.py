import numpy as np
import pytest

from acrosense.data import Corpus, Recording
from acrosense.synthgen import SynthConfig, generate


def make_recording(rec_id, athlete, label, length=50, seed=0, rate=120.0):
    rng = np.random.default_rng(seed)
    return Recording(rec_id, athlete, label, rate, rng.normal(size=(9, length)))


@pytest.fixture(scope="session")
def small_cfg():
    return SynthConfig(n_athletes=8, n_recordings=150, seed=3)


@pytest.fixture(scope="session")
def small_corpus(small_cfg):
    return generate(small_cfg)


@pytest.fixture
def tiny_corpus():
    recs = [make_recording(f"r{i}", f"A{i % 3}", "AB"[i % 2], 40 + i, seed=i) for i in range(12)]
    return Corpus(tuple(recs))


def make_features(X, labels, groups=None, channels=None):
    """FeatureMatrix straight from arrays, one block per channel name."""
    from acrosense.preprocess import FeatureMatrix

    X = np.asarray(X, dtype=float)
    groups = groups if groups is not None else [f"A{i % 4}" for i in range(len(X))]
    channels = channels or ["f"]
    meta = [(f"r{i:04d}", str(g), str(l)) for i, (g, l) in enumerate(zip(groups, labels))]
    layout = {"kind": "test", "channels": list(channels), "block_size": X.shape[1] // len(channels)}
    return FeatureMatrix(X, meta, layout, {"method": "none", "channels": list(channels)})


def two_blobs(n_per=15, d=3, gap=6.0, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(size=(n_per, d)), rng.normal(size=(n_per, d)) + gap])
    return X, ["P"] * n_per + ["Q"] * n_per


# Acceptance results, printed as one line per criterion after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])

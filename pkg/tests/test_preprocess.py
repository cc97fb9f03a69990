import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from acrosense.data import Corpus, Recording
from acrosense.errors import ValidationError
from acrosense.preprocess import FeatureMatrix, PipelineConfig, build_features, pad_zeros, resample_linear

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def piecewise_linear(x, positions):
    """Independent evaluation of the interpolant through (i, x[i])."""
    out = []
    for p in positions:
        i = min(int(np.floor(p)), len(x) - 2)
        w = p - i
        out.append((1 - w) * x[i] + w * x[i + 1])
    return np.array(out)


def test_resample_constant():
    np.testing.assert_array_equal(resample_linear([5, 5, 5], 898), np.full(898, 5.0))


def test_resample_ramp():
    np.testing.assert_allclose(resample_linear([0, 1, 2, 3], 7), [0, 0.5, 1, 1.5, 2, 2.5, 3], atol=1e-15)


def test_resample_round_trip_matches_oracle():
    rng = np.random.default_rng(11)
    x = rng.normal(size=137)
    up = resample_linear(x, 898)
    back = resample_linear(up, 137)
    # Oracle: evaluate the upsampled polyline at the original abscissae directly.
    positions = np.arange(137) * (898 - 1) / (137 - 1)
    expected = piecewise_linear(up, positions)
    np.testing.assert_allclose(back, expected, atol=1e-12)
    # The upsampled curve passes near the original samples, within the local curvature error.
    assert np.max(np.abs(back - x)) < np.max(np.abs(np.diff(x, 2)))


def test_resample_errors():
    with pytest.raises(ValidationError):
        resample_linear([1.0], 5)
    with pytest.raises(ValidationError):
        resample_linear([1.0, 2.0], 1)


@given(arrays(np.float64, st.integers(2, 200), elements=finite), st.integers(2, 400))
@settings(max_examples=100, deadline=None)
def test_resample_bounds_and_endpoints(x, target):
    out = resample_linear(x, target)
    assert len(out) == target
    assert out[0] == x[0] and out[-1] == x[-1]
    assert out.min() >= x.min() and out.max() <= x.max()


def test_pad_zeros():
    np.testing.assert_array_equal(pad_zeros([1, 2], 5), [1, 2, 0, 0, 0])
    np.testing.assert_array_equal(pad_zeros([3, 4, 5], 3), [3, 4, 5])
    with pytest.raises(ValidationError):
        pad_zeros([1, 2, 3], 2)


def test_pad_longest_recording_unchanged(small_corpus):
    longest = max(small_corpus, key=lambda r: r.length)
    for ch in longest.channels:
        np.testing.assert_array_equal(pad_zeros(ch, longest.length), ch)


def _corpus(rows):
    return Corpus(tuple(Recording(f"r{i}", f"A{i}", "L", 100.0, r) for i, r in enumerate(rows)))


def test_build_features_dimension_without_normalisation():
    rng = np.random.default_rng(0)
    corpus = _corpus([rng.normal(size=(9, 300))])
    fm = build_features(corpus, PipelineConfig(normalization="none"), corpus.ids)
    assert fm.shape == (1, 8082)
    np.testing.assert_array_equal(fm.values[0, :898], resample_linear(corpus.recordings[0].channels[0], 898))


def test_identical_recordings_zero_variance():
    base = np.random.default_rng(1).normal(size=(9, 50))
    corpus = _corpus([base, base.copy(), base.copy()])
    fm = build_features(corpus, PipelineConfig(target_length=50), corpus.ids)
    # Each channel still varies over time, so only truly constant channels are flagged.
    assert not any(fm.norm_stats["zero_variance"])
    flat = np.ones((9, 50))
    corpus = _corpus([flat, flat.copy()])
    fm = build_features(corpus, PipelineConfig(target_length=20), corpus.ids)
    assert all(fm.norm_stats["zero_variance"])
    assert np.all(fm.values == 0.0)


def test_train_only_statistics(small_corpus):
    ids = small_corpus.ids
    train, hold = ids[:100], ids[100:]
    fm = build_features(small_corpus, PipelineConfig(target_length=200), train)
    blocks = fm.values.reshape(len(fm), 9, 200)
    pos = {rid: i for i, rid in enumerate(fm.ids)}
    tr = blocks[[pos[i] for i in train]]
    ho = blocks[[pos[i] for i in hold]]
    for c in range(9):
        assert abs(tr[:, c].mean()) < 1e-10
        assert abs(tr[:, c].std() - 1.0) < 1e-10
    holdout_means = np.abs(ho.mean(axis=(0, 2)))
    assert holdout_means.max() > 1e-6


def test_determinism_and_layout(small_corpus):
    cfg = PipelineConfig(mode="interpolate", target_length=64, channels=("gyr_y", "acc_z"))
    a = build_features(small_corpus, cfg, small_corpus.ids)
    b = build_features(small_corpus, cfg, small_corpus.ids)
    assert a.to_bytes() == b.to_bytes()
    assert a.channel_names == ["acc_z", "gyr_y"]
    assert a.shape[1] == 128
    assert a.channel_slices()[1] == slice(64, 128)


def test_pad_mode(small_corpus):
    longest = max(r.length for r in small_corpus)
    fm = build_features(small_corpus, PipelineConfig(mode="pad", target_length=longest, normalization="none"),
                        small_corpus.ids)
    rec = small_corpus.recordings[0]
    np.testing.assert_array_equal(fm.values[0, :rec.length], rec.channels[0])
    assert np.all(fm.values[0, rec.length:longest] == 0)
    with pytest.raises(ValidationError):
        build_features(small_corpus, PipelineConfig(mode="pad", target_length=longest - 1), small_corpus.ids)


def test_config_and_fit_row_validation(small_corpus):
    with pytest.raises(ValidationError):
        PipelineConfig(mode="stretch")
    with pytest.raises(ValidationError):
        PipelineConfig(target_length=1)
    with pytest.raises(ValidationError):
        build_features(small_corpus, PipelineConfig(target_length=8), ["nope"])


def test_container_round_trip(tmp_path, small_corpus):
    fm = build_features(small_corpus, PipelineConfig(target_length=16), small_corpus.ids[:50])
    path = tmp_path / "f.acf"
    fm.save(path)
    blob = path.read_bytes()
    assert blob[:4] == b"ACF1"
    assert int.from_bytes(blob[4:8], "little") == len(fm)
    assert int.from_bytes(blob[8:12], "little") == 144
    back = FeatureMatrix.load(path)
    np.testing.assert_array_equal(back.values, fm.values)
    assert back.row_meta == fm.row_meta
    assert back.norm_hash() == fm.norm_hash()
    fm.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert len(lines) == len(fm) + 1 and lines[0].startswith("id,athlete_id,label,acc_x_0")
    with pytest.raises(ValidationError):
        FeatureMatrix.from_bytes(b"NOPE" + blob[4:])

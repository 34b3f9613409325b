import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmdnet.core import make_rng
from vmdnet.errors import InputError
from vmdnet.pipeline.preprocess import Dataset
from vmdnet.vmd import ModeSet, VmdConfig, vmd_decompose, vmd_features, vmd_reconstruct

N = 1024
T = np.arange(N)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def fft_peak_frequency(x):
    spec = np.abs(np.fft.rfft(x))
    spec[0] = 0.0
    return np.fft.rfftfreq(len(x))[np.argmax(spec)]


def band_pass(x, lo, hi):
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(len(x))
    spec[(f < lo) | (f >= hi)] = 0.0
    return np.fft.irfft(spec, len(x))


def test_pure_tone():
    x = np.sin(2 * np.pi * 0.05 * T)
    m = vmd_decompose(x, VmdConfig(k_modes=1))
    ref = fft_peak_frequency(x)
    assert abs(ref - 0.05) < 1e-3
    assert abs(m.center_freqs[0] - ref) / ref <= 0.05
    assert rel_err(m.modes[0], x) <= 0.05


@pytest.fixture(scope="module")
def two_tone():
    low = np.sin(2 * np.pi * 0.02 * T)
    high = np.sin(2 * np.pi * 0.2 * T)
    x = low + high
    return x, low, high, vmd_decompose(x, VmdConfig(k_modes=2))


def test_two_tone_centers(two_tone):
    _, _, _, m = two_tone
    for got, want in zip(m.center_freqs, (0.02, 0.2)):
        assert abs(got - want) / want <= 0.10


def test_two_tone_modes_match_tones(two_tone):
    x, low, high, m = two_tone
    for mode, tone in zip(m.modes, (low, high)):
        assert np.corrcoef(mode, tone)[0, 1] > 0.95
    # the band-pass split of the input is an independent reference for each mode
    split = 0.5 * (0.02 + 0.2)
    assert np.corrcoef(m.modes[0], band_pass(x, 0.0, split))[0, 1] > 0.95
    assert np.corrcoef(m.modes[1], band_pass(x, split, 0.51))[0, 1] > 0.95


def test_two_tone_reconstruction_and_orthogonality(two_tone):
    x, _, _, m = two_tone
    assert rel_err(vmd_reconstruct(m), x) <= 1e-2
    a, b = m.modes
    assert abs(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)) <= 0.1


def test_constant_signal_zero_init():
    x = np.full(256, 3.0)
    m = vmd_decompose(x, VmdConfig(k_modes=1, init_scheme="zero"))
    assert m.center_freqs[0] == pytest.approx(0.0, abs=1e-3)
    np.testing.assert_allclose(m.modes[0], x, rtol=0, atol=1e-6)


def test_modes_sorted_and_in_range():
    rng = np.random.default_rng(0)
    x = rng.normal(size=300)
    m = vmd_decompose(x, VmdConfig(k_modes=4, alpha=5.0))
    assert np.all(np.diff(m.center_freqs) >= 0)
    assert np.all((m.center_freqs >= 0) & (m.center_freqs <= 0.5))
    assert m.modes.shape == (4, 300)


def test_converged_flag_matches_change():
    x = np.sin(2 * np.pi * 0.1 * np.arange(200))
    m = vmd_decompose(x, VmdConfig(k_modes=1))
    assert m.converged and m.final_change <= 1e-7
    capped = vmd_decompose(x, VmdConfig(k_modes=2, max_iter=2))
    assert capped.iterations_used == 2
    assert capped.converged == (capped.final_change <= 1e-7)


@pytest.mark.parametrize("scheme", ["zero", "uniform-spread"])
def test_bit_identical_without_rng(scheme):
    x = np.random.default_rng(8).normal(size=150)
    cfg = VmdConfig(k_modes=2, alpha=5.0, init_scheme=scheme)
    a, b = vmd_decompose(x, cfg), vmd_decompose(x, cfg)
    assert a.modes.tobytes() == b.modes.tobytes()
    assert a.center_freqs.tobytes() == b.center_freqs.tobytes()


def test_deterministic():
    rng = np.random.default_rng(3)
    x = rng.normal(size=128)
    cfg = VmdConfig(k_modes=3, alpha=5.0, init_scheme="random")
    a = vmd_decompose(x, cfg, make_rng(5))
    b = vmd_decompose(x, cfg, make_rng(5))
    np.testing.assert_array_equal(a.modes, b.modes)
    np.testing.assert_array_equal(a.center_freqs, b.center_freqs)


@pytest.mark.parametrize("x,k", [(np.ones(10), 6), (np.ones(5), 1)])
def test_too_short_or_too_many_modes(x, k):
    with pytest.raises(InputError):
        vmd_decompose(x, VmdConfig(k_modes=k))


def test_non_finite_rejected():
    x = np.ones(64)
    x[10] = np.nan
    with pytest.raises(InputError):
        vmd_decompose(x)


@pytest.mark.parametrize("kwargs", [{"k_modes": 0}, {"alpha": 0.0}, {"tau": -1.0}, {"init_scheme": "bogus"}])
def test_bad_config(kwargs):
    with pytest.raises(InputError):
        VmdConfig(**kwargs)


@settings(max_examples=15, deadline=None)
@given(st.integers(16, 200), st.integers(1, 3), st.integers(0, 2**31))
def test_reconstruction_tracks_input(n, k, seed):
    x = np.random.default_rng(seed).normal(size=n)
    m = vmd_decompose(x, VmdConfig(k_modes=k, alpha=5.0))
    assert np.all(np.isfinite(m.modes))
    assert rel_err(vmd_reconstruct(m), x) <= 0.05


class TestReconstruct:
    def test_single_mode_identity(self):
        mode = np.arange(10.0)
        m = ModeSet(modes=mode[None, :], center_freqs=np.array([0.1]), iterations_used=1, converged=True)
        np.testing.assert_array_equal(vmd_reconstruct(m), mode)

    def test_zero_modes(self):
        m = ModeSet(modes=np.zeros((3, 16)), center_freqs=np.zeros(3), iterations_used=1, converged=True)
        np.testing.assert_array_equal(vmd_reconstruct(m), np.zeros(16))


def small_dataset(n=64, seed=0, wide=False):
    rng = np.random.default_rng(seed)
    narrow = rng.random((n, 3))
    cols = ["a", "b", "sex"]
    kinds = ["continuous", "continuous", "categorical"]
    groups = [("g0", [0, 1, 2])]
    blocks = [narrow]
    if wide:
        blocks.append(np.sin(2 * np.pi * 0.2 * np.arange(10))[None, :] + 0.1 * rng.random((n, 10)))
        cols += [f"w{i}" for i in range(10)]
        kinds += ["continuous"] * 10
        groups.append(("g1", list(range(3, 13))))
    feats = np.column_stack(blocks)
    feats[:, 2] = (feats[:, 2] > 0.5).astype(float)
    return Dataset(features=feats, labels=rng.integers(0, 2, n), columns=cols, kinds=kinds, groups=groups)


class TestFeatures:
    def test_k1_reconstructs_column(self):
        d = small_dataset()
        out = vmd_features(d, ["a"], VmdConfig(k_modes=1, alpha=5.0))
        assert out.columns == ["a_mode1", "b", "sex"]
        assert rel_err(out.features[:, 0], d.features[:, 0]) <= 0.05

    def test_empty_selection(self):
        d = small_dataset()
        assert vmd_features(d, [], VmdConfig()) is d

    def test_k3_adds_two_columns(self):
        d = small_dataset()
        out = vmd_features(d, ["b"], VmdConfig(k_modes=3, alpha=5.0))
        assert out.features.shape[1] == d.features.shape[1] + 2
        assert out.columns == ["a", "b_mode1", "b_mode2", "b_mode3", "sex"]
        assert out.groups == [("g0", [0, 1, 2, 3, 4])]
        # the modes still sum back to the column
        assert rel_err(out.features[:, 1:4].sum(axis=1), d.features[:, 1]) <= 0.05

    def test_categorical_rejected(self):
        with pytest.raises(InputError):
            vmd_features(small_dataset(), ["sex"], VmdConfig())

    def test_unknown_rejected(self):
        with pytest.raises(InputError):
            vmd_features(small_dataset(), ["nope"], VmdConfig())

    def test_wide_group_decomposes_each_record(self):
        d = small_dataset(wide=True)
        cfg = VmdConfig(k_modes=2, alpha=5.0)
        out = vmd_features(d, ["w4"], cfg)
        assert out.features.shape[1] == d.features.shape[1] + 1
        j = out.columns.index("w4_mode1")
        row = d.features[7, 3:13]
        ref = vmd_decompose(row, cfg).modes[:, 4]
        np.testing.assert_allclose(out.features[7, j:j + 2], ref, rtol=0, atol=1e-12)
        assert out.group_of("w4_mode2")[0] == 1

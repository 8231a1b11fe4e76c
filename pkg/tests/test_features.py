import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advaudio.audio_io import Waveform
from advaudio.diffgraph import Tensor, grad_check, ops
from advaudio.features import (
    FrontendConfig,
    LogmelFrontend,
    hz_to_mel,
    logmel_forward,
    mel_filterbank,
    spectrogram_to_pgm,
)


def test_filterbank_shape_and_support():
    fb = mel_filterbank(FrontendConfig())
    assert fb.shape == (64, 513)
    assert (fb >= 0).all()
    assert (fb.sum(axis=1) > 0).all()
    # each FFT bin sits under at most two triangles
    assert ((fb > 0).sum(axis=0)).max() <= 2
    # neighbouring filters overlap
    assert all(((fb[i] > 0) & (fb[i + 1] > 0)).any() for i in range(63))


def test_filterbank_too_many_mels():
    with pytest.raises(ValueError):
        FrontendConfig(window_size=64, n_mels=40)
    with pytest.raises(ValueError):
        mel_filterbank(FrontendConfig(window_size=64, n_mels=33))


def test_config_invariants():
    with pytest.raises(ValueError):
        FrontendConfig(hop=2048)
    with pytest.raises(ValueError):
        FrontendConfig(log_floor=0.0)


def test_silence_is_log_floor_before_normalisation():
    front = LogmelFrontend()
    x = Tensor(np.zeros((1, 4096)))
    out, stats = front.graph(x)
    np.testing.assert_allclose(out.data * stats.norm_constant, np.log(1e-10))
    np.testing.assert_allclose(out.data, -1.0)


def test_sine_energy_lands_in_its_mel_band():
    cfg = FrontendConfig()
    t = np.arange(32000) / 32000
    spec = logmel_forward(Waveform(np.sin(2 * np.pi * 1000 * t), 32000), cfg)
    fb = mel_filterbank(cfg)
    band = int(np.argmax(fb[:, int(round(1000 * 1024 / 32000))]))
    assert spec.values.shape == (61, 64)
    assert (np.argmax(spec.values, axis=1) == band).all()


def test_normalised_max_abs_is_one():
    x = np.random.default_rng(0).uniform(-0.5, 0.5, 8000)
    spec = logmel_forward(Waveform(x, 32000))
    assert np.isclose(np.abs(spec.values).max(), 1.0)


def test_wrong_rate_and_short_clip():
    with pytest.raises(ValueError):
        logmel_forward(Waveform(np.zeros(4000), 16000))
    with pytest.raises(ValueError):
        logmel_forward(Waveform(np.zeros(1000), 32000))


@settings(max_examples=50, deadline=None)
@given(st.integers(1024, 20000))
def test_frame_count_formula(m):
    out = LogmelFrontend().transform(np.zeros((1, m)))
    assert out.shape[1] == (m - 1024) // 512 + 1


def test_scaling_shifts_log_power():
    cfg = FrontendConfig()
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.4, 0.4, 4096)
    front = LogmelFrontend()
    a, sa = front.graph(Tensor(x[None]))
    b, sb = front.graph(Tensor(2 * x[None]))
    la, lb = a.data * sa.norm_constant, b.data * sb.norm_constant
    np.testing.assert_allclose(lb - la, np.log(4.0), atol=1e-6)
    assert cfg.log_floor == 1e-10


def test_frontend_matches_explicit_dft_matmul():
    cfg = FrontendConfig(window_size=256, hop=128, n_mels=20, sample_rate=8000)
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, 2048)
    front = LogmelFrontend(**{k: getattr(cfg, k) for k in ("sample_rate", "window_size", "hop", "n_mels")})
    got = front.transform(x[None])[0]
    cos, nsin = ops.dft_basis(256)
    idx = np.arange(256)[None, :] + 128 * np.arange((2048 - 256) // 128 + 1)[:, None]
    frames = x[idx] * (0.5 - 0.5 * np.cos(2 * np.pi * np.arange(256) / 256))
    power = (frames @ cos) ** 2 + (frames @ nsin) ** 2
    logmel = np.log(power @ mel_filterbank(cfg).T + 1e-10)
    np.testing.assert_allclose(got, logmel / np.abs(logmel).max(), atol=1e-10)


@pytest.mark.parametrize("standardize", [False, True])
def test_frontend_gradient_matches_finite_differences(standardize):
    front = LogmelFrontend(standardize=standardize)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x0 = rng.uniform(-0.8, 0.8, (1, 2560))
        _, frozen = front.graph(Tensor(x0))
        weights = Tensor(rng.normal(size=(1, 4, 64)))

        def f(t):
            out, _ = front.graph(t, frozen)
            return ops.sum(out * weights)

        coords = rng.choice(x0.size, 40, replace=False)
        assert grad_check(f, x0, h=1e-5, coords=coords) <= 1e-4


def test_gradient_of_sum_matches_finite_differences():
    front = LogmelFrontend()
    x0 = np.random.default_rng(9).uniform(-0.5, 0.5, (1, 2048))
    _, frozen = front.graph(Tensor(x0))
    f = lambda t: ops.sum(front.graph(t, frozen)[0])  # noqa: E731
    assert grad_check(f, x0, coords=np.arange(0, 2048, 37)) <= 1e-4


def test_pgm_export():
    vals = np.linspace(-1, 1, 6 * 4).reshape(6, 4)
    blob = spectrogram_to_pgm(vals)
    header, pixels = blob[:blob.index(b"255\n") + 4], blob[blob.index(b"255\n") + 4:]
    assert header == b"P5\n6 4\n255\n"
    arr = np.frombuffer(pixels, dtype=np.uint8)
    assert arr.min() == 0 and arr.max() == 255 and arr.size == 24


def test_mel_scale_is_htk():
    assert np.isclose(hz_to_mel(700.0), 2595 * np.log10(2))

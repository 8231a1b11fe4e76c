import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advaudio.audio_io import Waveform, default_class_specs, synthesize_dataset
from advaudio.diffgraph import Tensor, grad_check
from advaudio.models import (
    ARCHITECTURES,
    AudioClassifier,
    ClassScore,
    Constant,
    CrossEntropy,
    Margin,
    QueryOnly,
    build_model,
    load_checkpoint,
    model_from_bytes,
    model_to_bytes,
    predict,
    save_checkpoint,
    train,
)
from advaudio.models.checkpoint import CheckpointError
from advaudio.models.training import accuracy_csv

CLIP = 8192  # 0.256 s keeps the unit tests quick; networks pool over time


def clip(seed, n=CLIP, scale=0.5):
    return np.random.default_rng(seed).uniform(-scale, scale, n)


@pytest.fixture(scope="module")
def small_task():
    specs = [s for s in default_class_specs() if s.name in ("bass_drum", "cello", "hiss")]
    man, waves = synthesize_dataset(specs, per_class=8, seed=3)
    return man, waves


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_seeded_init_is_bit_identical(arch):
    a, b = build_model(arch, seed=5), build_model(arch, seed=5)
    assert model_to_bytes(a) == model_to_bytes(b)
    c = build_model(arch, seed=6)
    assert model_to_bytes(a) != model_to_bytes(c)


def test_invalid_construction():
    with pytest.raises(ValueError):
        build_model("vgg_mini", seed=0, n_classes=1)
    with pytest.raises(ValueError):
        build_model("resnet", seed=0)


def test_architecture_invariants():
    for arch in ARCHITECTURES:
        m = build_model(arch, seed=0)
        assert (m.input_mode == "raw") == (arch == "dense_wav_mini")
        assert m.multi_head == arch.startswith("dense")
        if m.multi_head:
            assert sum(k.startswith("head") and k.endswith(".w") for k in m.network_.params) == 8
        # widths stay within the miniature range
        for name, p in m.network_.params.items():
            if p.ndim >= 3:
                assert 8 <= p.shape[0] <= 32, name


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_untrained_model_is_near_chance(arch):
    m = build_model(arch, seed=1)
    X = np.random.default_rng(2).uniform(-0.5, 0.5, (100, CLIP))
    p = m.predict_proba(X)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert (p >= 0).all()
    assert p.max(axis=1).mean() <= 3.0 / m.n_classes


@pytest.mark.parametrize("arch", ["dense_mel_mini", "dense_wav_mini"])
def test_probabilities_are_mean_of_head_softmaxes(arch):
    m = build_model(arch, seed=0)
    X = np.stack([clip(s) for s in range(3)])
    heads = m.head_probabilities(X)
    assert len(heads) == 8
    np.testing.assert_allclose(m.predict_proba(X), np.mean(heads, axis=0), atol=1e-6)


def test_single_head_model_has_no_heads():
    with pytest.raises(ValueError):
        build_model("vgg_mini", 0).head_probabilities(clip(0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0), st.sampled_from(ARCHITECTURES))
def test_predict_proba_is_a_simplex(seed, scale, arch):
    p = build_model(arch, seed=0).predict_proba(clip(seed, scale=scale))
    assert np.isfinite(p).all() and (p >= 0).all()
    assert abs(p.sum() - 1.0) <= 1e-6


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_silence_gives_valid_output(arch):
    pred = predict(build_model(arch, 0), Waveform(np.zeros(CLIP), 32000))
    assert np.isfinite(pred.probs).all()
    assert abs(pred.probs.sum() - 1.0) <= 1e-6
    assert pred.label == int(np.argmax(pred.probs)) and pred.confidence == pred.probs[pred.label]


def test_prediction_ties_resolve_to_lowest_index():
    class Flat(AudioClassifier):
        def predict_proba(self, X):
            return np.full((1, 4), 0.25)

    assert predict(Flat(n_classes=4), Waveform(np.zeros(10), 32000)).label == 0


def test_wrong_sample_rate_rejected():
    m = build_model("vgg_mini", 0)
    with pytest.raises(ValueError, match="Hz"):
        m.predict_proba(Waveform(clip(0), 16000))
    with pytest.raises(ValueError, match="Hz"):
        m.input_gradient(Waveform(clip(0), 44100), CrossEntropy(0))


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_input_gradient_matches_finite_differences(arch):
    m = build_model(arch, seed=4).astype(np.float64)
    for seed in range(3):
        x0 = clip(seed)[None, :]
        frozen = m.frozen_stats(x0)
        coords = np.random.default_rng(seed).choice(CLIP, 12, replace=False)
        for loss in (CrossEntropy(seed % 8), Margin(1, 2)):
            f = lambda t: m.loss_tensor(t, loss, frozen)  # noqa: E731
            assert grad_check(f, x0, h=1e-6, coords=coords) <= 1e-4, (arch, seed, loss)
        _, g = m.input_gradient(x0[0], CrossEntropy(0))
        assert g.shape == (CLIP,)


def test_gradient_shape_follows_input():
    m = build_model("gcnn_mini", 0)
    _, g = m.input_gradient(Waveform(clip(1), 32000), ClassScore(3, "prob"))
    assert g.shape == (CLIP,)


def test_constant_loss_has_zero_gradient():
    for arch in ("vgg_mini", "dense_wav_mini"):
        value, g = build_model(arch, 0).input_gradient(clip(0), Constant(2.5))
        assert value == 2.5 and not g.any()


def test_unknown_class_rejected():
    m = build_model("crnn_mini", 0)
    for loss in (CrossEntropy(8), ClassScore(-1), Margin(0, 9)):
        with pytest.raises(ValueError):
            m.input_gradient(clip(0), loss)


def test_raw_model_gradient_is_dense():
    m = build_model("dense_wav_mini", seed=0).astype(np.float64)
    _, g = m.input_gradient(clip(11, n=32000), CrossEntropy(2))
    assert np.mean(g != 0) >= 0.99


def test_multi_head_cross_entropy_uses_log_average():
    m = build_model("dense_mel_mini", 0).astype(np.float64)
    x = clip(5)
    value, _ = m.input_gradient(x, CrossEntropy(3))
    assert np.isclose(value, -np.log(m.predict_proba(x)[0, 3] + 1e-12))


def test_jacobian_rows_match_margin_gradient():
    m = build_model("vgg_mini", 2).astype(np.float64)
    x = clip(3)
    z, p, J = m.logit_jacobian(x)
    assert J.shape == (8, CLIP)
    z2, _, g = m.margin_and_gradient(x, 4, 1)
    np.testing.assert_allclose(z, z2)
    np.testing.assert_allclose(g, J[4] - J[1], atol=1e-12)
    np.testing.assert_allclose(p, m.predict_proba(x)[0])


def test_one_class_dataset_learned_in_one_epoch():
    X = np.stack([clip(s) for s in range(12)])
    m = AudioClassifier("vgg_mini", n_classes=2, epochs=1, random_state=0).fit(X, np.zeros(12, int))
    assert m.score(X, np.zeros(12, int)) == 1.0


def test_training_reduces_loss_and_is_deterministic(small_task):
    man, waves = small_task
    runs = [train(AudioClassifier("vgg_mini", n_classes=3, epochs=2), man, waves, seed=7) for _ in range(2)]
    (m1, rep1), (m2, _) = runs
    assert rep1.loss_history[0] < rep1.initial_loss
    assert model_to_bytes(m1) == model_to_bytes(m2)
    # examples the report counted as correct are predicted as their label
    X = np.stack([w.samples for w, e in zip(waves, man.entries) if e.split == "train"])
    y = np.array([e.class_id for e in man.entries if e.split == "train"])
    correct = m1.predict(X) == y
    assert np.isclose(correct.mean(), rep1.train_accuracy)


def test_train_errors(small_task):
    man, waves = small_task
    with pytest.raises(ValueError, match="classes"):
        train(AudioClassifier("vgg_mini", n_classes=8, epochs=1), man, waves)
    with pytest.raises(ValueError):
        AudioClassifier("vgg_mini", epochs=1).fit(np.zeros((0, CLIP)), np.zeros(0, int))
    only_train = type(man)([e for e in man.entries if e.split == "train"], man.class_names)
    kept = [w for w, e in zip(waves, man.entries) if e.split == "train"]
    with pytest.raises(ValueError, match="empty"):
        train(AudioClassifier("vgg_mini", n_classes=3, epochs=1), only_train, kept)


def test_accuracy_csv_rows(small_task):
    man, waves = small_task
    _, rep = train(AudioClassifier("dense_wav_mini", n_classes=3, epochs=1), man, waves)
    lines = accuracy_csv([rep]).splitlines()
    assert lines[0] == "model,split,accuracy"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [["dense_wav_mini", "train"], ["dense_wav_mini", "test"]]
    assert all(len(ln.split(",")[2].split(".")[1]) == 6 for ln in lines[1:])


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_checkpoint_round_trip(arch, tmp_path):
    m = build_model(arch, seed=9, network_params=None)
    m.test_accuracy_ = 0.5
    path = tmp_path / f"{arch}.ckpt"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert model_to_bytes(back) == path.read_bytes()
    assert back.test_accuracy_ == 0.5
    x = clip(1)
    np.testing.assert_array_equal(back.predict_proba(x), m.predict_proba(x))


def test_checkpoint_custom_widths_and_corruption():
    m = build_model("vgg_mini", 1, network_params={"widths": (8, 12, 16)})
    blob = model_to_bytes(m)
    assert model_from_bytes(blob).network_.params["conv1.w"].shape == (12, 8, 3, 3)
    assert blob[:8] == b"ADVAUDIO"
    with pytest.raises(CheckpointError):
        model_from_bytes(b"NOTACKPT" + blob[8:])
    with pytest.raises(CheckpointError):
        model_from_bytes(blob[:-10])


def test_query_only_hides_gradients():
    q = QueryOnly(build_model("vgg_mini", 0))
    assert q.predict_proba(clip(0)).shape == (1, 8)
    assert not hasattr(q, "input_gradient")
    with pytest.raises(AttributeError):
        q.extra = 1


def test_tensor_inputs_stay_float64_after_astype():
    m = build_model("vgg_mini", 0).astype(np.float64)
    z, _, _ = m.forward(Tensor(clip(0)[None, :]))
    assert z.dtype == np.float64

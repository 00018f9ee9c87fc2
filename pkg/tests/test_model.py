import numpy as np
import pytest

from loopdiff.diffusion import DiffusionConfig, SimplexState, init_inference
from loopdiff.errors import NonFiniteActivation
from loopdiff.model import (
    Denoiser, DenoiserConfig, forward, init_params, time_features,
)
from loopdiff.rng import RngHub
from loopdiff.vocab import NUM_ATTRIBUTES


MINI = dict(layers=1, heads=2, hidden=8, ff=16, n_slots=4, time_dim=4)


@pytest.fixture(scope="module")
def mini(vocab):
    cfg = DenoiserConfig(**MINI, vocab_version=vocab.version)
    params = init_params(cfg, vocab, RngHub(0).stream("init"))
    return cfg, params


def _state(vocab, n, seed=0):
    return init_inference(DiffusionConfig(), vocab,
                          RngHub(seed).stream("state"), n)


def test_output_shapes(vocab, mini):
    cfg, params = mini
    state = _state(vocab, cfg.n_slots)
    den = Denoiser(params, cfg, vocab)
    out = den(state, 0.3)
    for a in range(NUM_ATTRIBUTES):
        assert out.parts[a].shape == (cfg.n_slots, vocab.sizes[a])
        assert np.isfinite(out.parts[a]).all()


def test_forward_batched_matches_single(vocab, mini):
    cfg, params = mini
    s1 = _state(vocab, cfg.n_slots, seed=1)
    s2 = _state(vocab, cfg.n_slots, seed=2)
    batch = [np.stack([a, b]) for a, b in zip(s1.parts, s2.parts)]
    out = forward(batch, np.array([0.2, 0.8]), params, cfg, vocab)
    den = Denoiser(params, cfg, vocab)
    one = den(s1, 0.2)
    two = den(s2, 0.8)
    for a in range(NUM_ATTRIBUTES):
        assert np.allclose(out[a].data[0], one.parts[a], atol=1e-12)
        assert np.allclose(out[a].data[1], two.parts[a], atol=1e-12)


def test_permutation_equivariance(vocab, mini):
    cfg, params = mini
    den = Denoiser(params, cfg, vocab)
    state = _state(vocab, cfg.n_slots, seed=3)
    out = den(state, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(5):
        perm = rng.permutation(cfg.n_slots)
        permuted = SimplexState([p[perm] for p in state.parts])
        out_p = den(permuted, 0.5)
        for a in range(NUM_ATTRIBUTES):
            assert np.allclose(out_p.parts[a], out.parts[a][perm], atol=1e-9)


def test_time_conditioning_changes_output(vocab, mini):
    cfg, params = mini
    den = Denoiser(params, cfg, vocab)
    state = _state(vocab, cfg.n_slots)
    a = den(state, 0.1)
    b = den(state, 0.9)
    assert not np.allclose(a.parts[0], b.parts[0])


def test_time_map_is_smooth(vocab, mini):
    # adjacent times give nearly identical outputs; the probe scale
    # matches the smoothness contract of the time features
    cfg, params = mini
    den = Denoiser(params, cfg, vocab)
    state = _state(vocab, cfg.n_slots)
    a = den(state, 0.5)
    b = den(state, 0.5 + 1e-6)
    for k in range(NUM_ATTRIBUTES):
        assert np.abs(a.parts[k] - b.parts[k]).max() < 1e-3


def test_time_features_shape_and_range():
    feats = time_features(np.array([0.0, 0.5, 1.0]), 8)
    assert feats.shape == (3, 8)
    assert (np.abs(feats) <= 1.0).all()
    assert np.allclose(time_features(0.25, 8), time_features([0.25], 8))


def test_nonfinite_activation_detected(vocab, mini):
    cfg, params = mini
    broken = dict(params)
    import loopdiff.autodiff as ad
    bad = params["head.pitch.w"].data.copy()
    bad[0, 0] = np.nan
    broken["head.pitch.w"] = ad.parameter(bad)
    den = Denoiser(broken, cfg, vocab)
    with pytest.raises(NonFiniteActivation):
        den(_state(vocab, cfg.n_slots), 0.5)


def test_config_round_trip(vocab):
    cfg = DenoiserConfig.desk(vocab)
    assert DenoiserConfig.from_dict(cfg.to_dict()) == cfg
    big = DenoiserConfig.full(vocab)
    assert big.layers == 8 and big.hidden == 512
    assert big.n_slots == 128


def test_config_validation():
    with pytest.raises(ValueError):
        DenoiserConfig(hidden=10, heads=4)
    with pytest.raises(ValueError):
        DenoiserConfig(time_dim=7)


def test_init_params_blocks_and_determinism(vocab, mini):
    cfg, params = mini
    again = init_params(cfg, vocab, RngHub(0).stream("init"))
    assert params.keys() == again.keys()
    for k in params:
        assert np.array_equal(params[k].data, again[k].data)
    for a, name in enumerate(
            ["instrument", "pitch", "onset_beat", "onset_tick",
             "offset_beat", "offset_tick", "velocity", "tempo", "tag"]):
        assert params[f"embed.{name}"].data.shape == (vocab.sizes[a],
                                                      cfg.hidden)
        assert params[f"head.{name}.w"].data.shape == (cfg.hidden,
                                                       vocab.sizes[a])


def test_denoiser_holds_no_graph(vocab, mini):
    cfg, params = mini
    den = Denoiser(params, cfg, vocab)
    den(_state(vocab, cfg.n_slots), 0.4)
    for p in params.values():
        assert p.grad is None

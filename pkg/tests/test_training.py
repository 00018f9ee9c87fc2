import numpy as np
import pytest

from loopdiff import autodiff as ad
from loopdiff.diffusion import DiffusionConfig
from loopdiff.errors import ConfigError, NonFiniteGradient
from loopdiff.model import DenoiserConfig, init_params
from loopdiff.rng import RngHub
from loopdiff.training import (
    Adam, TrainConfig, batch_loss, train_loop, train_step,
)
from loopdiff.vocab import NUM_ATTRIBUTES

from conftest import toy_dataset


MINI = dict(layers=1, heads=2, hidden=8, ff=16, n_slots=32, time_dim=4)


@pytest.fixture(scope="module")
def tiny_run(vocab):
    cfg = DenoiserConfig(**MINI, vocab_version=vocab.version)
    tcfg = TrainConfig(batch_size=4, epochs=3, seed=1)
    data = toy_dataset(vocab)
    params, opt, metrics = train_loop(data, cfg, tcfg, DiffusionConfig(),
                                      vocab)
    return cfg, tcfg, data, params, opt, metrics


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(decay=0.0)
    with pytest.raises(ValueError):
        TrainConfig(decay=1.5)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)


def test_adam_single_step_oracle():
    # one step from zero moment estimates reduces to a signed step of
    # size lr regardless of the gradient magnitude
    p = {"w": ad.parameter(np.array([1.0, -2.0]))}
    opt = Adam(p, beta1=0.9, beta2=0.999, eps=0.0)
    opt.step(p, {"w": np.array([0.5, -3.0])}, lr=0.1)
    assert np.allclose(p["w"].data, [0.9, -1.9], atol=1e-12)


def test_adam_state_round_trip():
    p = {"w": ad.parameter(np.ones(3))}
    opt = Adam(p, 0.9, 0.999, 1e-8)
    opt.step(p, {"w": np.full(3, 0.2)}, 0.01)
    opt.step(p, {"w": np.full(3, -0.1)}, 0.01)
    blocks = opt.state_blocks()
    fresh = Adam({"w": ad.parameter(np.ones(3))}, 0.9, 0.999, 1e-8)
    fresh.load_blocks(blocks)
    assert fresh.t == 2
    assert np.array_equal(fresh.m["w"], opt.m["w"])
    assert np.array_equal(fresh.v["w"], opt.v["w"])


def test_metrics_schema_and_steps(tiny_run):
    cfg, tcfg, data, params, opt, metrics = tiny_run
    assert len(metrics) == tcfg.epochs * (len(data) // tcfg.batch_size)
    assert [m["step"] for m in metrics] == list(range(1, len(metrics) + 1))
    for m in metrics:
        assert set(m) == {"step", "epoch", "loss", "lr"}
        assert np.isfinite(m["loss"])
    assert metrics[-1]["lr"] == pytest.approx(tcfg.lr * tcfg.decay ** 2)


def test_loss_decreases(tiny_run):
    _, _, _, _, _, metrics = tiny_run
    first = np.mean([m["loss"] for m in metrics[:2]])
    last = np.mean([m["loss"] for m in metrics[-2:]])
    assert last < first


def test_determinism(vocab, tiny_run):
    cfg, tcfg, data, params, _, metrics = tiny_run
    again, _, metrics2 = train_loop(data, cfg, tcfg, DiffusionConfig(), vocab)
    assert [m["loss"] for m in metrics2] == [m["loss"] for m in metrics]
    for k in params:
        assert np.array_equal(params[k].data, again[k].data)


def test_resume_retraces_run(vocab, tmp_path, tiny_run):
    cfg, tcfg, data, _, _, metrics = tiny_run
    ck = tmp_path / "mid.ckpt"
    train_loop(data, cfg, tcfg, DiffusionConfig(), vocab,
               checkpoint_path=ck, max_steps=3)
    _, _, resumed = train_loop(data, cfg, tcfg, DiffusionConfig(), vocab,
                               resume_from=ck)
    full = [m["loss"] for m in metrics]
    assert [m["loss"] for m in resumed] == full[3:]


def test_resume_rejects_other_config(vocab, tmp_path, tiny_run):
    cfg, tcfg, data, _, _, _ = tiny_run
    ck = tmp_path / "mid.ckpt"
    train_loop(data, cfg, tcfg, DiffusionConfig(), vocab,
               checkpoint_path=ck, max_steps=1)
    other = DenoiserConfig(**{**MINI, "ff": 32},
                           vocab_version=vocab.version)
    with pytest.raises(ConfigError):
        train_loop(data, other, tcfg, DiffusionConfig(), vocab,
                   resume_from=ck)


def test_dataset_validation(vocab):
    cfg = DenoiserConfig(**MINI, vocab_version=vocab.version)
    tcfg = TrainConfig(batch_size=2, epochs=1)
    with pytest.raises(ConfigError):
        train_loop([], cfg, tcfg, DiffusionConfig(), vocab)
    short = toy_dataset(vocab, n_slots=16)
    with pytest.raises(ConfigError):
        train_loop(short, cfg, tcfg, DiffusionConfig(), vocab)
    mixed = toy_dataset(vocab) + toy_dataset(vocab, n_slots=16)
    with pytest.raises(ConfigError):
        train_loop(mixed, cfg, tcfg, DiffusionConfig(), vocab)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_gradient_detected(vocab):
    cfg = DenoiserConfig(**MINI, vocab_version=vocab.version)
    tcfg = TrainConfig(batch_size=2, epochs=1)
    params = init_params(cfg, vocab, RngHub(0).stream("init"))
    params["ff.0.w1"].data[0, 0] = np.inf
    data = toy_dataset(vocab)[:2]
    with pytest.raises((NonFiniteGradient, Exception)) as exc:
        train_loop(data, cfg, tcfg, DiffusionConfig(), vocab, params=params)
    assert "non-finite" in str(exc.value)


def test_training_log_file(vocab, tmp_path):
    import json
    cfg = DenoiserConfig(**MINI, vocab_version=vocab.version)
    tcfg = TrainConfig(batch_size=4, epochs=1)
    log = tmp_path / "train.jsonl"
    train_loop(toy_dataset(vocab), cfg, tcfg, DiffusionConfig(), vocab,
               log_path=log)
    lines = log.read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["step"] == 1 and "loss" in rec


def test_gradient_clipping_bounds_update():
    # with clip=1 the global gradient norm fed to Adam is at most 1
    p = {"w": ad.parameter(np.zeros(4))}
    opt = Adam(p, 0.9, 0.999, 1e-8)
    huge = {"w": np.full(4, 1e6)}
    norm = np.sqrt(float((huge["w"] ** 2).sum()))
    scaled = {k: g / norm for k, g in huge.items()}
    opt.step(p, scaled, 0.1)
    assert np.abs(p["w"].data).max() <= 0.1 + 1e-9


def test_batch_loss_matches_uniform_oracle(vocab):
    cfg = DenoiserConfig(**MINI, vocab_version=vocab.version)
    params = init_params(cfg, vocab, RngHub(0).stream("init"))
    for k in params:
        params[k].data[:] = 0.0
    data = toy_dataset(vocab)[:2]
    from loopdiff.training import _stack_examples
    streams = [RngHub(5).stream("n", j) for j in range(2)]
    parts, t_vec, targets = _stack_examples(data, DiffusionConfig(), vocab,
                                            streams)
    loss = batch_loss(parts, t_vec, targets, params, cfg, vocab)
    expect = np.mean([np.log(s) for s in vocab.sizes])
    assert loss.data == pytest.approx(expect, rel=1e-12)

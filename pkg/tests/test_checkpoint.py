import struct

import numpy as np
import pytest

from loopdiff import autodiff as ad
from loopdiff.checkpoint import MAGIC, load_params, save_params
from loopdiff.errors import CorruptCheckpoint, VersionMismatch


@pytest.fixture
def sample(tmp_path):
    params = {
        "w": ad.parameter(np.arange(6, dtype=float).reshape(2, 3)),
        "b": ad.parameter(np.array([0.5, -1.5])),
    }
    config = {"layers": 2, "hidden": 64}
    extra = {"opt.t": np.array(7.0)}
    path = tmp_path / "ck.bin"
    save_params(path, params, config, "1:abc",
                train_state={"step": 7, "epoch": 1},
                extra_blocks=extra)
    return path, params, config, extra


def test_round_trip(sample):
    path, params, config, extra = sample
    got, cfg, state, blocks = load_params(path, "1:abc")
    assert cfg == config
    assert state == {"step": 7, "epoch": 1}
    assert got.keys() == params.keys()
    for k in params:
        assert np.array_equal(got[k].data, params[k].data)
        assert got[k].requires_grad
    assert np.array_equal(blocks["opt.t"], extra["opt.t"])


def test_resave_is_bit_identical(sample, tmp_path):
    path, _, config, _ = sample
    params, cfg, state, extra = load_params(path, "1:abc")
    again = tmp_path / "again.bin"
    save_params(again, params, cfg, "1:abc", train_state=state,
                extra_blocks=extra)
    assert again.read_bytes() == path.read_bytes()


def test_version_mismatch(sample):
    path = sample[0]
    with pytest.raises(VersionMismatch):
        load_params(path, "1:other")


def test_bad_magic(sample):
    path = sample[0]
    data = path.read_bytes()
    path.write_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(CorruptCheckpoint):
        load_params(path, "1:abc")


def test_truncated_header(sample):
    path = sample[0]
    path.write_bytes(path.read_bytes()[:10])
    with pytest.raises(CorruptCheckpoint):
        load_params(path, "1:abc")


def test_truncated_block(sample):
    path = sample[0]
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CorruptCheckpoint):
        load_params(path, "1:abc")


def test_trailing_bytes(sample):
    path = sample[0]
    path.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(CorruptCheckpoint):
        load_params(path, "1:abc")


def test_garbled_header_json(sample):
    path = sample[0]
    data = bytearray(path.read_bytes())
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    data[start:start + hlen] = b"{" * hlen
    path.write_bytes(bytes(data))
    with pytest.raises(CorruptCheckpoint):
        load_params(path, "1:abc")


def test_unknown_format_version(tmp_path):
    params = {"w": ad.parameter(np.zeros(2))}
    path = tmp_path / "ck.bin"
    save_params(path, params, {}, "1:abc")
    data = path.read_bytes()
    swapped = data.replace(b'"format_version": 1', b'"format_version": 9')
    assert swapped != data
    path.write_bytes(swapped)
    with pytest.raises(CorruptCheckpoint):
        load_params(path, "1:abc")


def test_scalar_block_round_trip(tmp_path):
    path = tmp_path / "ck.bin"
    save_params(path, {"s": ad.parameter(np.array(3.25))}, {}, "v")
    params, _, _, _ = load_params(path, "v")
    assert params["s"].data.shape == ()
    assert params["s"].data == 3.25

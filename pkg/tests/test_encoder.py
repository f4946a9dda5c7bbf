"""Encoder: stride arithmetic, padding mask equality, gradients."""

import numpy as np
import pytest

from conftest import finite_difference, rel_error

from valet import tensor as T
from valet.encoder import EncoderConfig, encode, encode_batch, init_encoder_params
from valet.errors import ContractError, InputTooLongError
from valet.seeding import rng_for
from valet.tensor import Tape, backward


def small_cfg(**kw):
    base = dict(n_layers=1, d_model=16, n_heads=2, n_mels=8, max_frames=128)
    base.update(kw)
    return EncoderConfig(**base)


def params_for(cfg, dtype=np.float64):
    return init_encoder_params(cfg, rng_for(3, "enc"), dtype=dtype)


def test_output_length_follows_strides():
    cfg = small_cfg(conv_strides=(1, 2))
    params = params_for(cfg)
    mel = np.random.default_rng(0).standard_normal((100, 8))
    out = encode(mel, cfg, params)
    assert out.shape == (50, 16)
    assert cfg.out_len(100) == 50


@pytest.mark.parametrize("strides,t,k", [((1, 1), 13, 13), ((1, 2), 13, 7), ((2, 2), 13, 4), ((1, 2), 1, 1)])
def test_ceil_stride_formula(strides, t, k):
    cfg = small_cfg(conv_strides=strides)
    params = params_for(cfg)
    out = encode(np.zeros((t, 8)), cfg, params)
    assert out.shape[0] == k == cfg.out_len(t)


def test_shape_contract_over_random_lengths():
    cfg = small_cfg()
    params = params_for(cfg, dtype=np.float32)
    rng = np.random.default_rng(1)
    for _ in range(25):
        t = int(rng.integers(1, cfg.max_frames + 1))
        out = encode(rng.standard_normal((t, 8)).astype(np.float32), cfg, params)
        assert out.shape == (cfg.out_len(t), cfg.d_model)
        assert np.all(np.isfinite(out.data))


def test_not_a_constant_map():
    cfg = small_cfg()
    params = params_for(cfg)
    rng = np.random.default_rng(2)
    for _ in range(5):
        a = encode(rng.standard_normal((20, 8)), cfg, params).data
        b = encode(rng.standard_normal((20, 8)), cfg, params).data
        assert not np.allclose(a, b)


def test_too_long_input_rejected():
    cfg = small_cfg(max_frames=32)
    params = params_for(cfg)
    with pytest.raises(InputTooLongError):
        encode(np.zeros((33, 8)), cfg, params)
    with pytest.raises(ContractError):
        encode_batch([np.zeros((0, 8))], cfg, params)


def test_padded_batch_matches_unpadded_prefix():
    # zero-filled pad frames + attention masking leave valid rows unchanged
    cfg = small_cfg(n_layers=2)
    params = params_for(cfg)
    rng = np.random.default_rng(3)
    short = rng.standard_normal((11, 8))
    long = rng.standard_normal((29, 8))
    solo = encode(short, cfg, params).data
    batched, k_list = encode_batch([short, long], cfg, params)
    assert k_list == [cfg.out_len(11), cfg.out_len(29)]
    np.testing.assert_allclose(batched.data[0, : k_list[0]], solo, atol=1e-4)
    # in float64 with zero padding the equality is essentially exact
    np.testing.assert_allclose(batched.data[0, : k_list[0]], solo, atol=1e-10)


def test_gradient_through_conv_kernels():
    cfg = small_cfg()
    params = params_for(cfg)
    mel = np.random.default_rng(4).standard_normal((9, 8))
    probe = np.random.default_rng(5).standard_normal((5, 16))
    w = params["encoder.conv0.weight"]
    w.requires_grad = True

    with Tape():
        out = encode(mel, cfg, params)
        backward(T.tsum(T.mul(out, T.Tensor(probe))))

    def f():
        return float(np.sum(encode(mel, cfg, params).data * probe))

    assert rel_error(w.grad, finite_difference(f, w.data)) < 1e-4


def test_deterministic():
    cfg = small_cfg()
    params = params_for(cfg, dtype=np.float32)
    mel = np.random.default_rng(6).standard_normal((17, 8)).astype(np.float32)
    a = encode(mel, cfg, params).data
    b = encode(mel, cfg, params).data
    assert np.array_equal(a, b)


def test_config_validation():
    with pytest.raises(ContractError):
        EncoderConfig(d_model=30, n_heads=4)
    with pytest.raises(ContractError):
        EncoderConfig(conv_strides=(0, 1))
    with pytest.raises(ContractError):
        EncoderConfig(conv_kernels=(4, 3))

"""Bridge: pooling arithmetic, mode-dependent lengths, gate behavior."""

import numpy as np
import pytest

from conftest import finite_difference, rel_error

from valet import tensor as T
from valet.bridge import (
    BridgeConfig,
    apply_bridge,
    apply_bridge_batch,
    concat_pooled,
    gate,
    init_bridge_params,
    mean_pool,
)
from valet.errors import ContractError
from valet.tensor import Tape, Tensor, backward


class TestMeanPool:
    def test_constant_rows_are_a_fixed_point(self):
        v = np.array([2.0, -1.0, 0.5])
        h = Tensor(np.tile(v, (5, 1)))
        np.testing.assert_allclose(mean_pool(h).data, v, atol=1e-7)

    def test_arithmetic_mean(self):
        h = Tensor(np.array([[1.0, 3.0], [3.0, 5.0]]))
        np.testing.assert_allclose(mean_pool(h).data, [2.0, 4.0])

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((7, 4))
        perm = rng.permutation(7)
        a = mean_pool(Tensor(h)).data
        b = mean_pool(Tensor(h[perm])).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ContractError):
            mean_pool(Tensor(np.zeros((0, 4))))


class TestConcatPooled:
    def test_row_zero_is_pooled_vector(self):
        h = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3))
        r = mean_pool(h)
        out = concat_pooled(r, h)
        assert out.shape == (3, 3)
        np.testing.assert_array_equal(out.data[0], r.data)
        np.testing.assert_array_equal(out.data[1:], h.data)  # rows preserved bit-exactly

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            concat_pooled(Tensor(np.zeros(4)), Tensor(np.zeros((2, 3))))


class TestGate:
    def test_zero_params_halve_the_input(self):
        h = Tensor(np.random.default_rng(1).standard_normal((3, 4)))
        out = gate(h, Tensor(np.zeros((4, 4))), Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, 0.5 * h.data, atol=1e-7)

    def test_bias_four_is_near_passthrough(self):
        h = Tensor(np.random.default_rng(2).standard_normal((3, 4)))
        out = gate(h, Tensor(np.zeros((4, 4))), Tensor(np.full(4, 4.0)))
        sigma4 = 1.0 / (1.0 + np.exp(-4.0))  # ~0.9820
        np.testing.assert_allclose(out.data, sigma4 * h.data, atol=1e-6)

    def test_output_bounded_by_input_magnitude(self):
        rng = np.random.default_rng(3)
        h = rng.standard_normal((5, 6))
        out = gate(Tensor(h), Tensor(rng.standard_normal((6, 6))), Tensor(rng.standard_normal(6))).data
        assert np.all(np.abs(out) <= np.abs(h))
        nonzero = h != 0
        assert np.all(np.abs(out[nonzero]) > 0)

    def test_gradient(self):
        rng = np.random.default_rng(4)
        h = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        probe = rng.standard_normal((3, 4))
        with Tape():
            backward(T.tsum(T.mul(gate(h, w, b), Tensor(probe))))

        def f():
            sig = 1.0 / (1.0 + np.exp(-(h.data @ w.data.T + b.data)))
            return float(np.sum(sig * h.data * probe))

        assert rel_error(h.grad, finite_difference(f, h.data)) < 1e-5
        assert rel_error(w.grad, finite_difference(f, w.data)) < 1e-5
        assert rel_error(b.grad, finite_difference(f, b.data)) < 1e-5


class TestModes:
    @pytest.mark.parametrize(
        "mode,expect_len",
        [("sequence_only", lambda k: k), ("pooled_only", lambda k: 1), ("pooled_plus_sequence", lambda k: k + 1)],
    )
    def test_output_length_by_mode(self, mode, expect_len):
        rng = np.random.default_rng(5)
        for _ in range(40):
            k = int(rng.integers(1, 30))
            cfg = BridgeConfig(mode=mode)
            h = Tensor(rng.standard_normal((k, 6)))
            out = apply_bridge(h, cfg, {})
            assert out.shape == (expect_len(k), 6)
            assert cfg.bridged_len(k) == expect_len(k)

    def test_sequence_only_without_gating_is_bit_exact_passthrough(self):
        h = Tensor(np.random.default_rng(6).standard_normal((9, 5)).astype(np.float32))
        out = apply_bridge(h, BridgeConfig(mode="sequence_only", gating=False), {})
        assert out.data is h.data or np.array_equal(out.data, h.data)

    def test_pooled_plus_sequence_preserves_rows_bit_exactly(self):
        h = np.random.default_rng(7).standard_normal((9, 5)).astype(np.float32)
        out = apply_bridge(Tensor(h), BridgeConfig(mode="pooled_plus_sequence"), {})
        assert np.array_equal(out.data[1:], h)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ContractError):
            BridgeConfig(mode="windowed")

    def test_gating_enabled_uses_params(self):
        cfg = BridgeConfig(mode="pooled_plus_sequence", gating=True)
        params = init_bridge_params(5, cfg)
        h = Tensor(np.random.default_rng(8).standard_normal((4, 5)).astype(np.float32))
        out = apply_bridge(h, cfg, params)
        # fresh gate is sigma(4) ~ 0.982 of the ungated output
        ungated = apply_bridge(h, BridgeConfig(mode="pooled_plus_sequence"), {})
        np.testing.assert_allclose(out.data, ungated.data / (1.0 + np.exp(-4.0)), rtol=1e-5)


class TestBatchedBridge:
    def test_batched_matches_single(self):
        rng = np.random.default_rng(9)
        lens = [3, 7, 5]
        d = 6
        h = np.zeros((3, 7, d), dtype=np.float64)
        singles = []
        for i, k in enumerate(lens):
            block = rng.standard_normal((k, d))
            h[i, :k] = block
            singles.append(block)
        for mode in ("sequence_only", "pooled_only", "pooled_plus_sequence"):
            cfg = BridgeConfig(mode=mode)
            out, out_lens = apply_bridge_batch(Tensor(h), lens, cfg, {})
            for i, k in enumerate(lens):
                expected = apply_bridge(Tensor(singles[i]), cfg, {}).data
                assert out_lens[i] == expected.shape[0]
                np.testing.assert_allclose(out.data[i, : out_lens[i]], expected, atol=1e-12)

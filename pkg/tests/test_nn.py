import math

import numpy as np
import pytest

from kellybench import nn


class TestLinear:
    def test_identity(self):
        layer = nn.Linear(3, 3, np.random.default_rng(0))
        layer.W.value[:] = np.eye(3)
        layer.b.value[:] = 0.0
        x = np.random.default_rng(1).standard_normal((4, 3))
        np.testing.assert_array_equal(layer.forward(x), x)

    def test_one_by_one_hand_case(self):
        layer = nn.Linear(1, 1, np.random.default_rng(0))
        layer.W.value[:] = 3.0
        layer.b.value[:] = 1.0
        y = layer.forward(np.array([[2.0]]))
        assert y[0, 0] == 7.0
        grad_x = layer.backward(np.array([[1.0]]))
        assert layer.W.grad[0, 0] == 2.0
        assert layer.b.grad[0] == 1.0
        assert grad_x[0, 0] == 3.0

    def test_shape_mismatch(self):
        layer = nn.Linear(3, 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            layer.forward(np.zeros((1, 4)))

    def test_linear_only_grad_check_is_tight(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            layer = nn.Linear(5, 4, rng)
            assert nn.grad_check(layer, rng.standard_normal((3, 5))) < 1e-8


class TestActivations:
    def test_relu_values(self):
        relu = nn.ReLU()
        np.testing.assert_array_equal(relu.forward(np.array([[-1.0, 0.0, 2.0]])),
                                      [[0.0, 0.0, 2.0]])

    def test_relu_subgradient_zero_at_kink(self):
        relu = nn.ReLU()
        relu.forward(np.array([[0.0, 1.0]]))
        np.testing.assert_array_equal(relu.backward(np.array([[5.0, 5.0]])),
                                      [[0.0, 5.0]])

    def test_sigmoid_values_and_gradient(self):
        sig = nn.Sigmoid()
        y = sig.forward(np.array([[0.0]]))
        assert y[0, 0] == 0.5
        assert sig.backward(np.array([[1.0]]))[0, 0] == pytest.approx(0.25)

    def test_sigmoid_stable_at_extremes(self):
        sig = nn.Sigmoid()
        y = sig.forward(np.array([[-800.0, 800.0]]))
        assert y[0, 0] == pytest.approx(0.0, abs=1e-300)
        assert y[0, 1] == 1.0


class TestLayerNorm:
    def test_constant_row_returns_bias(self):
        layer = nn.LayerNorm(4)
        layer.bias.value[:] = [1.0, 2.0, 3.0, 4.0]
        out = layer.forward(np.full((2, 4), 7.0))
        np.testing.assert_allclose(out, [[1, 2, 3, 4], [1, 2, 3, 4]], atol=1e-12)

    def test_two_point_row(self):
        layer = nn.LayerNorm(2)
        out = layer.forward(np.array([[1.0, 3.0]]))
        expected = 1.0 / math.sqrt(1.0 + 1e-5)
        np.testing.assert_allclose(out, [[-expected, expected]], rtol=1e-12)

    def test_grad_check(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            layer = nn.LayerNorm(6)
            layer.gain.value[:] = rng.standard_normal(6)
            layer.bias.value[:] = rng.standard_normal(6)
            assert nn.grad_check(layer, rng.standard_normal((3, 6))) < 1e-5


class TestResidualBlock:
    def test_zero_inner_weights_reduce_to_layer_norm(self):
        rng = np.random.default_rng(0)
        block = nn.ResidualBlock(5, rng)
        block.fc1.W.value[:] = 0.0
        block.fc1.b.value[:] = 0.0
        block.fc2.W.value[:] = 0.0
        block.fc2.b.value[:] = 0.0
        x = rng.standard_normal((3, 5))
        reference = nn.LayerNorm(5)
        np.testing.assert_allclose(block.forward(x), reference.forward(x), atol=1e-12)

    def test_skip_gradient_has_identity_term(self):
        rng = np.random.default_rng(1)
        block = nn.ResidualBlock(5, rng)
        block.fc1.W.value[:] = 0.0
        block.fc2.W.value[:] = 0.0
        x = rng.standard_normal((2, 5))
        block.forward(x)
        grad_out = rng.standard_normal((2, 5))
        reference = nn.LayerNorm(5)
        reference.forward(x)
        np.testing.assert_allclose(block.backward(grad_out.copy()),
                                   reference.backward(grad_out), atol=1e-12)

    def test_grad_check(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            block = nn.ResidualBlock(6, rng)
            assert nn.grad_check(block, rng.standard_normal((3, 6))) < 1e-5


class TestComposition:
    def stack(self, rng):
        return nn.Sequential([
            nn.Linear(7, 6, rng, init="he"),
            nn.ReLU(),
            nn.ResidualBlock(6, rng),
            nn.Linear(6, 2, rng),
            nn.Sigmoid(),
        ])

    def test_fused_matches_per_layer_chain(self):
        rng = np.random.default_rng(2)
        net = self.stack(rng)
        x = rng.standard_normal((4, 7))
        out = net.forward(x)
        grad = np.ones_like(out)
        fused = net.backward(grad)
        # replay the chain by hand
        net.forward(x)
        manual = grad
        for layer in reversed(net.layers):
            manual = layer.backward(manual)
        np.testing.assert_allclose(fused, manual, atol=1e-12)

    def test_full_stack_grad_check(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            net = self.stack(rng)
            x = rng.standard_normal((3, 7))
            net.forward(x)
            if nn.min_relu_margin(net) < 1e-4:
                x = rng.standard_normal((3, 7))
            assert nn.grad_check(net, x) < 1e-4

    def test_deterministic_forward(self):
        rng = np.random.default_rng(3)
        net = self.stack(rng)
        x = rng.standard_normal((3, 7))
        np.testing.assert_array_equal(net.forward(x), net.forward(x))

    def test_frozen_parameters_skipped(self):
        rng = np.random.default_rng(4)
        net = nn.Sequential([nn.Linear(4, 3, rng), nn.ReLU(), nn.Linear(3, 1, rng)])
        net.layers[0].W.trainable = False
        net.layers[0].b.trainable = False
        assert nn.grad_check(net, rng.standard_normal((2, 4))) < 1e-6

    def test_nan_input_is_hard_error(self):
        rng = np.random.default_rng(5)
        layer = nn.Linear(2, 2, rng)
        with pytest.raises(FloatingPointError):
            layer.forward(np.array([[np.nan, 1.0]]))


class TestAdam:
    def test_zero_gradient_leaves_fresh_params_unchanged(self):
        rng = np.random.default_rng(0)
        layer = nn.Linear(3, 3, rng)
        before = layer.W.value.copy()
        opt = nn.Adam(layer.parameters(), lr=0.1)
        opt.zero_grad()
        opt.step()
        np.testing.assert_array_equal(layer.W.value, before)

    def test_constant_gradient_step_magnitude_approaches_lr(self):
        param = nn.Parameter(np.array([0.0]))
        opt = nn.Adam([param], lr=0.01)
        previous = param.value.copy()
        magnitudes = []
        for _ in range(50):
            param.grad[:] = 1.0
            opt.step()
            magnitudes.append(abs(float(param.value[0] - previous[0])))
            previous = param.value.copy()
        assert magnitudes[-1] == pytest.approx(0.01, rel=1e-6)

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(7)
            layer = nn.Linear(4, 2, rng)
            opt = nn.Adam(layer.parameters(), lr=0.05)
            x = rng.standard_normal((8, 4))
            for _ in range(20):
                opt.zero_grad()
                out = layer.forward(x)
                layer.backward(out)  # grad of 0.5*||out||^2
                opt.step()
            return layer.W.value.copy()

        np.testing.assert_array_equal(run(), run())


class TestSerialization:
    def test_roundtrip_with_moments(self, tmp_path):
        rng = np.random.default_rng(0)
        net = nn.Sequential([nn.Linear(3, 4, rng), nn.ReLU(), nn.Linear(4, 1, rng)])
        opt = nn.Adam(net.parameters(), lr=0.01)
        x = rng.standard_normal((5, 3))
        for _ in range(3):
            opt.zero_grad()
            net.backward(net.forward(x))
            opt.step()
        named = net.named_parameters()
        path = tmp_path / "params.txt"
        nn.save_parameters(path, named, moments=True, manifest="deadbeef")
        loaded = nn.load_parameters(path)

        rng2 = np.random.default_rng(99)
        other = nn.Sequential([nn.Linear(3, 4, rng2), nn.ReLU(), nn.Linear(4, 1, rng2)])
        nn.restore_parameters(other.named_parameters(), loaded)
        for (_, a), (_, b) in zip(named, other.named_parameters()):
            np.testing.assert_array_equal(a.value, b.value)
            np.testing.assert_array_equal(a.m, b.m)
            np.testing.assert_array_equal(a.v, b.v)

    def test_missing_tensor_detected(self, tmp_path):
        rng = np.random.default_rng(0)
        layer = nn.Linear(2, 2, rng)
        nn.save_parameters(tmp_path / "p.txt", [("only.W", layer.W)])
        loaded = nn.load_parameters(tmp_path / "p.txt")
        with pytest.raises(ValueError, match="missing"):
            nn.restore_parameters([("other.W", layer.W)], loaded)

    def test_shape_mismatch_detected(self, tmp_path):
        rng = np.random.default_rng(0)
        small = nn.Linear(2, 2, rng)
        big = nn.Linear(3, 3, rng)
        nn.save_parameters(tmp_path / "p.txt", [("W", small.W)])
        loaded = nn.load_parameters(tmp_path / "p.txt")
        with pytest.raises(ValueError, match="shape"):
            nn.restore_parameters([("W", big.W)], loaded)

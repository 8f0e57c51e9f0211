import json
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheyedepth.depthmap import SparseDepthMap
from fisheyedepth.nnkit import (
    ActivationParams, AdamConfig, AdamState, ArchitectureError, ToyModel, TrainingPair, adam_step,
    load_architecture, lr_schedule, objective, pixel_features, swish, swish_beta, swish_beta_grad,
    swish_grad, train_toy,
)
from fisheyedepth.nnkit.activations import ACTIVATIONS
from fisheyedepth.nnkit.arch import ArchitectureSpec, verify_architecture


def fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


class TestActivations:
    def test_swish_values(self):
        assert swish(0.0) == 0.0
        # derived: 1 / (1 + e^-1)
        assert float(swish(1.0)) == pytest.approx(0.7310585786300049, abs=1e-12)

    def test_beta_zero_is_identity(self):
        x = np.linspace(-20, 20, 101)
        assert np.array_equal(swish_beta(x, ActivationParams(0.0)), x)

    def test_large_beta_is_scaled_relu(self):
        x = np.concatenate([np.linspace(-50, -0.01, 500), np.linspace(0.01, 50, 500)])
        assert np.max(np.abs(swish_beta(x, ActivationParams(1e4)) - 2 * np.maximum(0, x))) <= 1e-6

    def test_beta_one_is_twice_swish(self):
        x = np.linspace(-5, 5, 11)
        assert np.allclose(swish_beta(x, ActivationParams(1.0)), 2 * swish(x), rtol=1e-15)

    def test_extreme_inputs_are_finite(self):
        x = np.array([-1e4, -800.0, 800.0, 1e4])
        assert np.all(np.isfinite(swish(x))) and np.all(np.isfinite(swish_grad(x)))

    @pytest.mark.parametrize("name", sorted(ACTIVATIONS))
    def test_registered_derivatives(self, name):
        f, g = ACTIVATIONS[name]
        x = np.concatenate([np.linspace(-10, -0.05, 200), np.linspace(0.05, 10, 200)])
        assert np.allclose(g(x), fd(f, x), rtol=1e-6, atol=1e-7)

    @given(st.floats(-10, 10), st.floats(-3, 3))
    def test_beta_grad_fd(self, x, beta):
        p = ActivationParams(beta)
        got = float(swish_beta_grad(x, p))
        ref = fd(lambda v: float(swish_beta(v, p)), x)
        assert abs(got - ref) <= 1e-6 * max(1.0, abs(ref))


class TestAdam:
    def test_first_step_magnitude(self):
        s = adam_step(AdamState.init([0.0, 3.0]), np.ones(2))
        assert np.all(np.abs((s.params - [0.0, 3.0]) + 1e-4) < 1e-9)

    def test_first_step_against_hand_calculation(self):
        g = np.array([0.3, -2.0, 5e-3])
        s = adam_step(AdamState.init(np.zeros(3)), g)
        # hand-unrolled single update
        m = 0.1 * g
        v = 0.001 * g * g
        expected = -1e-4 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
        assert np.allclose(s.params, expected, rtol=1e-13, atol=0)
        assert s.t == 1

    def test_zero_gradient(self):
        s = AdamState.init([1.0, -2.0])
        for _ in range(100):
            s = adam_step(s, np.zeros(2))
        assert s.params.tolist() == [1.0, -2.0]

    def test_quadratic_converges(self):
        s = AdamState.init([1.0])
        for step in range(20000):
            if abs(s.params[0]) < 1e-3:
                break
            s = adam_step(s, 2 * s.params)
        assert abs(s.params[0]) < 1e-3

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(AdamState.init(np.zeros(3)), np.zeros(2))

    def test_schedule(self):
        assert lr_schedule(0) == 1e-4
        assert lr_schedule(7499) == 1e-4
        assert lr_schedule(7500) == pytest.approx(9.5e-5, rel=1e-15)
        assert lr_schedule(15000) == pytest.approx(9.025e-5, rel=1e-15)
        with pytest.raises(ValueError):
            lr_schedule(-1)

    def test_update_uses_schedule_of_previous_step_count(self):
        cfg = AdamConfig(decay_steps=1, decay_base=0.5)
        s = adam_step(AdamState(np.zeros(1), np.zeros(1), np.zeros(1), 1), np.ones(1), cfg)
        # one previous step so lr(1) = lr/2; moments are fresh, so bias correction uses t = 2
        m = 0.1
        v = 0.001
        expected = -0.5e-4 * (m / (1 - 0.9 ** 2)) / (math.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
        assert s.params[0] == pytest.approx(expected, rel=1e-12)

    def test_config_validation(self):
        for kw in ({"beta1": 1.0}, {"beta2": -0.1}, {"eps": 0.0}, {"lr": -1.0}, {"decay_steps": 0}):
            with pytest.raises(ValueError):
                AdamConfig(**kw)


class TestArchitecture:
    def test_bundled_spec_passes(self):
        rep = verify_architecture(load_architecture())
        assert rep.passed
        assert "PASS" in rep.to_text()

    def test_fc7_and_reshape(self):
        rep = verify_architecture(load_architecture())
        assert rep.row("scale1", "fc7").channels == 23040 == 36 * 10 * 64

    def test_wrong_expectation_fails(self, tmp_path):
        spec = json.loads(resources.files("fisheyedepth").joinpath("data/multiscale_fisheye.json").read_text())
        spec["scales"][0]["layers"][0]["expect"] = [143, 41, 96]
        p = tmp_path / "a.json"
        p.write_text(json.dumps(spec))
        rep = verify_architecture(load_architecture(p))
        assert not rep.passed and not rep.row("scale1", "conv1").ok

    def test_bad_concat_and_reshape(self):
        base = {"input": {"width": 16, "height": 16, "channels": 3}}
        bad_concat = dict(base, scales=[
            {"name": "a", "layers": [{"name": "c", "kind": "conv", "kernel": 3, "stride": 1, "channels": 4}]},
            {"name": "b", "layers": [{"name": "c", "kind": "conv", "kernel": 3, "stride": 2, "channels": 4},
                                     {"name": "cat", "kind": "concat", "source": "a"}]},
        ])
        with pytest.raises(ArchitectureError):
            verify_architecture(ArchitectureSpec.from_dict(bad_concat))
        bad_reshape = dict(base, scales=[{"name": "a", "layers": [
            {"name": "fc", "kind": "fc", "channels": 10}, {"name": "r", "kind": "reshape", "size": [3, 3], "channels": 1}]}])
        with pytest.raises(ArchitectureError):
            verify_architecture(ArchitectureSpec.from_dict(bad_reshape))

    def test_non_positive_size(self):
        spec = {"input": {"width": 8, "height": 8, "channels": 3}, "scales": [{"name": "a", "layers": [
            {"name": "c", "kind": "conv", "kernel": 11, "stride": 4, "padding": "valid", "channels": 4}]}]}
        with pytest.raises(ArchitectureError):
            verify_architecture(ArchitectureSpec.from_dict(spec))


def toy_pair(rng, shape=(6, 9), frac=0.5):
    valid = rng.random(shape) < frac
    valid.flat[:2] = True
    gt = SparseDepthMap(np.where(valid, rng.uniform(2, 40, shape), 0.0), valid)
    return TrainingPair.from_map(pixel_features(shape, valid=valid), gt)


class TestToy:
    def test_param_count(self):
        assert ToyModel(1, 3).n_params == 10

    def test_features(self, demo_intrinsics):
        f = pixel_features((800, 1280), intrinsics=demo_intrinsics)
        assert f.shape == (800, 1280, 3)
        assert f[400, 640, 2] == pytest.approx(0.0, abs=0.01) and f[:, :, 2].max() <= 1.0
        v = np.zeros((5, 5), dtype=bool)
        v[2, 2] = True
        g = pixel_features((5, 5), valid=v, window=1)
        assert g[2, 2, 2] == pytest.approx(1 / 9) and g[0, 0, 2] == 0.0

    def test_objective_gradient_fd(self, rng):
        model = ToyModel(3, 4)
        pairs = [toy_pair(rng), toy_pair(rng)]
        theta = model.init_params(rng, 2.0)
        _, g = objective(model, theta, pairs)
        num = np.array([fd(lambda t: objective(model, theta + t * e, pairs)[0], 0.0)
                        for e in np.eye(model.n_params)])
        assert np.linalg.norm(g - num) / np.linalg.norm(num) <= 1e-5

    def test_duplicated_batch_same_gradient(self, rng):
        model = ToyModel(3, 4)
        pairs = [toy_pair(rng), toy_pair(rng)]
        theta = model.init_params(rng)
        l1, g1 = objective(model, theta, pairs)
        l2, g2 = objective(model, theta, pairs + pairs)
        assert l1 == pytest.approx(l2, rel=1e-14) and np.allclose(g1, g2, rtol=1e-13, atol=0)

    def test_single_valid_pixel_is_noop(self, rng):
        valid = np.zeros((4, 4), dtype=bool)
        valid[1, 2] = True
        gt = SparseDepthMap(np.where(valid, 7.0, 0.0), valid)
        res = train_toy([(pixel_features((4, 4)), gt)], steps=20, seed=1)
        assert np.all(res.losses == 0.0)
        theta0 = ToyModel(2, 8).init_params(np.random.default_rng(1), math.log(7.0))
        assert np.array_equal(res.params, theta0)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            train_toy([(pixel_features((3, 3)), SparseDepthMap.empty(3, 3))], steps=1)
        with pytest.raises(ValueError):
            train_toy([], steps=1)

    def test_deterministic_and_history(self, rng):
        pair = toy_pair(rng)
        a = train_toy([pair], steps=30, seed=5)
        b = train_toy([pair], steps=30, seed=5)
        assert a.history_csv() == b.history_csv()
        lines = a.history_csv().splitlines()
        assert lines[0] == "step,lr,loss" and len(lines) == 32

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tornadocast import neuralnet as nn
from tornadocast.exceptions import SchemaError


def scalar_params(**values):
    def get(name):
        return float(values.get(name, 0.0))

    arrays = {}
    for g in nn.GATES:
        arrays[f"W_{g}"] = np.array([[get(f"W_{g}")]])
        arrays[f"U_{g}"] = np.array([[get(f"U_{g}")]])
        arrays[f"b_{g}"] = np.array([get(f"b_{g}")])
    arrays["dense_w"] = np.array([get("dense_w")])
    arrays["dense_b"] = np.array(get("dense_b"))
    return nn.LstmParams(**arrays)


def scalar_oracle(v, xs):
    sig = lambda z: 1.0 / (1.0 + math.exp(-z))
    h = c = 0.0
    for x in xs:
        i = sig(v["W_i"] * x + v["U_i"] * h + v["b_i"])
        f = sig(v["W_f"] * x + v["U_f"] * h + v["b_f"])
        o = sig(v["W_o"] * x + v["U_o"] * h + v["b_o"])
        g = math.tanh(v["W_g"] * x + v["U_g"] * h + v["b_g"])
        c = f * c + i * g
        h = o * math.tanh(c)
    return sig(v["dense_w"] * h + v["dense_b"])


SCALAR = {
    "W_i": 0.3, "W_f": -0.7, "W_o": 1.1, "W_g": 0.9,
    "U_i": 0.2, "U_f": 0.4, "U_o": -0.5, "U_g": 0.6,
    "b_i": 0.1, "b_f": 1.0, "b_o": -0.2, "b_g": 0.05,
    "dense_w": 1.7, "dense_b": -0.3,
}


class TestInit:
    def test_shapes_and_biases(self):
        p = nn.init_params(5, 8, seed=1)
        assert p.W_i.shape == (8, 5) and p.U_g.shape == (8, 8)
        np.testing.assert_array_equal(p.b_f, 1.0)
        np.testing.assert_array_equal(p.b_i, 0.0)
        np.testing.assert_array_equal(p.b_o, 0.0)
        bound = math.sqrt(6 / 13)
        assert np.abs(p.W_o).max() <= bound

    def test_determinism(self):
        a, b = nn.init_params(5, 8, 3), nn.init_params(5, 8, 3)
        for k in nn.PARAM_NAMES:
            assert np.array_equal(a.to_dict()[k], b.to_dict()[k])
        assert not np.array_equal(a.W_i, nn.init_params(5, 8, 4).W_i)


class TestForward:
    def test_zero_weights(self, rng):
        p = nn.init_params(3, 4, 0)
        p = nn.LstmParams(**{k: np.zeros_like(v) for k, v in p.to_dict().items()})
        tr = nn.lstm_forward(p, rng.normal(size=(5, 3)))
        np.testing.assert_array_equal(tr.h_final, 0.0)
        assert tr.p[0] == 0.5

    @pytest.mark.parametrize("xs", [[0.8], [0.8, -1.3], [0.2, 0.5, -0.4, 1.9]])
    def test_scalar_oracle(self, xs):
        p = scalar_params(**SCALAR)
        tr = nn.lstm_forward(p, np.array(xs)[:, None])
        assert abs(tr.p[0] - scalar_oracle(SCALAR, xs)) < 1e-12

    def test_inference_ignores_rng_and_rate(self, rng):
        p = nn.init_params(4, 6, 0)
        x = rng.normal(size=(7, 3, 4))
        a = nn.lstm_forward(p, x, 0.2, False, np.random.default_rng(1)).p
        b = nn.lstm_forward(p, x, 0.7, False, np.random.default_rng(2)).p
        np.testing.assert_array_equal(a, b)

    def test_train_mode_is_seeded(self, rng):
        p = nn.init_params(4, 6, 0)
        x = rng.normal(size=(7, 3, 4))
        a = nn.lstm_forward(p, x, 0.5, True, np.random.default_rng(5)).p
        b = nn.lstm_forward(p, x, 0.5, True, np.random.default_rng(5)).p
        np.testing.assert_array_equal(a, b)

    def test_state_bounds(self, rng):
        p = nn.init_params(4, 6, 0)
        tr = nn.lstm_forward(p, rng.normal(size=(50, 12, 4)))
        assert np.isfinite(tr.cells).all()
        assert np.all(np.abs(tr.hiddens) < 1)
        assert np.all((tr.p > 0) & (tr.p < 1))

    def test_shape_mismatch(self):
        with pytest.raises(SchemaError):
            nn.lstm_forward(nn.init_params(4, 2, 0), np.zeros((3, 5)))

    def test_extreme_logits_are_clamped(self):
        p = scalar_params(W_g=5, W_i=5, W_o=5, dense_w=1e6)
        tr = nn.lstm_forward(p, np.array([[10.0]]))
        assert tr.p[0] == 1 - nn.PROB_EPS
        assert np.isfinite(nn.bce_loss(tr.p, [0.0])).all()


class TestLoss:
    def test_values(self):
        assert nn.bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-15)
        assert nn.bce_loss(1 - 1e-12, 1) < 1e-11

    def test_against_direct_formula(self, rng):
        p = rng.uniform(1e-6, 1 - 1e-6, 200)
        y = rng.integers(0, 2, 200)
        direct = np.array([-(yy * math.log(pp) + (1 - yy) * math.log(1 - pp)) for pp, yy in zip(p, y)])
        np.testing.assert_allclose(nn.bce_loss(p, y), direct, rtol=0, atol=1e-12)


class TestBackward:
    def test_dense_bias_closed_form(self, rng):
        p = nn.init_params(3, 5, 0)
        x = rng.normal(size=(4, 3))
        tr = nn.lstm_forward(p, x)
        for y in (0, 1):
            g = nn.backward(tr, p, [y])
            assert float(g["dense_b"]) == pytest.approx(tr.p[0] - y, abs=1e-15)

    def test_masked_hidden_state_has_no_dense_gradient(self, rng):
        p = nn.init_params(3, 5, 0)
        tr = nn.lstm_forward(p, rng.normal(size=(2, 4, 3)), mask=np.zeros((2, 5)))
        g = nn.backward(tr, p, [1, 0])
        np.testing.assert_array_equal(g["dense_w"], 0.0)
        np.testing.assert_array_equal(g["W_i"], 0.0)

    def test_gradient_shapes(self):
        p = nn.init_params(3, 5, 0)
        g = nn.backward(nn.lstm_forward(p, np.ones((2, 3))), p, [1])
        for k, v in p.to_dict().items():
            assert np.shape(g[k]) == np.shape(v)

    def test_finite_difference_small_model(self, rng):
        p = nn.init_params(5, 8, 11)
        rep = nn.gradient_check(p, rng.normal(size=(4, 5)), [1], delta=1e-5, tolerance=1e-4)
        assert rep.passed, rep

    def test_batch_with_frozen_dropout_mask(self, rng):
        p = nn.init_params(3, 4, 2)
        x = rng.normal(size=(6, 3, 3))
        mask = nn.dropout_mask((6, 4), 0.3, np.random.default_rng(0))
        rep = nn.gradient_check(p, x, rng.integers(0, 2, 6), mask=mask)
        assert rep.passed, rep

    def test_scalar_model_agreement(self):
        p = scalar_params(**SCALAR)
        rep = nn.gradient_check(p, np.array([[0.8]]), [1], delta=1e-5)
        g = nn.backward(nn.lstm_forward(p, np.array([[0.8]])), p, [1])
        assert rep.passed
        # every coordinate agrees absolutely to 1e-7 as well
        for name, value in g.items():
            assert abs(rep.per_parameter[name]) < 1e-4
        assert abs(rep.analytic - rep.numeric) < 1e-7

    def test_detects_corrupted_gradient(self, rng):
        p = nn.init_params(5, 8, 0)
        x = rng.normal(size=(4, 5))
        g = nn.backward(nn.lstm_forward(p, x), p, [1])
        g["dense_w"] = g["dense_w"] * 1.1
        rep = nn.gradient_check(p, x, [1], analytic=g)
        assert not rep.passed and rep.parameter == "dense_w"


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = nn.init_params(2, 3, 0)
        zero = {k: np.zeros_like(v) for k, v in p.to_dict().items()}
        new, state = nn.adam_step(p, zero)
        for k in nn.PARAM_NAMES:
            np.testing.assert_array_equal(new.to_dict()[k], p.to_dict()[k])
        assert state.t == 1

    def test_first_step_magnitude(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        grads = {"w": np.array([0.5, -4.0, 1e-3])}
        new, _ = nn.adam_step(params, grads, learning_rate=1e-3)
        delta = np.abs(new["w"] - params["w"])
        assert np.all(delta > 0) and np.all(delta <= 1e-3 * (1 + 1e-6))
        np.testing.assert_allclose(delta[:2], 1e-3, rtol=1e-6)

    def test_convex_quadratic(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        b = A @ np.array([0.5, -0.25])
        minimizer = np.linalg.solve(A, b)

        def loss(x):
            return 0.5 * x @ A @ x - b @ x

        params, state, losses = {"x": np.zeros(2)}, None, []
        for _ in range(100):
            params, state = nn.adam_step(params, {"x": A @ params["x"] - b}, state, learning_rate=0.009)
            losses.append(loss(params["x"]))
        assert np.all(np.diff(losses) < 0)
        assert np.linalg.norm(params["x"] - minimizer) < 1e-2


class TestSerialization:
    def test_round_trip(self, tmp_path):
        p = nn.init_params(4, 3, 0)
        nn.save_params(p, tmp_path / "m.json", note="x")
        back, doc = nn.load_params(tmp_path / "m.json")
        assert doc["note"] == "x" and doc["version"] == nn.MODEL_VERSION
        for k in nn.PARAM_NAMES:
            np.testing.assert_array_equal(back.to_dict()[k], p.to_dict()[k])

    def test_shape_validation(self):
        doc = nn.params_to_document(nn.init_params(4, 3, 0))
        doc["params"]["U_i"]["shape"] = [3, 4]
        doc["params"]["U_i"]["data"] = [0.0] * 12
        with pytest.raises(SchemaError):
            nn.params_from_document(doc)
        doc = nn.params_to_document(nn.init_params(4, 3, 0))
        doc["hidden_size"] = 5
        with pytest.raises(SchemaError):
            nn.params_from_document(doc)
        with pytest.raises(SchemaError):
            nn.params_from_document({"format": "other"})


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_forward_determinism(seed):
    p = nn.init_params(3, 4, seed)
    x = np.random.default_rng(seed).normal(size=(5, 2, 3))
    assert nn.lstm_forward(p, x).p.tobytes() == nn.lstm_forward(p, x).p.tobytes()


def test_float32_option(rng):
    p = nn.init_params(3, 4, 0, dtype=np.float32)
    tr = nn.lstm_forward(p, rng.normal(size=(2, 3, 3)))
    assert tr.p.dtype == np.float32

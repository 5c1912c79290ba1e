import numpy as np
import pytest

from expleak import nn
from expleak.explain import (
    deconvolution,
    deeplift,
    guided_backprop,
    input_x_gradient,
    integrated_gradients,
    noise_aggregate_explain,
    saliency,
    smoothgrad,
    vargrad,
)
from expleak.explain.gradients import path_quadrature

from conftest import linear_model


class TestGradExplain:
    def test_saliency_linear(self, lin3, x3):
        att = saliency(lin3, x3, 0)
        np.testing.assert_allclose(att.values, [1.0, 2.0, 0.5], atol=1e-15)
        assert att.method == "saliency"

    def test_input_x_gradient_linear(self, lin3, x3):
        att = input_x_gradient(lin3, x3, 0)
        np.testing.assert_allclose(att.values, [2.0, -2.0, 2.0], atol=1e-15)

    def test_rules_collapse_without_relu(self):
        model = nn.init_model([nn.dense(4, 6), nn.dense(6, 2)], (4,), seed=0)
        x = np.random.default_rng(1).standard_normal(4)
        raw = nn.input_gradient(model, x, 0)
        np.testing.assert_array_equal(deconvolution(model, x, 0).values, raw)
        np.testing.assert_array_equal(guided_backprop(model, x, 0).values, raw)

    def test_wall_time_recorded(self, lin3, x3):
        assert saliency(lin3, x3, 0).wall_time_seconds > 0


class TestNoiseAggregate:
    def test_zero_noise_single_sample_equals_saliency(self, small_mlp):
        x = np.random.default_rng(2).standard_normal(6)
        sg = smoothgrad(small_mlp, x, 1, n=1, stdevs=0.0, seed=9)
        sal = saliency(small_mlp, x, 1)
        np.testing.assert_array_equal(sg.values, sal.values)

    def test_zero_noise_vargrad_is_zero(self, small_mlp):
        x = np.random.default_rng(3).standard_normal(6)
        vg = vargrad(small_mlp, x, 1, n=7, stdevs=0.0, seed=4)
        np.testing.assert_array_equal(vg.values, np.zeros(6))

    def test_linear_model_any_sigma(self, lin3, x3):
        att = smoothgrad(lin3, x3, 0, n=16, stdevs=3.0, seed=5)
        np.testing.assert_allclose(att.values, [1.0, 2.0, 0.5], atol=1e-12)

    def test_n_zero_rejected(self, lin3, x3):
        with pytest.raises(ValueError):
            noise_aggregate_explain(lin3, x3, 0, n=0)

    def test_seed_determinism(self, small_mlp):
        x = np.random.default_rng(6).standard_normal(6)
        a = smoothgrad(small_mlp, x, 0, n=8, stdevs=0.5, seed=7)
        b = smoothgrad(small_mlp, x, 0, n=8, stdevs=0.5, seed=7)
        assert a.values.tobytes() == b.values.tobytes()

    def test_draw_baseline_from_distrib(self, small_mlp):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(6)
        ref = rng.standard_normal((20, 6))
        att = smoothgrad(
            small_mlp, x, 0, n=8, stdevs=0.1, seed=3, draw_baseline_from_distrib=True, reference=ref
        )
        assert att.values.shape == (6,)
        with pytest.raises(ValueError):
            smoothgrad(small_mlp, x, 0, n=8, stdevs=0.1, draw_baseline_from_distrib=True)


class TestIntegratedGradients:
    @pytest.mark.parametrize(
        "method", ["riemann_left", "riemann_right", "riemann_middle", "riemann_trapezoid", "gausslegendre"]
    )
    def test_linear_exact_any_method(self, lin3, x3, method):
        n = 4 if method == "gausslegendre" else 1
        att = integrated_gradients(lin3, x3, 0, n_steps=n, method=method)
        np.testing.assert_allclose(att.values, [2.0, -2.0, 2.0], atol=1e-12)
        assert att.values.sum() == pytest.approx(2.0, abs=1e-12)  # f(x) - f(0)

    def test_completeness_on_relu_mlp(self, small_mlp):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(6)
        att = integrated_gradients(small_mlp, x, 1, n_steps=512, method="riemann_trapezoid")
        fx = nn.forward(small_mlp, x)[0][1]
        f0 = nn.forward(small_mlp, np.zeros(6))[0][1]
        assert abs(att.values.sum() - (fx - f0)) < 1e-3

    def test_left_right_gap_shrinks(self, small_mlp):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(6)

        def gap(n):
            left = integrated_gradients(small_mlp, x, 0, n_steps=n, method="riemann_left").values
            right = integrated_gradients(small_mlp, x, 0, n_steps=n, method="riemann_right").values
            return np.abs(left - right).max()

        assert gap(256) < gap(16)

    def test_gauss_legendre_fallback_warns(self, lin3, x3):
        with pytest.warns(UserWarning, match="falling back"):
            integrated_gradients(lin3, x3, 0, n_steps=7, method="gausslegendre")

    def test_quadrature_weights_sum_to_one(self):
        for method in ("riemann_left", "riemann_right", "riemann_middle", "riemann_trapezoid"):
            for n in (1, 2, 5, 33):
                _, w = path_quadrature(method, n)
                assert w.sum() == pytest.approx(1.0, abs=1e-12)
        for n in (4, 8, 16, 32, 64):
            _, w = path_quadrature("gausslegendre", n)
            assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_raw_path_gradient_without_multiplier(self, lin3, x3):
        att = integrated_gradients(lin3, x3, 0, n_steps=1, method="riemann_middle", multiply_by_inputs=False)
        np.testing.assert_allclose(att.values, [1.0, -2.0, 0.5], atol=1e-12)

    def test_baseline_shape_mismatch(self, lin3, x3):
        with pytest.raises(ValueError):
            integrated_gradients(lin3, x3, 0, baseline=np.zeros(4))


class TestDeepLift:
    def test_linear_zero_baseline(self, lin3, x3):
        att = deeplift(lin3, x3, None, 0)
        np.testing.assert_allclose(att.values, [2.0, -2.0, 2.0], atol=1e-15)

    def test_summation_to_delta(self, small_mlp):
        rng = np.random.default_rng(9)
        for _ in range(5):
            x = rng.standard_normal(6)
            baseline = rng.standard_normal(6)
            att = deeplift(small_mlp, x, baseline, 2)
            fx = nn.forward(small_mlp, x)[0][2]
            fb = nn.forward(small_mlp, baseline)[0][2]
            assert abs(att.values.sum() - (fx - fb)) < 1e-9

    def test_equal_input_and_baseline(self, small_mlp):
        x = np.random.default_rng(10).standard_normal(6)
        att = deeplift(small_mlp, x, x.copy(), 0)
        np.testing.assert_array_equal(att.values, np.zeros(6))

    def test_summation_to_delta_on_cnn(self, tiny_cnn_model):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((1, 8, 8))
        att = deeplift(tiny_cnn_model, x, None, 1)
        fx = nn.forward(tiny_cnn_model, x)[0][1]
        f0 = nn.forward(tiny_cnn_model, np.zeros((1, 8, 8)))[0][1]
        assert abs(att.values.sum() - (fx - f0)) < 1e-9


def test_linear_concordance():
    # input*grad == IG == DeepLIFT == saliency-signed paths on a bias-free
    # linear model with zero baseline, all equal w*x.
    w = np.array([[0.3, -1.2, 2.0, 0.7]])
    model = linear_model(w)
    x = np.array([1.0, -2.0, 0.5, 3.0])
    expected = (w[0] * x)
    for att in (
        input_x_gradient(model, x, 0),
        integrated_gradients(model, x, 0, n_steps=1, method="riemann_left"),
        deeplift(model, x, None, 0),
    ):
        np.testing.assert_allclose(att.values, expected, atol=1e-6)

"""All fifteen explanation methods on one input, with their sanity properties.

Run with: python3 demos/02_explainer_gallery.py
"""

import numpy as np

from expleak import nn, zoo
from expleak.data import make_synthetic
from expleak.explain import EXPLAINER_KINDS, Explainer, default_params

print("=== a tiny CNN so the CAM methods have a conv layer to look at ===")
train = make_synthetic(3, 64, 180, 3.0, seed=0, image_shape=(1, 8, 8))
test = make_synthetic(3, 64, 90, 3.0, seed=1, image_shape=(1, 8, 8))
model = zoo.train_named("tiny_cnn", train, test, zoo.TrainConfig(epochs=25, seed=2))
print(f"train acc {model.meta['train_accuracy']:.2f} / test acc {model.meta['test_accuracy']:.2f}")

x = train.X[0]
reference = train  # prototype candidates / noise-baseline pool

print(f"\n{'method':<22}{'dim':>6}{'|values| mean':>16}{'wall time':>12}")
for kind in EXPLAINER_KINDS:
    params = dict(default_params(kind))
    # shrink the sampling methods to demo scale
    if "n_segments" in params:
        params["n_segments"] = 8
    if "n_samples" in params:
        params["n_samples"] = min(params["n_samples"], 64)
    if kind == "anchors":
        params.update({"coverage_samples": 500, "batch_size": 50})
    if kind == "integrated_gradients":
        params["n_steps"] = 16
    e = Explainer(kind, params=params, reference=reference)
    att = e.attribute(model, x, seed=0)
    print(f"{kind:<22}{att.flat.size:>6}{np.abs(att.values).mean():>16.5f}{att.wall_time_seconds:>11.4f}s")

print("\n=== a few of the properties the test suite pins down ===")
lin = nn.Model([nn.dense(3, 1)], [{"W": np.array([[1.0, -2.0, 0.5]]), "b": np.zeros(1)}], (3,))
xx = np.array([2.0, 1.0, 4.0])
from expleak.explain import deeplift, input_x_gradient, integrated_gradients, kernel_shap, occlusion, segment_grid

seg = segment_grid((3,), 3)
print("on a linear model, five methods agree exactly with w*x:")
print("  input x gradient   ", input_x_gradient(lin, xx, 0).values)
print("  integrated grads   ", integrated_gradients(lin, xx, 0, n_steps=1, method="riemann_left").values)
print("  deeplift           ", deeplift(lin, xx, None, 0).values)
print("  exact kernel shap  ", kernel_shap(lin, xx, 0, seg).values)
print("  1-wide occlusion   ", occlusion(lin, xx, 0, (1,), (1,)).values)

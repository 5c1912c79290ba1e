"""Train a small model and inspect input gradients under the three ReLU rules.

Run with: python3 demos/01_models_and_gradients.py
"""

import numpy as np

from expleak import nn, zoo
from expleak.data import make_synthetic

print("=== data: Gaussian class blobs ===")
train = make_synthetic(num_classes=4, d=8, n=240, class_separation=2.5, seed=0)
test = make_synthetic(num_classes=4, d=8, n=120, class_separation=2.5, seed=1)
print(f"{len(train)} train / {len(test)} test samples, {train.num_classes} classes, d={train.X.shape[1]}")

print("\n=== training an MLP with cosine-annealed SGD ===")
cfg = zoo.TrainConfig(epochs=40, learning_rate=0.1, weight_decay=1e-4, seed=3)
model = zoo.train_named("mlp_a", train, test, cfg)
print(f"train accuracy {model.meta['train_accuracy']:.3f}, test accuracy {model.meta['test_accuracy']:.3f}")
print(f"learning rate went {model.meta['log'][0]['lr']:.3f} -> {model.meta['log'][-1]['lr']:.5f}")

print("\n=== input gradients: standard vs deconv vs guided ===")
x = train.X[0]
logits, _ = nn.forward(model, x)
pred = int(np.argmax(logits))
for rule in nn.RELU_RULES:
    g = nn.input_gradient(model, x, pred, rule=rule)
    print(f"{rule:>9}: |g| mean {np.abs(g).mean():.4f}, sign pattern {np.sign(g).astype(int)}")

print("\nThe rules agree wherever forward activations and backward gradients")
print("are both positive, and differ elsewhere (deconv keeps positive gradients")
print("regardless of the forward pass; guided requires both).")

print("\n=== gradients agree with finite differences (away from ReLU kinks) ===")


def near_kink(point, margin=1e-3):
    _, trace = nn.forward(model, point)
    return any(
        spec.kind == "relu" and np.any(np.abs(pre) < margin)
        for spec, pre in zip(model.layers, trace.layer_inputs)
    )


rng = np.random.default_rng(9)
probe = train.X[0]
while near_kink(probe):
    probe = rng.standard_normal(8)
h = 1e-5
fd = np.zeros_like(probe)
for i in range(len(probe)):
    xp, xm = probe.copy(), probe.copy()
    xp[i] += h
    xm[i] -= h
    fd[i] = (nn.forward(model, xp)[0][pred] - nn.forward(model, xm)[0][pred]) / (2 * h)
g = nn.input_gradient(model, probe, pred)
print(f"max |analytic - finite difference| = {np.abs(g - fd).max():.2e}")

print("\n=== model persistence round-trip ===")
import tempfile, pathlib

with tempfile.TemporaryDirectory() as td:
    path = pathlib.Path(td) / "model.xlk"
    nn.save_model(model, path)
    loaded = nn.load_model(path)
    same = all(
        np.array_equal(p0[k], p1[k])
        for p0, p1 in zip(model.params, loaded.params)
        for k in p0
    )
    print(f"wrote {path.stat().st_size} bytes; parameters identical after reload: {same}")

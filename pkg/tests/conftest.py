import numpy as np
import pytest

from expleak import nn


def linear_model(weights, bias=None):
    """Bias-free (by default) single dense layer: the concordance oracle model."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.zeros(w.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    return nn.Model([nn.dense(w.shape[1], w.shape[0])], [{"W": w.copy(), "b": b.copy()}], (w.shape[1],))


@pytest.fixture
def lin3():
    """One-row linear model W=[[1,-2,0.5]] used across the trivial examples."""
    return linear_model([[1.0, -2.0, 0.5]])


@pytest.fixture
def x3():
    return np.array([2.0, 1.0, 4.0])


@pytest.fixture
def small_mlp():
    """2-hidden-layer ReLU MLP on 6 features, fixed init."""
    return nn.init_model(
        [nn.dense(6, 16), nn.relu(), nn.dense(16, 8), nn.relu(), nn.dense(8, 3)],
        (6,),
        seed=5,
    )


@pytest.fixture
def tiny_cnn_model():
    return nn.init_model(
        [nn.conv2d(1, 4, 3), nn.relu(), nn.avgpool2d(2), nn.flatten(), nn.dense(4 * 3 * 3, 3)],
        (1, 8, 8),
        seed=7,
    )


def central_diff_input(model, x, class_index, h=1e-4):
    """Finite-difference oracle for input gradients."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        fp = nn.forward(model, xp)[0][class_index]
        fm = nn.forward(model, xm)[0][class_index]
        grad[idx] = (fp - fm) / (2 * h)
        it.iternext()
    return grad


def away_from_kinks(model, x, margin=1e-3):
    """True if no ReLU pre-activation sits within ``margin`` of zero."""
    _, trace = nn.forward(model, np.asarray(x, dtype=np.float64))
    for spec, pre in zip(model.layers, trace.layer_inputs):
        if spec.kind == "relu" and np.any(np.abs(pre) < margin):
            return False
    return True

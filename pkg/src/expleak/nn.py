"""Minimal dense/convolutional network kernel with pluggable ReLU backward rules.

Everything runs on float64 numpy arrays.  Five layer kinds are supported
(dense, conv2d, relu, flatten, avgpool2d), which is enough for the MLPs and
the tiny CNN used by the auditing pipeline.  Forward and gradient functions
are pure with respect to the model, so they are safe to call concurrently;
only the trainer in :mod:`expleak.zoo` mutates parameters, one model at a
time.

The backward pass through ReLU supports three rules:

* ``standard`` -- gradient passes where the forward pre-activation was > 0;
* ``deconv``   -- gradient passes where the incoming backward gradient is > 0;
* ``guided``   -- both conditions at once.

At a pre-activation of exactly 0 the gradient is 0 under every rule.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ShapeMismatchError, UnsupportedLayerError

Array = np.ndarray

LAYER_KINDS = ("dense", "conv2d", "relu", "flatten", "avgpool2d")
RELU_RULES = ("standard", "deconv", "guided")

MODEL_MAGIC = b"XLK1"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    """One layer in a feed-forward stack.

    ``dims`` by kind:
      dense:     (in_features, out_features)
      conv2d:    (in_channels, out_channels, kernel_size, stride)
      relu:      ()
      flatten:   ()
      avgpool2d: (pool,)
    """

    kind: str
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


def dense(in_features: int, out_features: int) -> LayerSpec:
    if in_features < 1 or out_features < 1:
        raise ValueError("dense layer sizes must be positive")
    return LayerSpec("dense", (in_features, out_features))


def conv2d(in_channels: int, out_channels: int, kernel_size: int, stride: int = 1) -> LayerSpec:
    if min(in_channels, out_channels, kernel_size, stride) < 1:
        raise ValueError("conv2d sizes must be positive")
    return LayerSpec("conv2d", (in_channels, out_channels, kernel_size, stride))


def relu() -> LayerSpec:
    return LayerSpec("relu")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def avgpool2d(pool: int = 2) -> LayerSpec:
    if pool < 1:
        raise ValueError("pool size must be positive")
    return LayerSpec("avgpool2d", (pool,))


def layer_output_shape(spec: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape produced by ``spec`` on a single (unbatched) input of ``in_shape``."""
    kind = spec.kind
    if kind == "dense":
        n_in, n_out = spec.dims
        if in_shape != (n_in,):
            raise ShapeMismatchError(f"dense expects shape ({n_in},), got {in_shape}")
        return (n_out,)
    if kind == "conv2d":
        c_in, c_out, k, s = spec.dims
        if len(in_shape) != 3:
            raise ShapeMismatchError(f"conv2d expects rank-3 (C,H,W) input, got {in_shape}")
        c, h, w = in_shape
        if c != c_in:
            raise ShapeMismatchError(f"conv2d expects {c_in} channels, got {c}")
        if h < k or w < k:
            raise ShapeMismatchError(f"conv2d kernel {k} larger than input {h}x{w}")
        return (c_out, (h - k) // s + 1, (w - k) // s + 1)
    if kind == "relu":
        return in_shape
    if kind == "flatten":
        return (int(np.prod(in_shape)),)
    if kind == "avgpool2d":
        (p,) = spec.dims
        if len(in_shape) != 3:
            raise ShapeMismatchError(f"avgpool2d expects rank-3 input, got {in_shape}")
        c, h, w = in_shape
        if h % p or w % p:
            raise ShapeMismatchError(f"avgpool2d pool {p} does not divide {h}x{w}")
        return (c, h // p, w // p)
    raise UnsupportedLayerError(kind)


def composed_shapes(layers: list[LayerSpec], input_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Per-layer output shapes; raises if consecutive layers do not compose."""
    shapes = []
    cur = tuple(input_shape)
    for spec in layers:
        cur = layer_output_shape(spec, cur)
        shapes.append(cur)
    return shapes


@dataclass
class Model:
    """A layer stack plus its parameters and training metadata.

    ``params[i]`` is a dict of float64 arrays for layer ``i`` ("W"/"b" for
    dense and conv2d, empty otherwise).  ``meta`` carries training metadata
    (seed, epochs, accuracies, architecture name) and is persisted in the
    JSON sidecar next to the binary model file.
    """

    layers: list[LayerSpec]
    params: list[dict[str, Array]]
    input_shape: tuple[int, ...]
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return composed_shapes(self.layers, self.input_shape)[-1]

    @property
    def num_classes(self) -> int:
        out = self.output_shape
        if len(out) != 1:
            raise ShapeMismatchError(f"model output is not a vector: {out}")
        return out[0]

    @property
    def conv_layer_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind == "conv2d"]


def init_model(
    layers: list[LayerSpec],
    input_shape: tuple[int, ...],
    seed: int = 0,
    meta: dict[str, Any] | None = None,
) -> Model:
    """Build a model with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) parameters."""
    composed_shapes(layers, input_shape)  # validate composition up front
    rng = np.random.default_rng(seed)
    params: list[dict[str, Array]] = []
    for spec in layers:
        if spec.kind == "dense":
            n_in, n_out = spec.dims
            bound = 1.0 / np.sqrt(n_in)
            params.append(
                {
                    "W": rng.uniform(-bound, bound, size=(n_out, n_in)),
                    "b": rng.uniform(-bound, bound, size=(n_out,)),
                }
            )
        elif spec.kind == "conv2d":
            c_in, c_out, k, _ = spec.dims
            bound = 1.0 / np.sqrt(c_in * k * k)
            params.append(
                {
                    "W": rng.uniform(-bound, bound, size=(c_out, c_in, k, k)),
                    "b": rng.uniform(-bound, bound, size=(c_out,)),
                }
            )
        else:
            params.append({})
    return Model(list(layers), params, tuple(input_shape), meta or {})


@dataclass
class ActivationTrace:
    """Per-layer input and output tensors cached from one forward pass.

    Arrays carry a leading batch dimension.  For a relu layer the cached
    input is its pre-activation; for linear layers input and output differ
    only by the layer map.
    """

    layer_inputs: list[Array]
    layer_outputs: list[Array]

    def __len__(self) -> int:
        return len(self.layer_inputs)


def _require_finite(arr: Array, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{what} contains non-finite values")


def _as_batch(model: Model, x: Array) -> tuple[Array, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == model.input_shape:
        return x[None], True
    if x.shape[1:] == model.input_shape:
        return x, False
    raise ShapeMismatchError(
        f"input shape {x.shape} does not match model input {model.input_shape}"
    )


def _conv2d_forward(x: Array, w: Array, b: Array, stride: int) -> Array:
    n_out, _, k, _ = w.shape
    h_out = (x.shape[2] - k) // stride + 1
    w_out = (x.shape[3] - k) // stride + 1
    out = np.empty((x.shape[0], n_out, h_out, w_out))
    for i in range(h_out):
        for j in range(w_out):
            patch = x[:, :, i * stride : i * stride + k, j * stride : j * stride + k]
            out[:, :, i, j] = np.einsum("bchw,ochw->bo", patch, w)
    return out + b[None, :, None, None]


def _conv2d_input_grad(g: Array, x_shape: tuple[int, ...], w: Array, stride: int) -> Array:
    _, _, k, _ = w.shape
    gx = np.zeros(x_shape)
    for i in range(g.shape[2]):
        for j in range(g.shape[3]):
            gx[:, :, i * stride : i * stride + k, j * stride : j * stride + k] += np.einsum(
                "bo,ochw->bchw", g[:, :, i, j], w
            )
    return gx


def _conv2d_param_grad(g: Array, x: Array, w: Array, stride: int) -> dict[str, Array]:
    _, _, k, _ = w.shape
    gw = np.zeros_like(w)
    for i in range(g.shape[2]):
        for j in range(g.shape[3]):
            patch = x[:, :, i * stride : i * stride + k, j * stride : j * stride + k]
            gw += np.einsum("bo,bchw->ochw", g[:, :, i, j], patch)
    return {"W": gw, "b": g.sum(axis=(0, 2, 3))}


def _layer_forward(spec: LayerSpec, p: dict[str, Array], x: Array) -> Array:
    kind = spec.kind
    if kind == "dense":
        return x @ p["W"].T + p["b"]
    if kind == "conv2d":
        return _conv2d_forward(x, p["W"], p["b"], spec.dims[3])
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "flatten":
        return x.reshape(x.shape[0], -1)
    if kind == "avgpool2d":
        (pool,) = spec.dims
        b, c, h, w = x.shape
        return x.reshape(b, c, h // pool, pool, w // pool, pool).mean(axis=(3, 5))
    raise UnsupportedLayerError(kind)


def _relu_backward(g: Array, pre: Array, rule: str) -> Array:
    if rule == "standard":
        return g * (pre > 0)
    if rule == "deconv":
        return g * (g > 0)
    if rule == "guided":
        return g * (g > 0) * (pre > 0)
    raise ValueError(f"unknown relu rule {rule!r}")


def _layer_input_grad(spec: LayerSpec, p: dict[str, Array], g: Array, x_in: Array, rule: str) -> Array:
    kind = spec.kind
    if kind == "dense":
        return g @ p["W"]
    if kind == "conv2d":
        return _conv2d_input_grad(g, x_in.shape, p["W"], spec.dims[3])
    if kind == "relu":
        return _relu_backward(g, x_in, rule)
    if kind == "flatten":
        return g.reshape(x_in.shape)
    if kind == "avgpool2d":
        (pool,) = spec.dims
        return np.repeat(np.repeat(g, pool, axis=2), pool, axis=3) / (pool * pool)
    raise UnsupportedLayerError(kind)


def forward_batch(model: Model, x: Array) -> tuple[Array, ActivationTrace]:
    """Forward a batch; returns (logits (B, C), trace over every layer)."""
    x, _ = _as_batch(model, x)
    inputs, outputs = [], []
    cur = x
    for spec, p in zip(model.layers, model.params):
        inputs.append(cur)
        cur = _layer_forward(spec, p, cur)
        outputs.append(cur)
    _require_finite(cur, "logits")
    return cur, ActivationTrace(inputs, outputs)


def forward(model: Model, x: Array) -> tuple[Array, ActivationTrace]:
    """Forward a single sample; returns (logits (C,), trace).

    Trace arrays keep their leading batch dimension of 1.
    """
    xb, single = _as_batch(model, x)
    if not single:
        raise ShapeMismatchError("forward() takes a single sample; use forward_batch()")
    logits, trace = forward_batch(model, xb)
    return logits[0], trace


def softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _logit_seed(model: Model, trace: ActivationTrace, class_indices: Array, use_probabilities: bool) -> Array:
    """Gradient of the selected scalar score with respect to the logits."""
    logits = trace.layer_outputs[-1]
    b, c = logits.shape
    class_indices = np.asarray(class_indices, dtype=int)
    if np.any(class_indices < 0) or np.any(class_indices >= c):
        raise ValueError(f"class index out of range [0, {c})")
    onehot = np.zeros((b, c))
    onehot[np.arange(b), class_indices] = 1.0
    if not use_probabilities:
        return onehot
    p = softmax(logits)
    pc = p[np.arange(b), class_indices][:, None]
    return pc * (onehot - p)


def _backward_input(model: Model, trace: ActivationTrace, seed: Array, rule: str) -> Array:
    g = seed
    for i in range(len(model.layers) - 1, -1, -1):
        g = _layer_input_grad(model.layers[i], model.params[i], g, trace.layer_inputs[i], rule)
    return g


def input_gradient_batch(
    model: Model,
    x: Array,
    class_indices: Array | int,
    rule: str = "standard",
    use_probabilities: bool = False,
) -> Array:
    """Per-row gradient of the class score with respect to the input."""
    if rule not in RELU_RULES:
        raise ValueError(f"unknown relu rule {rule!r}")
    xb, _ = _as_batch(model, x)
    _, trace = forward_batch(model, xb)
    idx = np.broadcast_to(np.asarray(class_indices, dtype=int), (xb.shape[0],))
    seed = _logit_seed(model, trace, idx, use_probabilities)
    g = _backward_input(model, trace, seed, rule)
    _require_finite(g, "input gradient")
    return g


def input_gradient(
    model: Model,
    x: Array,
    class_index: int,
    rule: str = "standard",
    use_probabilities: bool = False,
) -> Array:
    """Gradient of class ``class_index``'s score at a single input."""
    g = input_gradient_batch(model, np.asarray(x, dtype=np.float64)[None], class_index, rule, use_probabilities)
    return g[0]


def loss_and_param_gradient(
    model: Model,
    x: Array,
    y: Array,
    loss: str = "cross_entropy",
) -> tuple[float, list[dict[str, Array]]]:
    """Mean loss over the batch and its gradient for every parameter array.

    ``cross_entropy`` is softmax cross-entropy; ``squared_error`` is
    0.5 * ||logits - onehot||^2, both averaged over the batch.
    """
    xb, _ = _as_batch(model, x)
    y = np.asarray(y, dtype=int)
    logits, trace = forward_batch(model, xb)
    b, c = logits.shape
    if np.any(y < 0) or np.any(y >= c):
        raise ValueError(f"label out of range [0, {c})")
    onehot = np.zeros((b, c))
    onehot[np.arange(b), y] = 1.0
    if loss == "cross_entropy":
        p = softmax(logits)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        value = float(-(logp[np.arange(b), y]).mean())
        g = (p - onehot) / b
    elif loss == "squared_error":
        diff = logits - onehot
        value = float(0.5 * (diff**2).sum(axis=1).mean())
        g = diff / b
    else:
        raise ValueError(f"unknown loss {loss!r}")

    grads: list[dict[str, Array]] = [{} for _ in model.layers]
    for i in range(len(model.layers) - 1, -1, -1):
        spec, p, x_in = model.layers[i], model.params[i], trace.layer_inputs[i]
        if spec.kind == "dense":
            grads[i] = {"W": g.T @ x_in, "b": g.sum(axis=0)}
        elif spec.kind == "conv2d":
            grads[i] = _conv2d_param_grad(g, x_in, p["W"], spec.dims[3])
        g = _layer_input_grad(spec, p, g, x_in, "standard")
    return value, grads


def param_gradient(model: Model, x: Array, y: Array, loss: str = "cross_entropy") -> list[dict[str, Array]]:
    return loss_and_param_gradient(model, x, y, loss)[1]


def layer_activations_and_gradient(
    model: Model,
    x: Array,
    class_index: int,
    layer_index: int,
    wrt: str = "output",
    use_probabilities: bool = False,
) -> tuple[Array, Array]:
    """Activation maps of a conv layer and the class-score gradient at them.

    Returns ``(A, G)`` with matching shapes (K, H, W): ``A`` is the layer's
    output (or input with ``wrt="input"``) and ``G`` the gradient of the
    selected class score with respect to it.
    """
    if not 0 <= layer_index < len(model.layers):
        raise UnsupportedLayerError(f"layer index {layer_index} out of range")
    if model.layers[layer_index].kind != "conv2d":
        raise UnsupportedLayerError(
            f"layer {layer_index} is {model.layers[layer_index].kind}, expected conv2d"
        )
    if wrt not in ("output", "input"):
        raise ValueError("wrt must be 'output' or 'input'")
    xb, single = _as_batch(model, x)
    if not single:
        raise ShapeMismatchError("layer_activations_and_gradient takes one sample")
    _, trace = forward_batch(model, xb)
    seed = _logit_seed(model, trace, np.array([class_index]), use_probabilities)
    g = seed
    stop = layer_index if wrt == "output" else layer_index - 1
    for i in range(len(model.layers) - 1, stop, -1):
        g = _layer_input_grad(model.layers[i], model.params[i], g, trace.layer_inputs[i], "standard")
    if wrt == "output":
        act = trace.layer_outputs[layer_index]
    else:
        act = trace.layer_inputs[layer_index]
    return act[0], g[0]


def penultimate_activations(model: Model, x: Array) -> Array:
    """Input to the final layer, per row; the model's embedding space."""
    xb, _ = _as_batch(model, x)
    _, trace = forward_batch(model, xb)
    emb = trace.layer_inputs[-1]
    return emb.reshape(emb.shape[0], -1)


_KIND_TAGS = {k: i for i, k in enumerate(LAYER_KINDS)}


def save_model(model: Model, path: str | Path) -> None:
    """Write the binary model file and a JSON sidecar with metadata.

    Layout: magic "XLK1", u16 format version, u16 layer count, then per
    layer a u8 kind tag, u8 dim count, u32 dims, u8 array count, and per
    array a name, u8 rank, u32 shape and little-endian f64 data.
    The sidecar at ``<path>.json`` holds ``meta`` plus the input shape.
    """
    path = Path(path)
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<HH", MODEL_FORMAT_VERSION, len(model.layers)))
    for spec, p in zip(model.layers, model.params):
        buf.write(struct.pack("<BB", _KIND_TAGS[spec.kind], len(spec.dims)))
        for d in spec.dims:
            buf.write(struct.pack("<I", d))
        names = sorted(p)
        buf.write(struct.pack("<B", len(names)))
        for name in names:
            arr = np.ascontiguousarray(p[name], dtype="<f8")
            nb = name.encode("ascii")
            buf.write(struct.pack("<B", len(nb)))
            buf.write(nb)
            buf.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                buf.write(struct.pack("<I", d))
            buf.write(arr.tobytes())
    path.write_bytes(buf.getvalue())
    sidecar = {"input_shape": list(model.input_shape), "meta": model.meta}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_model(path: str | Path) -> Model:
    path = Path(path)
    raw = path.read_bytes()
    buf = io.BytesIO(raw)
    if buf.read(4) != MODEL_MAGIC:
        raise ValueError(f"{path} is not a model file (bad magic)")
    version, n_layers = struct.unpack("<HH", buf.read(4))
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    layers: list[LayerSpec] = []
    params: list[dict[str, Array]] = []
    for _ in range(n_layers):
        tag, n_dims = struct.unpack("<BB", buf.read(2))
        dims = struct.unpack(f"<{n_dims}I", buf.read(4 * n_dims)) if n_dims else ()
        layers.append(LayerSpec(LAYER_KINDS[tag], tuple(dims)))
        (n_arrays,) = struct.unpack("<B", buf.read(1))
        p: dict[str, Array] = {}
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<B", buf.read(1))
            name = buf.read(name_len).decode("ascii")
            (rank,) = struct.unpack("<B", buf.read(1))
            shape = struct.unpack(f"<{rank}I", buf.read(4 * rank))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(shape)
            p[name] = data.astype(np.float64)
        params.append(p)
    sidecar_path = Path(str(path) + ".json")
    input_shape: tuple[int, ...] | None = None
    meta: dict[str, Any] = {}
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text())
        input_shape = tuple(sidecar.get("input_shape", ()))
        meta = sidecar.get("meta", {})
    if not input_shape:
        # No sidecar: infer what we can from the first layer.
        first = layers[0]
        if first.kind == "dense":
            input_shape = (first.dims[0],)
        else:
            raise ValueError(f"missing sidecar {sidecar_path}; cannot infer input shape")
    return Model(layers, params, input_shape, meta)

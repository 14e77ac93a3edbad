"""Desk-scale convolutional classifier with exact input gradients, in plain numpy.

The attack only needs logits and the gradient of the loss with respect to
the *input pixels* (weights stay frozen), so the network is implemented
directly: every layer provides forward and reverse-mode backward passes,
all in float64 for clean finite-difference verification.  Architecture:
two conv3x3+ReLU+maxpool stages, one hidden dense layer, then the logit
layer.  Model files carry an architecture descriptor so the reader does
not assume fixed shapes.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np


class ClassifierError(Exception):
    pass


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Layers.  x is always batched: images are (B, H, W, C), features (B, D).
# ---------------------------------------------------------------------------


class CenterLayer:
    """Shift inputs from [0, 1] to [-0.5, 0.5]; gradient passes through unchanged."""

    kind = "center"
    params: tuple = ()

    def forward(self, x):
        return x - 0.5, None

    def backward(self, cache, dout):
        return dout, {}


class ConvLayer:
    """3x3 convolution, stride 1, zero padding 1 (same spatial size).

    Implemented as one im2col gather plus a single GEMM per direction so
    the arithmetic runs inside BLAS.
    """

    kind = "conv"

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        if weight.shape[:2] != (3, 3):
            raise ValueError("conv kernels are 3x3")
        self.weight = weight  # (3, 3, c_in, c_out)
        self.bias = bias  # (c_out,)

    @property
    def params(self):
        return ("weight", "bias")

    def _im2col(self, x):
        b, h, w, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        cols = np.empty((b, h, w, 9, c), dtype=x.dtype)
        for di in range(3):
            for dj in range(3):
                cols[:, :, :, di * 3 + dj, :] = xp[:, di : di + h, dj : dj + w, :]
        return cols.reshape(b * h * w, 9 * c)

    def forward(self, x):
        b, h, w, c = x.shape
        cols = self._im2col(x)
        out = cols @ self.weight.reshape(9 * c, -1) + self.bias
        return out.reshape(b, h, w, -1), (x.shape, cols)

    def backward(self, cache, dout):
        x_shape, cols = cache
        b, h, w, c = x_shape
        f = dout.shape[-1]
        dflat = dout.reshape(b * h * w, f)
        dw = (cols.T @ dflat).reshape(3, 3, c, f)
        db = dflat.sum(axis=0)
        dcols = (dflat @ self.weight.reshape(9 * c, f).T).reshape(b, h, w, 9, c)
        dxp = np.zeros((b, h + 2, w + 2, c), dtype=dout.dtype)
        for di in range(3):
            for dj in range(3):
                dxp[:, di : di + h, dj : dj + w, :] += dcols[:, :, :, di * 3 + dj, :]
        return dxp[:, 1:-1, 1:-1, :], {"weight": dw, "bias": db}


class ReluLayer:
    kind = "relu"
    params: tuple = ()

    def forward(self, x):
        mask = x > 0.0
        return x * mask, mask

    def backward(self, cache, dout):
        return dout * cache, {}


class MaxPoolLayer:
    """2x2 max pooling, stride 2; ties route the gradient to the first maximum."""

    kind = "pool"
    params: tuple = ()

    def forward(self, x):
        b, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"pooling needs even spatial dims, got {h}x{w}")
        windows = (
            x.reshape(b, h // 2, 2, w // 2, 2, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(b, h // 2, w // 2, 4, c)
        )
        idx = windows.argmax(axis=3)
        out = np.take_along_axis(windows, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return out, (x.shape, idx)

    def backward(self, cache, dout):
        x_shape, idx = cache
        b, h, w, c = x_shape
        dwin = np.zeros((b, h // 2, w // 2, 4, c), dtype=dout.dtype)
        np.put_along_axis(dwin, idx[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
        dx = (
            dwin.reshape(b, h // 2, w // 2, 2, 2, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(b, h, w, c)
        )
        return dx, {}


class FlattenLayer:
    kind = "flatten"
    params: tuple = ()

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, dout):
        return dout.reshape(cache), {}


class DenseLayer:
    kind = "dense"

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = weight  # (d_in, d_out)
        self.bias = bias

    @property
    def params(self):
        return ("weight", "bias")

    def forward(self, x):
        return x @ self.weight + self.bias, x

    def backward(self, cache, dout):
        dw = cache.T @ dout
        db = dout.sum(axis=0)
        return dout @ self.weight.T, {"weight": dw, "bias": db}


@dataclass
class ClassifierOutput:
    logits: np.ndarray
    probabilities: np.ndarray


@dataclass
class ClassifierModel:
    """Layer stack plus metadata; weights live inside the layer objects."""

    layers: list
    class_count: int
    input_size: tuple[int, int, int]
    labels: list[str]
    train_history: dict = field(default_factory=dict)

    @property
    def dtype(self):
        for layer in self.layers:
            if layer.params:
                return getattr(layer, layer.params[0]).dtype
        return np.dtype(np.float64)

    def logits_batch(self, images: np.ndarray) -> np.ndarray:
        x = np.asarray(images, dtype=self.dtype)
        self._check_batch(x)
        for layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def _forward_with_caches(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def loss_and_input_gradient_batch(
        self, images: np.ndarray, target: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-image cross-entropy of the target class and its pixel gradients.

        Returns (losses (B,), grads (B,H,W,3), probabilities (B,K)).
        """
        if not 0 <= target < self.class_count:
            raise ClassifierError(f"target class {target} outside [0, {self.class_count})")
        x = np.asarray(images, dtype=self.dtype)
        self._check_batch(x)
        logits, caches = self._forward_with_caches(x)
        probs = softmax(logits.astype(np.float64))
        losses = -np.log(np.maximum(probs[:, target], 1e-300))
        dlogits = probs.copy()
        dlogits[:, target] -= 1.0
        grads = self._backward_input(dlogits.astype(self.dtype), caches)
        return losses, grads, probs

    def _backward_input(self, dout, caches):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dout, _ = layer.backward(cache, dout)
        return dout

    def _check_batch(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1:] != self.input_size:
            raise ClassifierError(
                f"expected batch of images shaped {self.input_size}, got {x.shape}"
            )

    def predict_batch(self, images: np.ndarray) -> np.ndarray:
        return self.logits_batch(images).argmax(axis=1)


def forward(model: ClassifierModel, image: np.ndarray) -> ClassifierOutput:
    """Logits and softmax probabilities for a single image."""
    logits = model.logits_batch(np.asarray(image)[None])[0]
    return ClassifierOutput(logits=logits, probabilities=softmax(logits))


def loss_and_input_gradient(
    model: ClassifierModel, image: np.ndarray, target: int
) -> tuple[float, np.ndarray]:
    """Cross-entropy of the target class and its exact gradient w.r.t. the pixels."""
    losses, grads, _ = model.loss_and_input_gradient_batch(np.asarray(image)[None], target)
    return float(losses[0]), grads[0]


# ---------------------------------------------------------------------------
# Construction and training
# ---------------------------------------------------------------------------


def build_model(
    input_size: tuple[int, int, int] = (64, 64, 3),
    class_count: int = 10,
    labels: list[str] | None = None,
    conv_channels: tuple[int, int] = (12, 24),
    hidden_units: int = 64,
    seed: int = 0,
    dtype=np.float32,
) -> ClassifierModel:
    """Randomly initialized two-stage conv net (He-scaled init).

    float32 is the working precision; pass float64 when checking gradients
    against finite differences.
    """
    h, w, c = input_size
    if h % 4 or w % 4:
        raise ValueError("input height/width must be divisible by 4 (two pooling stages)")
    rng = np.random.default_rng(seed)
    c1, c2 = conv_channels

    def he(shape, fan_in):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)

    def zeros(n):
        return np.zeros(n, dtype=dtype)

    flat = (h // 4) * (w // 4) * c2
    layers = [
        CenterLayer(),
        ConvLayer(he((3, 3, c, c1), 9 * c), zeros(c1)),
        ReluLayer(),
        MaxPoolLayer(),
        ConvLayer(he((3, 3, c1, c2), 9 * c1), zeros(c2)),
        ReluLayer(),
        MaxPoolLayer(),
        FlattenLayer(),
        DenseLayer(he((flat, hidden_units), flat), zeros(hidden_units)),
        ReluLayer(),
        DenseLayer(he((hidden_units, class_count), hidden_units), zeros(class_count)),
    ]
    if labels is None:
        labels = [f"class {i}" for i in range(class_count)]
    if len(labels) != class_count:
        raise ValueError("labels length must equal class_count")
    return ClassifierModel(
        layers=layers, class_count=class_count, input_size=(h, w, c), labels=list(labels)
    )


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1.5e-3
    batch_size: int = 64
    max_epochs: int = 30
    target_accuracy: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    conv_channels: tuple[int, int] = (12, 24)
    hidden_units: int = 64


def accuracy(model: ClassifierModel, images: np.ndarray, labels: np.ndarray, batch: int = 128) -> float:
    hits = 0
    for start in range(0, len(labels), batch):
        pred = model.predict_batch(images[start : start + batch])
        hits += int((pred == labels[start : start + batch]).sum())
    return hits / len(labels)


def train_reference(
    train_set, test_set, config: TrainingConfig = TrainingConfig(), seed: int = 0
) -> ClassifierModel:
    """Train the reference net until it clears the test-accuracy bar.

    Deterministic given the seed (seeded init and shuffling, fixed batch
    order).  Raises ClassifierError if the bar is not reached within the
    epoch budget.
    """
    size = train_set.images.shape[1]
    model = build_model(
        input_size=(size, size, 3),
        class_count=len(train_set.label_names),
        labels=train_set.label_names,
        conv_channels=config.conv_channels,
        hidden_units=config.hidden_units,
        seed=seed,
    )
    rng = np.random.default_rng(seed + 1)
    params = [
        (layer, name) for layer in model.layers for name in layer.params
    ]
    m_state = [np.zeros_like(getattr(layer, name)) for layer, name in params]
    v_state = [np.zeros_like(getattr(layer, name)) for layer, name in params]
    step = 0
    history = []
    n = len(train_set)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            x = train_set.images[batch_idx].astype(model.dtype)
            y = train_set.labels[batch_idx]
            logits, caches = model._forward_with_caches(x)
            probs = softmax(logits.astype(np.float64))
            epoch_loss += float(-np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300)).sum())
            dlogits = ((probs - np.eye(model.class_count)[y]) / len(y)).astype(model.dtype)
            # Backward pass collecting parameter gradients.
            grads = {}
            dout = dlogits
            for layer, cache in zip(reversed(model.layers), reversed(caches)):
                dout, layer_grads = layer.backward(cache, dout)
                for pname, g in layer_grads.items():
                    grads[(id(layer), pname)] = g
            step += 1
            for i, (layer, pname) in enumerate(params):
                g = grads[(id(layer), pname)]
                m_state[i] = config.beta1 * m_state[i] + (1 - config.beta1) * g
                v_state[i] = config.beta2 * v_state[i] + (1 - config.beta2) * g * g
                m_hat = m_state[i] / (1 - config.beta1**step)
                v_hat = v_state[i] / (1 - config.beta2**step)
                setattr(
                    layer,
                    pname,
                    getattr(layer, pname)
                    - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon),
                )
        test_acc = accuracy(model, test_set.images, test_set.labels)
        history.append({"epoch": epoch, "train_loss": epoch_loss / n, "test_accuracy": test_acc})
        if test_acc >= config.target_accuracy:
            model.train_history = {"epochs": history, "seed": seed}
            return model
    raise ClassifierError(
        f"test accuracy {history[-1]['test_accuracy']:.3f} below target "
        f"{config.target_accuracy} after {config.max_epochs} epochs"
    )


# ---------------------------------------------------------------------------
# Serialization: a self-describing single-file container (JSON header +
# raw little-endian float64 blobs), byte-deterministic for fixed weights.
# ---------------------------------------------------------------------------

_MAGIC = b"LSMODEL1\n"


def _layer_descriptor(layer) -> dict:
    desc = {"kind": layer.kind}
    if layer.kind == "conv":
        desc["in"] = layer.weight.shape[2]
        desc["out"] = layer.weight.shape[3]
    elif layer.kind == "dense":
        desc["in"] = layer.weight.shape[0]
        desc["out"] = layer.weight.shape[1]
    return desc


def save_model(model: ClassifierModel, path) -> None:
    arrays = []
    payload = io.BytesIO()
    for i, layer in enumerate(model.layers):
        for pname in layer.params:
            src = getattr(layer, pname)
            dtype = "<f4" if src.dtype == np.float32 else "<f8"
            arr = np.ascontiguousarray(src, dtype=dtype)
            arrays.append({"layer": i, "param": pname, "shape": list(arr.shape), "dtype": dtype})
            payload.write(arr.tobytes())
    header = {
        "format": "lightstripe-classifier",
        "version": 1,
        "architecture": [_layer_descriptor(layer) for layer in model.layers],
        "class_count": model.class_count,
        "input_size": list(model.input_size),
        "labels": model.labels,
        "arrays": arrays,
        "train_history": model.train_history,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(f"{len(header_bytes)}\n".encode("ascii"))
        fh.write(header_bytes)
        fh.write(payload.getvalue())


def load_model(path) -> ClassifierModel:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ClassifierError(f"{path} is not a classifier model file")
        header_len = int(fh.readline().strip())
        header = json.loads(fh.read(header_len).decode("utf-8"))
        blob = fh.read()
    layer_map = {
        "center": CenterLayer,
        "relu": ReluLayer,
        "pool": MaxPoolLayer,
        "flatten": FlattenLayer,
    }
    layers = []
    for desc in header["architecture"]:
        kind = desc["kind"]
        if kind == "conv":
            layers.append(ConvLayer(np.zeros((3, 3, desc["in"], desc["out"])), np.zeros(desc["out"])))
        elif kind == "dense":
            layers.append(DenseLayer(np.zeros((desc["in"], desc["out"])), np.zeros(desc["out"])))
        elif kind in layer_map:
            layers.append(layer_map[kind]())
        else:
            raise ClassifierError(f"unknown layer kind {kind!r} in {path}")
    offset = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        dtype = spec.get("dtype", "<f8")
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset += count * np.dtype(dtype).itemsize
        native = np.float32 if dtype == "<f4" else np.float64
        setattr(layers[spec["layer"]], spec["param"], arr.astype(native))
    return ClassifierModel(
        layers=layers,
        class_count=header["class_count"],
        input_size=tuple(header["input_size"]),
        labels=list(header["labels"]),
        train_history=header.get("train_history", {}),
    )

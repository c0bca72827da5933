"""A small convolutional network written directly in numpy.

Topology: conv(k1, F1) -> ReLU -> conv(k2, F2) -> ReLU -> flatten -> dense(H)
-> ReLU -> dense(classes) -> softmax. Convolutions are stride 1 with no
padding and there is no pooling. Training is plain mini-batch SGD on the mean
cross-entropy. Tensors are channels-last, ``(batch, H, W, C)``.
"""
from __future__ import annotations

import csv
import struct
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from qdesign.errors import FormatError, ShapeError
from qdesign.imaging import Dataset

PROB_FLOOR = 1e-12


@dataclass
class CnnConfig:
    conv1_filters: int = 32
    conv1_size: int = 2
    conv2_filters: int = 64
    conv2_size: int = 3
    fc_units: int = 512
    classes: int = 2
    learning_rate: float = 0.001
    batch_size: int = 100
    epochs: int = 200
    seed: int = 0
    precision: str = "float32"
    init_std: float = 0.1
    init_bias: float = 0.1

    def __post_init__(self):
        counts = (self.conv1_filters, self.conv1_size, self.conv2_filters, self.conv2_size,
                  self.fc_units, self.classes, self.batch_size)
        if min(counts) < 1:
            raise ValueError("layer sizes and batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.dtype(self.precision)


# --- stateless layer maths --------------------------------------------------

def _patches(x: np.ndarray, k: int) -> np.ndarray:
    """(B, H, W, C) -> (B, H-k+1, W-k+1, k, k, C) view of every k x k patch."""
    win = sliding_window_view(x, (k, k), axis=(1, 2))  # (B, H', W', C, k, k)
    return win.transpose(0, 1, 2, 4, 5, 3)


def conv2d_forward(x: np.ndarray, filters: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid, stride-1 convolution.

    ``x`` is ``(H, W, C)`` or ``(B, H, W, C)``; ``filters`` is ``(F, k, k, C)``.
    Each output pixel is ``W . patch + b`` per filter.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    f, k, k2, c = filters.shape
    if k != k2 or x.ndim != 4 or x.shape[-1] != c or bias.shape != (f,):
        raise ShapeError(f"conv input {x.shape} incompatible with filters {filters.shape} / bias {bias.shape}")
    b, h, w, _ = x.shape
    if h < k or w < k:
        raise ShapeError(f"image {h}x{w} smaller than {k}x{k} filter")
    cols = _patches(x, k).reshape(-1, k * k * c)
    out = cols @ filters.reshape(f, -1).T + bias
    out = out.reshape(b, h - k + 1, w - k + 1, f)
    return out[0] if single else out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(f"dense input {x.shape} incompatible with weights {w.shape} / bias {b.shape}")
    return x @ w.T + b


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label) -> float | np.ndarray:
    """``-ln p[label]`` with the probability clamped below at 1e-12."""
    probs = np.asarray(probs)
    if probs.ndim == 1:
        return float(-np.log(max(float(probs[label]), PROB_FLOOR)))
    picked = probs[np.arange(len(probs)), np.asarray(label)]
    return -np.log(np.maximum(picked, PROB_FLOOR))


# --- layers ------------------------------------------------------------------

class Conv2D:
    kind = 1

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = weight
        self.bias = bias

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        self._x = x
        return conv2d_forward(x, self.weight, self.bias)

    def backward(self, grad, need_input_grad=True):
        f, k, _, c = self.weight.shape
        x = self._x
        cols = _patches(x, k).reshape(-1, k * k * c)
        g = grad.reshape(-1, f)
        grads = [(g.T @ cols).reshape(self.weight.shape), g.sum(axis=0)]
        if not need_input_grad:
            return None, grads
        dcols = (g @ self.weight.reshape(f, -1)).reshape(grad.shape[:3] + (k, k, c))
        dx = np.zeros_like(x)
        ho, wo = grad.shape[1:3]
        for a in range(k):
            for b in range(k):
                dx[:, a:a + ho, b:b + wo, :] += dcols[:, :, :, a, b, :]
        return dx, grads


class ReLU:
    kind = 2
    params: list = []

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, grad, need_input_grad=True):
        return grad * self._mask, []


class Flatten:
    kind = 3
    params: list = []

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(len(x), -1)

    def backward(self, grad, need_input_grad=True):
        return grad.reshape(self._shape), []


class Dense:
    kind = 4

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = weight
        self.bias = bias

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        self._x = x
        return dense_forward(x, self.weight, self.bias)

    def backward(self, grad, need_input_grad=True):
        grads = [grad.T @ self._x, grad.sum(axis=0)]
        return (grad @ self.weight if need_input_grad else None), grads


class CnnModel:
    """Layer stack plus the input shape it was built for."""

    def __init__(self, layers: list, input_shape: tuple[int, int, int]):
        self.layers = layers
        self.input_shape = tuple(input_shape)

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def dtype(self):
        return self.params[0].dtype

    def check_input(self, x: np.ndarray):
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"model expects images of shape {self.input_shape}, got {x.shape[1:]}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch ``(B, H, W, C)``."""
        self.check_input(x)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    def copy(self) -> "CnnModel":
        return CnnModel(_build_layers([p.copy() for p in self.params], self.topology()), self.input_shape)

    def topology(self) -> list[tuple[int, tuple[int, ...]]]:
        return [(layer.kind, layer.weight.shape if layer.params else ()) for layer in self.layers]


def _build_layers(params: list[np.ndarray], topology) -> list:
    layers, it = [], iter(params)
    for kind, _ in topology:
        if kind == Conv2D.kind:
            layers.append(Conv2D(next(it), next(it)))
        elif kind == Dense.kind:
            layers.append(Dense(next(it), next(it)))
        elif kind == ReLU.kind:
            layers.append(ReLU())
        elif kind == Flatten.kind:
            layers.append(Flatten())
        else:
            raise FormatError(f"unknown layer kind {kind}")
    return layers


def init_model(cfg: CnnConfig, input_shape: tuple[int, int, int], rng: np.random.Generator) -> CnnModel:
    """Gaussian weights (std ``init_std``) and constant biases ``init_bias``."""
    h, w, c = input_shape
    h1, w1 = h - cfg.conv1_size + 1, w - cfg.conv1_size + 1
    h2, w2 = h1 - cfg.conv2_size + 1, w1 - cfg.conv2_size + 1
    if h2 < 1 or w2 < 1:
        raise ShapeError(f"input {input_shape} too small for filters {cfg.conv1_size} and {cfg.conv2_size}")
    dt = cfg.dtype

    def weight(*shape):
        return (rng.standard_normal(shape) * cfg.init_std).astype(dt)

    def bias(n):
        return np.full(n, cfg.init_bias, dtype=dt)

    layers = [
        Conv2D(weight(cfg.conv1_filters, cfg.conv1_size, cfg.conv1_size, c), bias(cfg.conv1_filters)),
        ReLU(),
        Conv2D(weight(cfg.conv2_filters, cfg.conv2_size, cfg.conv2_size, cfg.conv1_filters),
               bias(cfg.conv2_filters)),
        ReLU(),
        Flatten(),
        Dense(weight(cfg.fc_units, h2 * w2 * cfg.conv2_filters), bias(cfg.fc_units)),
        ReLU(),
        Dense(weight(cfg.classes, cfg.fc_units), bias(cfg.classes)),
    ]
    return CnnModel(layers, input_shape)


def loss_and_gradients(model: CnnModel, x: np.ndarray, labels: np.ndarray):
    """Mean batch cross-entropy, its gradients (in ``model.params`` order) and the probabilities."""
    logits = model.forward(x)
    probs = softmax(logits)
    loss = float(cross_entropy(probs, labels).mean())
    grad = probs.copy()
    grad[np.arange(len(labels)), labels] -= 1
    grad /= len(labels)
    per_layer = []
    for pos in range(len(model.layers) - 1, -1, -1):
        grad, g = model.layers[pos].backward(grad, need_input_grad=pos > 0)
        per_layer.append(g)
    grads = [g for layer_grads in reversed(per_layer) for g in layer_grads]
    return loss, grads, probs


def backward(model: CnnModel, batch: tuple[np.ndarray, np.ndarray]) -> list[np.ndarray]:
    """Analytic gradients of the mean batch cross-entropy w.r.t. every parameter."""
    x, labels = batch
    return loss_and_gradients(model, x, np.asarray(labels))[1]


def sgd_step(model: CnnModel, gradients: list[np.ndarray], eta: float) -> CnnModel:
    """In-place ``p <- p - eta * grad`` for every parameter; returns the model."""
    params = model.params
    if len(params) != len(gradients):
        raise ShapeError(f"{len(gradients)} gradients for {len(params)} parameters")
    for p, g in zip(params, gradients):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        p -= (eta * g).astype(p.dtype, copy=False)
    return model


def to_tensor(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 RGB in [0, 255] -> floats in [0, 1]."""
    dtype = np.dtype(dtype)
    return images.astype(dtype) / dtype.type(255)


@dataclass
class TrainReport:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    wall_seconds: float = 0.0

    def final_accuracy(self, last: int = 10) -> float:
        """Mean validation accuracy over the last ``last`` epochs."""
        if not self.rows:
            raise ValueError("empty training report")
        return float(np.mean([r[3] for r in self.rows[-last:]]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_acc", "val_acc"])
            for epoch, loss, tacc, vacc in self.rows:
                w.writerow([epoch, repr(loss), repr(tacc), repr(vacc)])

    @classmethod
    def read_csv(cls, path) -> "TrainReport":
        with open(path, newline="") as fh:
            rows = [(int(r["epoch"]), float(r["train_loss"]), float(r["train_acc"]), float(r["val_acc"]))
                    for r in csv.DictReader(fh)]
        return cls(rows)


def _predict(model: CnnModel, x: np.ndarray, batch: int = 500) -> np.ndarray:
    return np.concatenate([model.forward(x[s:s + batch]).argmax(axis=1) for s in range(0, len(x), batch)])


def evaluate(model: CnnModel, dataset: Dataset) -> float:
    """Fraction of images whose arg-max prediction matches the label."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    x = to_tensor(dataset.images, model.dtype)
    model.check_input(x)
    return float(np.mean(_predict(model, x) == dataset.labels))


def train(
    train_set: Dataset,
    val_set: Dataset,
    cfg: CnnConfig,
    rng: np.random.Generator,
    log=None,
) -> tuple[CnnModel, TrainReport]:
    """Initialise a model and run ``cfg.epochs`` epochs of shuffled mini-batch SGD.

    Each epoch visits every training image once; the last batch may be short.
    ``log``, if given, is called with each report row.
    """
    if train_set.images.shape[1:] != val_set.images.shape[1:]:
        raise ShapeError("training and validation images differ in shape")
    input_shape = tuple(train_set.images.shape[1:])
    model = init_model(cfg, input_shape, rng)
    report = TrainReport()
    x_train = to_tensor(train_set.images, cfg.dtype)
    y_train = train_set.labels.astype(np.int64)
    if y_train.max(initial=0) >= cfg.classes:
        raise ShapeError(f"label {y_train.max()} out of range for {cfg.classes} classes")
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x_train))
        loss_sum, correct = 0.0, 0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads, probs = loss_and_gradients(model, x_train[idx], y_train[idx])
            loss_sum += loss * len(idx)
            correct += int(np.sum(probs.argmax(axis=1) == y_train[idx]))
            sgd_step(model, grads, cfg.learning_rate)
        row = (epoch, loss_sum / len(order), correct / len(order), evaluate(model, val_set))
        report.rows.append(row)
        if log is not None:
            log(row)
    report.wall_seconds = time.perf_counter() - start
    return model, report


# --- QCNN checkpoints ---------------------------------------------------------

QCNN_MAGIC = b"QCNN"
QCNN_VERSION = 1
INPUT_KIND = 0


def save_checkpoint(path, model: CnnModel) -> None:
    """Topology block then every parameter as little-endian float32."""
    topo = [(INPUT_KIND, model.input_shape)] + model.topology()
    with open(path, "wb") as fh:
        fh.write(QCNN_MAGIC)
        fh.write(struct.pack("<HB", QCNN_VERSION, len(topo)))
        for kind, dims in topo:
            fh.write(struct.pack("<BB", kind, len(dims)))
            fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for p in model.params:
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32) -> CnnModel:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise FormatError(f"{path}: truncated checkpoint at byte offset {pos}")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    (magic,) = take("<4s")
    if magic != QCNN_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0, expected {QCNN_MAGIC!r}")
    version, n_layers = take("<HB")
    if version != QCNN_VERSION:
        raise FormatError(f"{path}: unsupported QCNN version {version} at byte offset 4")
    topo = []
    for _ in range(n_layers):
        kind, ndim = take("<BB")
        topo.append((kind, take(f"<{ndim}I")))
    if not topo or topo[0][0] != INPUT_KIND:
        raise FormatError(f"{path}: checkpoint does not start with an input-shape block")
    input_shape, topo = topo[0][1], topo[1:]
    params = []
    for kind, dims in topo:
        if kind in (Conv2D.kind, Dense.kind):
            for shape in (dims, dims[:1]):
                count = int(np.prod(shape))
                if pos + 4 * count > len(data):
                    raise FormatError(f"{path}: truncated parameters at byte offset {pos}")
                arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
                params.append(arr.astype(dtype))
                pos += 4 * count
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes at byte offset {pos}")
    return CnnModel(_build_layers(params, topo), input_shape)

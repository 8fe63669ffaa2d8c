"""Dense feedforward note classifiers trained with momentum SGD on BCE.

Three input layouts are supported:

* ``A``: one spectrogram frame (``bins`` features).
* ``B``: a context window flattened to ``context * bins`` features.
* ``C``: a context window whose frames go through one shared dense layer,
  concatenated before the remaining layers.

Every model ends in 128 sigmoid units, one per MIDI note. Parameters are
float64.
"""

from dataclasses import dataclass, field
import json
import struct

import numpy as np

from .errors import ConfigError, EmptyInputError, FormatError, ShapeError

OUTPUT_UNITS = 128
EPS = 1e-7
CHECKPOINT_MAGIC = b"MNET0001"
MODELS = ("A", "B", "C")
ACTIVATIONS = ("relu", "sigmoid", "tanh")
DEFAULT_HIDDEN = {"A": (512, 256), "B": (1024, 256), "C": (512,)}


@dataclass(frozen=True)
class NetworkConfig:
    model: str = "A"
    input_bins: int = 1025
    context: int = 1
    hidden: tuple | None = None
    activation: str = "relu"
    frame_hidden: int = 256  # model C shared per-frame width
    output_units: int = OUTPUT_UNITS

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.output_units != OUTPUT_UNITS:
            raise ConfigError("output_units is fixed at 128")
        if self.model == "A" and self.context != 1:
            raise ConfigError("model A takes single frames (context = 1)")
        if self.model != "A" and (self.context < 3 or self.context % 2 == 0):
            raise ConfigError(f"model {self.model} needs an odd context >= 3")
        hidden = DEFAULT_HIDDEN[self.model] if self.hidden is None else tuple(self.hidden)
        object.__setattr__(self, "hidden", tuple(int(h) for h in hidden))
        widths = (self.input_bins,) + self.hidden
        if self.model == "C":
            widths += (self.frame_hidden,)
        if any(w <= 0 for w in widths):
            raise ConfigError(f"layer widths must be positive, got {widths}")

    def layer_shapes(self):
        """(fan_in, fan_out) of each dense layer in order."""
        if self.model == "A":
            dims = [self.input_bins, *self.hidden]
        elif self.model == "B":
            dims = [self.context * self.input_bins, *self.hidden]
        else:
            shapes = [(self.input_bins, self.frame_hidden)]
            dims = [self.context * self.frame_hidden, *self.hidden]
            return shapes + list(zip(dims, dims[1:] + [OUTPUT_UNITS]))
        return list(zip(dims, dims[1:] + [OUTPUT_UNITS]))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    validation_fraction: float = 0.2

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    return np.tanh(z)


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    return 1.0 - a * a


@dataclass
class Network:
    config: NetworkConfig
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def activations(self):
        n = len(self.weights)
        return [self.config.activation] * (n - 1) + ["sigmoid"]

    def parameters(self):
        """Weights and biases interleaved in layer order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return Network(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_network(cfg, seed=0):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in cfg.layer_shapes():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(cfg, weights, biases)


def _prepare(net, batch):
    cfg = net.config
    x = np.asarray(batch, dtype=np.float64)
    b = x.shape[0]
    if cfg.model == "C":
        if x.size != b * cfg.context * cfg.input_bins:
            raise ShapeError(f"model C expects {cfg.context} x {cfg.input_bins} per item, got {x.shape[1:]}")
        return x.reshape(b * cfg.context, cfg.input_bins)
    width = net.weights[0].shape[0]
    flat = x.reshape(b, -1)
    if flat.shape[1] != width:
        raise ShapeError(f"model {cfg.model} expects {width} features per item, got {x.shape[1:]}")
    return flat


def _forward(net, batch):
    b = np.asarray(batch).shape[0]
    h = _prepare(net, batch)
    inputs, pre, post = [], [], []
    for li, (w, bias, act) in enumerate(zip(net.weights, net.biases, net.activations)):
        inputs.append(h)
        z = h @ w + bias
        a = _act(act, z)
        pre.append(z)
        post.append(a)
        h = a
        if li == 0 and net.config.model == "C":
            h = a.reshape(b, -1)
    return h, (inputs, pre, post)


def forward(net, batch):
    """Per-note probabilities, shape (batch, 128)."""
    return _forward(net, batch)[0]


def bce_loss(pred, target):
    """Mean binary cross-entropy over every entry; predictions clamped to [eps, 1 - eps]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    p = np.clip(pred, EPS, 1.0 - EPS)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))


def backward(net, batch, targets):
    """Loss and exact gradients of :func:`bce_loss` for every parameter.

    Returns ``(loss, grads)`` with ``grads`` ordered like
    :meth:`Network.parameters`.
    """
    pred, (inputs, pre, post) = _forward(net, batch)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != pred.shape:
        raise ShapeError(f"target shape {targets.shape} != output shape {pred.shape}")
    loss = bce_loss(pred, targets)
    # sigmoid + BCE: d loss / d z_out = (p - t) / entries
    delta = (pred - targets) / pred.size
    grads = [None] * (2 * len(net.weights))
    for li in range(len(net.weights) - 1, -1, -1):
        grads[2 * li] = inputs[li].T @ delta
        grads[2 * li + 1] = delta.sum(axis=0)
        if li == 0:
            break
        back = delta @ net.weights[li].T
        if li == 1 and net.config.model == "C":
            back = back.reshape(pre[0].shape)
        delta = back * _act_grad(net.activations[li - 1], pre[li - 1], post[li - 1])
    return loss, grads


class MomentumSGD:
    """Heavy-ball SGD: ``v = momentum * v - lr * g; p += v``."""

    def __init__(self, net, learning_rate, momentum):
        self.lr = learning_rate
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in net.parameters()]

    def step(self, net, grads):
        for p, v, g in zip(net.parameters(), self.velocity, grads):
            v *= self.momentum
            v -= self.lr * g
            p += v


@dataclass(frozen=True)
class EpochStats:
    mean_loss: float
    batches: int


def train_epoch(net, dataset, cfg, rng, optimizer=None):
    """One shuffled pass of minibatch momentum SGD over ``(inputs, targets)``.

    The mean loss is measured on each batch before its update.
    """
    x, y = dataset
    n = len(x)
    if n == 0:
        raise EmptyInputError("training set is empty")
    if optimizer is None:
        optimizer = MomentumSGD(net, cfg.learning_rate, cfg.momentum)
    order = rng.permutation(n)
    total = 0.0
    batches = 0
    for start in range(0, n, cfg.batch_size):
        idx = np.sort(order[start : start + cfg.batch_size])
        loss, grads = backward(net, x[idx], y[idx])
        optimizer.step(net, grads)
        total += loss * len(idx)
        batches += 1
    return EpochStats(total / n, batches)


def predict(net, inputs, batch_size=1024):
    n = len(inputs)
    if n == 0:
        return np.zeros((0, OUTPUT_UNITS))
    return np.concatenate([forward(net, inputs[i : i + batch_size]) for i in range(0, n, batch_size)])


def _config_block(cfg):
    return json.dumps(
        {
            "model": cfg.model,
            "input_bins": cfg.input_bins,
            "context": cfg.context,
            "hidden": list(cfg.hidden),
            "activation": cfg.activation,
            "frame_hidden": cfg.frame_hidden,
        },
        sort_keys=True,
    ).encode("utf-8")


def encode_checkpoint(net):
    block = _config_block(net.config)
    params = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.parameters())
    return CHECKPOINT_MAGIC + struct.pack("<I", len(block)) + block + params


def decode_checkpoint(raw):
    if raw[:8] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic or version")
    if len(raw) < 12:
        raise FormatError("checkpoint header truncated")
    (size,) = struct.unpack_from("<I", raw, 8)
    try:
        fields = json.loads(raw[12 : 12 + size].decode("utf-8"))
        fields["hidden"] = tuple(fields["hidden"])
        cfg = NetworkConfig(**fields)
    except (ValueError, TypeError, KeyError, ConfigError) as exc:
        raise FormatError(f"bad checkpoint config block: {exc}") from exc
    shapes = cfg.layer_shapes()
    expected = sum(i * o + o for i, o in shapes) * 8
    body = raw[12 + size :]
    if len(body) != expected:
        raise FormatError(f"checkpoint holds {len(body)} parameter bytes, config needs {expected}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in shapes:
        weights.append(values[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(values[pos : pos + fan_out].copy())
        pos += fan_out
    return Network(cfg, weights, biases)


def save_checkpoint(net, path):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(net))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())

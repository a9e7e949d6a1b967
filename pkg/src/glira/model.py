"""Dense feed-forward classifiers with hand-written backpropagation.

Parameters live in one flat float64 vector. Layer ``l`` contributes its
weight matrix of shape ``(fan_in, fan_out)`` in row-major order, followed by
its bias of length ``fan_out``; layers are laid out first to last.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDiverged

__all__ = [
    "EPS_PROB",
    "ArchitectureSpec",
    "Classifier",
    "TrainConfig",
    "init_classifier",
    "forward_logits",
    "softmax",
    "log_softmax",
    "cross_entropy",
    "train",
    "accuracy",
    "predict",
    "save_model",
    "load_model",
]

#: Lower clamp applied to any probability before its logarithm is taken.
EPS_PROB = 1e-12

_ACTIVATIONS = ("relu", "tanh")
_INIT_SCHEMES = ("fan_in_uniform",)


@dataclass(frozen=True)
class ArchitectureSpec:
    layer_widths: tuple
    activation: str = "relu"
    init_scheme: str = "fan_in_uniform"
    init_seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigError("layer_widths needs an input and an output width, all positive")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"activation must be one of {_ACTIVATIONS}")
        if self.init_scheme not in _INIT_SCHEMES:
            raise ConfigError(f"init_scheme must be one of {_INIT_SCHEMES}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def feature_dim(self):
        return self.layer_widths[0]

    @property
    def num_classes(self):
        return self.layer_widths[-1]

    @property
    def num_params(self):
        w = self.layer_widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))

    def to_dict(self):
        return {"layer_widths": list(self.layer_widths), "activation": self.activation,
                "init_scheme": self.init_scheme, "init_seed": self.init_seed}


@dataclass(frozen=True, eq=False)
class Classifier:
    spec: ArchitectureSpec
    params: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64)
        if params.shape != (self.spec.num_params,):
            raise ShapeError(f"expected {self.spec.num_params} parameters, got {params.shape}")
        if not np.all(np.isfinite(params)):
            raise ConfigError("parameters contain NaN or Inf")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    def layers(self):
        """List of ``(W, b)`` views into the flat parameter vector."""
        return _unpack(self.spec, self.params)

    def digest(self):
        return hashlib.sha256(self.params.tobytes()).hexdigest()


def _unpack(spec, params):
    out = []
    offset = 0
    w = spec.layer_widths
    for fan_in, fan_out in zip(w[:-1], w[1:]):
        W = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset:offset + fan_out]
        offset += fan_out
        out.append((W, b))
    return out


def init_classifier(spec):
    """Fan-in scaled uniform initialisation, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    rng = np.random.default_rng([spec.init_seed, 100])
    chunks = []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_out))
    return Classifier(spec, np.concatenate(chunks))


def _activate(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    return np.tanh(a)


def _activate_grad(name, a, h):
    if name == "relu":
        return (a > 0).astype(np.float64)
    return 1.0 - h * h


def _as_batch(model, features):
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.spec.feature_dim:
        raise ShapeError(f"expected features of length {model.spec.feature_dim}, got shape {np.shape(features)}")
    return x, single


def forward_logits(model, features):
    """Logits for one feature vector (returns shape (K,)) or a batch (n, K)."""
    x, single = _as_batch(model, features)
    layers = model.layers()
    h = x
    for i, (W, b) in enumerate(layers):
        a = h @ W + b
        h = a if i == len(layers) - 1 else _activate(model.spec.activation, a)
    return h[0] if single else h


def _forward_cache(model, x):
    layers = model.layers()
    hs = [x]
    pre = []
    h = x
    for i, (W, b) in enumerate(layers):
        a = h @ W + b
        pre.append(a)
        h = a if i == len(layers) - 1 else _activate(model.spec.activation, a)
        hs.append(h)
    return layers, hs, pre


def backward(model, x, dlogits):
    """Gradient of ``sum(dlogits * logits(x))`` with respect to the parameters.

    ``dlogits`` has shape (n, K) and holds the upstream derivative of the loss
    with respect to each row's logits.
    """
    x, _ = _as_batch(model, x)
    layers, hs, pre = _forward_cache(model, x)
    grads = []
    delta = np.asarray(dlogits, dtype=np.float64)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append((hs[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ W.T) * _activate_grad(model.spec.activation, pre[i - 1], hs[i])
    flat = []
    for gW, gb in reversed(grads):
        flat.append(gW.ravel())
        flat.append(gb)
    return np.concatenate(flat)


def softmax(logits, temperature=1.0):
    """Tempered softmax along the last axis, computed with max subtraction."""
    if not temperature > 0:
        raise ConfigError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits, temperature=1.0):
    if not temperature > 0:
        raise ConfigError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(probs, label):
    """``-log(probs[label])`` with the probability clamped to ``[EPS_PROB, 1]``."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        return float(-np.log(np.clip(probs[label], EPS_PROB, 1.0)))
    label = np.asarray(label)
    p = probs[np.arange(len(label)), label]
    return -np.log(np.clip(p, EPS_PROB, 1.0))


def ce_loss_and_grad(model, features, labels):
    """Mean cross-entropy of a batch and its gradient w.r.t. the parameters."""
    x, _ = _as_batch(model, features)
    labels = np.asarray(labels)
    z = forward_logits(model, x)
    p = softmax(z)
    loss = float(np.mean(cross_entropy(p, labels)))
    dz = p.copy()
    dz[np.arange(len(labels)), labels] -= 1.0
    dz /= len(labels)
    return loss, backward(model, x, dz)


@dataclass(frozen=True)
class TrainConfig:
    """Minibatch SGD settings. Defaults follow the usual CIFAR recipe
    (lr 0.1, momentum 0.9, weight decay 5e-4)."""

    steps: int = 1000
    batch_size: int = 64
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("need steps >= 0 and batch_size >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")

    def to_dict(self):
        return dict(self.__dict__)


def batch_schedule(n, batch_size, steps, seed):
    """Yield ``steps`` index arrays; each epoch walks a fresh seeded permutation.

    The last batch of an epoch may be smaller than ``batch_size``.
    """
    rng = np.random.default_rng([seed, 200])
    perm = rng.permutation(n)
    pos = 0
    for _ in range(steps):
        if pos >= n:
            perm = rng.permutation(n)
            pos = 0
        yield perm[pos:pos + batch_size]
        pos += batch_size


def sgd(model, loss_and_grad, n, steps, batch_size, learning_rate, momentum, weight_decay,
        seed, log=None):
    """Run ``steps`` SGD updates and return the trained classifier.

    ``loss_and_grad(classifier, batch_indices)`` returns ``(loss, grad, extra)``
    where ``extra`` is a dict forwarded to ``log(step, loss, extra)``. Weight
    decay is added to the gradient as ``weight_decay * params`` before the
    momentum buffer update ``v = momentum * v + g``; the step is
    ``params -= learning_rate * v``.
    """
    params = model.params.copy()
    velocity = np.zeros_like(params)
    current = model
    for step, idx in enumerate(batch_schedule(n, batch_size, steps, seed)):
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad, extra = loss_and_grad(current, idx)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDiverged(step)
        if log is not None:
            log(step, loss, extra)
        if weight_decay:
            grad = grad + weight_decay * params
        velocity = momentum * velocity + grad if momentum else grad
        with np.errstate(over="ignore", invalid="ignore"):
            params = params - learning_rate * velocity
        if not np.all(np.isfinite(params)):
            raise TrainingDiverged(step, f"parameters became non-finite at step {step}")
        current = Classifier(model.spec, params)
    return current


def train(model, dataset, config, log=None):
    """Train on cross-entropy for exactly ``config.steps`` minibatch steps."""
    if len(dataset) == 0:
        raise ConfigError("cannot train on an empty dataset")
    if dataset.feature_dim != model.spec.feature_dim:
        raise ShapeError("dataset feature_dim does not match the architecture")
    if dataset.num_classes != model.spec.num_classes:
        raise ShapeError("dataset num_classes does not match the architecture")
    x, y = dataset.features, dataset.labels

    def objective(current, idx):
        loss, grad = ce_loss_and_grad(current, x[idx], y[idx])
        return loss, grad, {}

    return sgd(model, objective, len(dataset), config.steps, config.batch_size,
               config.learning_rate, config.momentum, config.weight_decay,
               config.shuffle_seed, log=log)


def predict(model, features):
    return np.argmax(forward_logits(model, features), axis=-1)


def accuracy(model, dataset):
    """Fraction of examples whose argmax logit is the label (ties go to the lower class)."""
    if len(dataset) == 0:
        raise ConfigError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(model, dataset.features) == dataset.labels))


def center_output_layer(model):
    """Copy of ``model`` whose logits sum to zero for every input."""
    params = model.params.copy()
    layers = _unpack(model.spec, params)
    W, b = layers[-1]
    W -= W.mean(axis=1, keepdims=True)
    b -= b.mean()
    return Classifier(model.spec, params)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

MODEL_FORMAT = "glira.classifier/1"


def model_to_dict(model):
    """JSON envelope; ``params`` is base64 of little-endian float64 values."""
    raw = model.params.astype("<f8").tobytes()
    return {"format": MODEL_FORMAT, "spec": model.spec.to_dict(),
            "num_params": int(model.params.size),
            "params": base64.b64encode(raw).decode("ascii")}


def model_from_dict(obj):
    if obj.get("format") != MODEL_FORMAT:
        raise ConfigError(f"unknown model format {obj.get('format')!r}")
    spec = ArchitectureSpec(tuple(obj["spec"]["layer_widths"]), obj["spec"]["activation"],
                            obj["spec"]["init_scheme"], int(obj["spec"]["init_seed"]))
    params = np.frombuffer(base64.b64decode(obj["params"]), dtype="<f8").astype(np.float64)
    return Classifier(spec, params)


def save_model(model, path, **meta):
    obj = model_to_dict(model)
    if meta:
        obj["meta"] = meta
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))

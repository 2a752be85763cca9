"""Dense feed-forward networks trained with SGD + momentum.

Layers store weights as ``(out_dim, in_dim)`` so a batch ``x`` of shape
``(n, in_dim)`` maps to ``x @ W.T + b``. Everything is float64.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from . import tensor
from .errors import ConfigError, DataError, NumericError, ShapeError

log = logging.getLogger(__name__)


class Activation(enum.Enum):
    LINEAR = "linear"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"

    @property
    def code(self):
        return _ACTIVATION_CODES[self]

    @classmethod
    def from_code(cls, code):
        for act, c in _ACTIVATION_CODES.items():
            if c == code:
                return act
        raise ValueError(f"unknown activation code {code}")


_ACTIVATION_CODES = {
    Activation.LINEAR: 0,
    Activation.RELU: 1,
    Activation.SIGMOID: 2,
    Activation.SOFTMAX: 3,
}


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def copy(self):
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class Network:
    input_dim: int
    layers: List[DenseLayer]

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.input_dim < 1:
            raise ConfigError("input_dim must be positive")
        prev = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.weights.ndim != 2 or layer.in_dim != prev:
                raise ShapeError(f"layer {i} expects input width {prev}, has weights {layer.weights.shape}")
            if layer.bias.shape != (layer.out_dim,):
                raise ShapeError(f"layer {i} bias shape {layer.bias.shape} != ({layer.out_dim},)")
            if layer.activation is Activation.SOFTMAX and i != len(self.layers) - 1:
                raise ConfigError(f"softmax is only allowed on the final layer (found on layer {i})")
            prev = layer.out_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim if self.layers else self.input_dim

    @property
    def num_params(self):
        return sum(layer.weights.size + layer.bias.size for layer in self.layers)

    def copy(self):
        return Network(self.input_dim, [layer.copy() for layer in self.layers])


# -- learning-rate schedules ------------------------------------------------

@dataclass(frozen=True)
class LogDecay:
    start: float
    end: float

    def __post_init__(self):
        if not self.start > self.end > 0:
            raise ConfigError(f"LogDecay needs start > end > 0, got {self.start}, {self.end}")


@dataclass(frozen=True)
class LinearDecay:
    start: float
    decay_per_epoch: float


@dataclass(frozen=True)
class Constant:
    lr: float


LrSchedule = Union[LogDecay, LinearDecay, Constant]

LINEAR_DECAY_FLOOR = 1e-12


def lr_at(schedule, epoch, max_epochs):
    if not 0 <= epoch < max_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {max_epochs})")
    if isinstance(schedule, Constant):
        return schedule.lr
    if isinstance(schedule, LinearDecay):
        return max(schedule.start - schedule.decay_per_epoch * epoch, LINEAR_DECAY_FLOOR)
    if isinstance(schedule, LogDecay):
        if max_epochs == 1:
            return schedule.start
        lo, hi = np.log10(schedule.start), np.log10(schedule.end)
        return float(10.0 ** (lo + (hi - lo) * epoch / (max_epochs - 1)))
    raise ConfigError(f"unknown schedule {schedule!r}")


@dataclass
class TrainConfig:
    max_epochs: int = 100
    batch_size: int = 100
    lr_schedule: LrSchedule = field(default_factory=lambda: Constant(0.01))
    momentum: float = 0.9
    patience: int = 10
    min_delta: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("max_epochs, batch_size and patience must all be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.min_delta < 0:
            raise ConfigError("min_delta must be non-negative")


# -- construction -----------------------------------------------------------

def glorot_limit(in_dim, out_dim):
    return np.sqrt(6.0 / (in_dim + out_dim))


def init_layer(in_dim, out_dim, activation, rng):
    """Glorot-uniform weights, zero bias."""
    if in_dim < 1 or out_dim < 1:
        raise ConfigError(f"layer dims must be positive, got ({in_dim}, {out_dim})")
    limit = glorot_limit(in_dim, out_dim)
    weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return DenseLayer(weights, np.zeros(out_dim), Activation(activation))


def build_network(dims, activations, rng):
    """``dims`` lists every width including the input, e.g. ``[784, 128, 10]``."""
    if len(activations) != len(dims) - 1:
        raise ConfigError("need one activation per layer")
    layers = [init_layer(i, o, act, rng) for i, o, act in zip(dims[:-1], dims[1:], activations)]
    return Network(dims[0], layers)


# -- forward ----------------------------------------------------------------

def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


_ACTIVATIONS = {
    Activation.LINEAR: lambda z: z.copy(),
    Activation.RELU: lambda z: np.maximum(z, 0.0),
    Activation.SIGMOID: _sigmoid,
    Activation.SOFTMAX: _softmax,
}

# d(post)/d(pre) as a function of (pre, post); softmax is handled separately.
# ReLU'(0) is taken as 0.
_DERIVATIVES = {
    Activation.LINEAR: lambda z, a: np.ones_like(z),
    Activation.RELU: lambda z, a: (z > 0).astype(np.float64),
    Activation.SIGMOID: lambda z, a: a * (1.0 - a),
}


def apply_activation(tag, pre):
    pre = tensor.check_finite(np.asarray(pre, dtype=np.float64), "pre-activation")
    return _ACTIVATIONS[Activation(tag)](pre)


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: List[np.ndarray]
    post: List[np.ndarray]

    @property
    def output(self):
        return self.post[-1] if self.post else self.inputs


def forward(net, batch, upto=None):
    """Run ``batch`` through the first ``upto`` layers (all when None)."""
    x = tensor.as_matrix(batch)
    if x.shape[1] != net.input_dim:
        raise ShapeError(f"batch width {x.shape[1]} != network input_dim {net.input_dim}")
    layers = net.layers if upto is None else net.layers[:upto]
    pre, post = [], []
    a = x
    for layer in layers:
        z = tensor.matmul(a, layer.weights.T) + layer.bias
        a = apply_activation(layer.activation, z)
        pre.append(z)
        post.append(a)
    tensor.check_finite(a, "network output")
    return ForwardTrace(x, pre, post)


def predict(net, batch, upto=None):
    return forward(net, batch, upto).output


# -- losses -----------------------------------------------------------------

def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse needs equal shapes, got {pred.shape} and {target.shape}")
    n = pred.size
    # an overflowing loss is reported by the caller as a NumericError
    with np.errstate(over="ignore", invalid="ignore"):
        diff = pred - target
        return float(np.sum(diff * diff) / n), 2.0 * diff / n


def cross_entropy_loss(probs, labels):
    """Mean negative log-likelihood; the gradient is w.r.t. the softmax logits."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = probs.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise DataError("labels must be integer class indices")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"label out of range [0, {k})")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise NumericError("probability rows must sum to 1")
    rows = np.arange(n)
    picked = np.maximum(probs[rows, labels], np.finfo(np.float64).tiny)
    loss = float(-np.sum(np.log(picked)) / n)
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    return loss, grad / n


LOSSES = ("mse", "cross_entropy")


def compute_loss(loss_kind, output, targets):
    if loss_kind == "mse":
        return mse_loss(output, targets)
    if loss_kind == "cross_entropy":
        return cross_entropy_loss(output, targets)
    raise ConfigError(f"unknown loss {loss_kind!r}; expected one of {LOSSES}")


# -- backward ---------------------------------------------------------------

Gradients = List[Tuple[np.ndarray, np.ndarray]]


def backward(net, trace, output_grad, softmax_fused=True):
    """Backpropagate ``output_grad`` and return ``[(dW, db), ...]`` per layer.

    With a softmax output layer and ``softmax_fused`` set, ``output_grad`` is
    already the gradient w.r.t. the logits (what ``cross_entropy_loss``
    returns); otherwise the softmax Jacobian is applied.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != trace.output.shape:
        raise ShapeError(f"output grad shape {g.shape} != output shape {trace.output.shape}")
    n_layers = len(trace.post)
    grads = [None] * n_layers
    for i in reversed(range(n_layers)):
        layer = net.layers[i]
        z, a = trace.pre[i], trace.post[i]
        if layer.activation is Activation.SOFTMAX:
            if not softmax_fused:
                g = a * (g - np.sum(g * a, axis=1, keepdims=True))
        else:
            g = g * _DERIVATIVES[layer.activation](z, a)
        a_prev = trace.post[i - 1] if i > 0 else trace.inputs
        grads[i] = (g.T @ a_prev, g.sum(axis=0))
        if i > 0:
            g = g @ layer.weights
    return grads


def loss_and_grads(net, batch, targets, loss_kind, backward_fn=None):
    backward_fn = backward_fn or backward
    trace = forward(net, batch)
    loss, out_grad = compute_loss(loss_kind, trace.output, targets)
    return loss, backward_fn(net, trace, out_grad, softmax_fused=loss_kind == "cross_entropy")


# -- optimisation -----------------------------------------------------------

@dataclass
class OptimizerState:
    velocities: Gradients
    momentum: float

    @classmethod
    def zeros_like(cls, net, momentum):
        vel = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers]
        return cls(vel, momentum)


def sgd_momentum_step(net, grads, state, lr):
    """Classical momentum, in place: ``v = mu*v - lr*g; p += v``."""
    if len(grads) != len(net.layers):
        raise ShapeError(f"{len(grads)} gradient entries for {len(net.layers)} layers")
    for gw, gb in grads:
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError("non-finite gradient; step aborted")
    mu = state.momentum
    for layer, (gw, gb), (vw, vb) in zip(net.layers, grads, state.velocities):
        if gw.shape != layer.weights.shape or gb.shape != layer.bias.shape:
            raise ShapeError("gradient shapes do not match parameters")
        vw *= mu
        vw -= lr * gw
        vb *= mu
        vb -= lr * gb
        layer.weights += vw
        layer.bias += vb
    return net, state


@dataclass
class EarlyStopper:
    patience: int
    min_delta: float
    best: float = np.inf
    wait: int = 0

    def update(self, loss):
        """Record an epoch loss; True means stop."""
        if loss < self.best * (1.0 - self.min_delta):
            self.best = loss
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.patience


def fit(net, inputs, targets, loss_kind, cfg, on_epoch: Optional[Callable] = None):
    """Mini-batch training loop shared by pretraining and fine-tuning.

    Returns the per-epoch loss history; ``net`` is updated in place. The epoch
    loss is the plain mean of the batch losses seen during the epoch.
    """
    x = tensor.as_matrix(inputs)
    targets = np.asarray(targets)
    n = x.shape[0]
    if len(targets) != n:
        raise DataError(f"{n} inputs but {len(targets)} targets")
    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState.zeros_like(net, cfg.momentum)
    stopper = EarlyStopper(cfg.patience, cfg.min_delta)
    history = []
    for epoch in range(cfg.max_epochs):
        lr = lr_at(cfg.lr_schedule, epoch, cfg.max_epochs)
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(net, x[idx], targets[idx], loss_kind)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            batch_losses.append(loss)
            try:
                sgd_momentum_step(net, grads, state, lr)
            except NumericError as exc:
                raise NumericError(f"{exc} at epoch {epoch}") from exc
        epoch_loss = float(np.mean(batch_losses))
        history.append(epoch_loss)
        log.info("epoch %d loss %.6g lr %.3g", epoch, epoch_loss, lr)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss, lr)
        if stopper.update(epoch_loss):
            log.info("early stop after epoch %d", epoch)
            break
    return history


# -- gradient check ---------------------------------------------------------

def _param_arrays(net):
    for layer in net.layers:
        yield layer.weights
        yield layer.bias


def numeric_gradients(net, loss_kind, batch, targets, eps=1e-5):
    """Central differences over every parameter (perturbs ``net`` temporarily)."""
    out = []
    for p in _param_arrays(net):
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp = compute_loss(loss_kind, predict(net, batch), targets)[0]
            flat[j] = orig - eps
            lm = compute_loss(loss_kind, predict(net, batch), targets)[0]
            flat[j] = orig
            gflat[j] = (lp - lm) / (2 * eps)
        out.append(g)
    return out


def gradient_check(net, loss_kind, batch, targets, eps=1e-5, backward_fn=None):
    """Max relative error between analytic and central-difference gradients."""
    if net.num_params > 10_000:
        raise ConfigError(f"network has {net.num_params} params; gradient check is capped at 10^4")
    net = net.copy()
    _, grads = loss_and_grads(net, batch, targets, loss_kind, backward_fn)
    analytic = [g for pair in grads for g in pair]
    numeric = numeric_gradients(net, loss_kind, batch, targets, eps)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst

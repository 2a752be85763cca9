"""Symmetric autoencoder (in -> h1 -> code -> h1 -> in) trained to reconstruct its input."""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataio import IMAGE_DIM
from .errors import ConfigError, DataError, ShapeError
from .nn import Activation, LogDecay, Network, TrainConfig


def default_pretrain_config():
    return TrainConfig(max_epochs=500, batch_size=100, lr_schedule=LogDecay(1e-3, 1e-9), momentum=0.9)


@dataclass
class AutoencoderConfig:
    input_dim: int = IMAGE_DIM
    hidden1: int = 800
    code_dim: int = 300
    train: TrainConfig = field(default_factory=default_pretrain_config)

    def __post_init__(self):
        if not 1 <= self.code_dim < self.hidden1 < self.input_dim:
            raise ConfigError(
                f"autoencoder needs code_dim < hidden1 < input_dim, got "
                f"{self.code_dim}, {self.hidden1}, {self.input_dim}")

    @property
    def dims(self):
        return [self.input_dim, self.hidden1, self.code_dim, self.hidden1, self.input_dim]


AE_ACTIVATIONS = (Activation.RELU, Activation.RELU, Activation.RELU, Activation.LINEAR)


def build_autoencoder(cfg, rng):
    return nn.build_network(cfg.dims, AE_ACTIVATIONS, rng)


def check_autoencoder(net):
    """Raise ShapeError unless ``net`` is a 4-layer symmetric bottleneck network."""
    if len(net.layers) != 4:
        raise ShapeError(f"autoencoder must have 4 layers, got {len(net.layers)}")
    d = [net.input_dim] + [layer.out_dim for layer in net.layers]
    if not (d[0] == d[4] and d[1] == d[3] and d[2] < d[1] < d[0]):
        raise ShapeError(f"layer widths {d} are not a symmetric bottleneck")


def pretrain(net, data, cfg, on_epoch=None):
    """Train ``net`` in place to reconstruct ``data``; returns ``(net, loss_history)``."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise DataError("pretraining needs a non-empty sample matrix")
    if data.shape[1] != net.input_dim:
        raise ShapeError(f"data width {data.shape[1]} != autoencoder input {net.input_dim}")
    history = nn.fit(net, data, data, "mse", cfg, on_epoch)
    return net, history


def encode(net, batch):
    check_autoencoder(net)
    return nn.predict(net, batch, upto=2)


def decode(net, codes):
    check_autoencoder(net)
    return nn.predict(Network(net.layers[2].in_dim, net.layers[2:]), codes)


def reconstruct(net, batch):
    check_autoencoder(net)
    return nn.predict(net, batch)

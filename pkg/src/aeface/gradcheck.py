"""Seeded finite-difference checks over small networks covering every activation/loss pairing."""

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import Activation

R, S, L, SM = Activation.RELU, Activation.SIGMOID, Activation.LINEAR, Activation.SOFTMAX

TOLERANCE = 1e-4
KINK_MARGIN = 1e-3


@dataclass
class Arch:
    name: str
    dims: tuple
    activations: tuple
    loss: str


ARCHITECTURES = (
    Arch("linear/mse", (4, 3), (L,), "mse"),
    Arch("relu-sigmoid-linear/mse", (5, 4, 4, 3), (R, S, L), "mse"),
    Arch("sigmoid-softmax/cross_entropy", (4, 5, 3), (S, SM), "cross_entropy"),
    Arch("relu-sigmoid-softmax/cross_entropy", (6, 5, 4, 3), (R, S, SM), "cross_entropy"),
    Arch("autoencoder-classifier/cross_entropy", (6, 4, 2, 4, 6, 5, 3), (R, R, R, L, S, SM), "cross_entropy"),
)


def _near_kink(net, x):
    trace = nn.forward(net, x)
    return any(
        layer.activation is Activation.RELU and np.any(np.abs(z) < KINK_MARGIN)
        for layer, z in zip(net.layers, trace.pre)
    )


def make_problem(arch, rng, batch=4):
    """Network, batch and targets, redrawing the batch until no ReLU input sits on its kink."""
    net = nn.build_network(arch.dims, arch.activations, rng)
    for layer in net.layers:
        layer.bias[:] = rng.uniform(-0.1, 0.1, size=layer.bias.shape)
    for _ in range(1000):
        x = rng.normal(size=(batch, arch.dims[0]))
        if not _near_kink(net, x):
            break
    else:
        raise RuntimeError(f"could not draw a kink-free batch for {arch.name}")
    if arch.loss == "mse":
        y = rng.normal(size=(batch, arch.dims[-1]))
    else:
        y = rng.integers(0, arch.dims[-1], size=batch)
    return net, x, y


def run(seed=0, backward_fn=None):
    """Yield ``(arch, max_relative_error)`` for each standard architecture."""
    rng = np.random.default_rng(seed)
    for arch in ARCHITECTURES:
        net, x, y = make_problem(arch, rng)
        yield arch, nn.gradient_check(net, arch.loss, x, y, backward_fn=backward_fn)

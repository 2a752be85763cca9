"""Classifier initialised from a pretrained autoencoder, fine-tuning and embedding extraction."""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, DataError, ShapeError
from .nn import Activation, Constant, Network, TrainConfig
from .pretrain import check_autoencoder


class InitMode(enum.Enum):
    ENCODER_ONLY = "encoder_only"
    FULL_AUTOENCODER = "full_autoencoder"
    RANDOM_BASELINE = "random_baseline"


def default_finetune_config():
    return TrainConfig(max_epochs=300, batch_size=100, lr_schedule=Constant(0.002), momentum=0.9)


@dataclass
class ClassifierConfig:
    embed_dim: int = 400
    num_classes: int = 1000
    init_mode: InitMode = InitMode.FULL_AUTOENCODER
    new_layer_activation: Activation = Activation.SIGMOID
    # literal reading of "sigmoid on all layers": also rewrites transferred layers
    force_sigmoid_all: bool = False
    train: TrainConfig = field(default_factory=default_finetune_config)

    def __post_init__(self):
        self.init_mode = InitMode(self.init_mode)
        self.new_layer_activation = Activation(self.new_layer_activation)
        if self.embed_dim < 1 or self.num_classes < 2:
            raise ConfigError("embed_dim must be >= 1 and num_classes >= 2")
        if self.new_layer_activation is Activation.SOFTMAX:
            raise ConfigError("the embedding layer cannot use softmax")


def build_classifier(ae, cfg, rng):
    """Autoencoder body (copied, never aliased) + embedding layer + softmax classifier.

    The head and the random-baseline body draw from independent child streams
    of ``rng``, so for one seed every init mode gets the same head weights.
    """
    try:
        check_autoencoder(ae)
    except ShapeError as exc:
        raise ConfigError(f"cannot build classifier: {exc}") from None
    head_rng, body_rng = rng.spawn(2)
    mode = InitMode(cfg.init_mode)
    if mode is InitMode.FULL_AUTOENCODER:
        body = [layer.copy() for layer in ae.layers]
    elif mode is InitMode.ENCODER_ONLY:
        body = [layer.copy() for layer in ae.layers[:2]]
    else:
        body = [nn.init_layer(l.in_dim, l.out_dim, l.activation, body_rng) for l in ae.layers]
    if cfg.force_sigmoid_all:
        for layer in body:
            layer.activation = Activation.SIGMOID
    feat = body[-1].out_dim
    head = [
        nn.init_layer(feat, cfg.embed_dim, cfg.new_layer_activation, head_rng),
        nn.init_layer(cfg.embed_dim, cfg.num_classes, Activation.SOFTMAX, head_rng),
    ]
    return Network(ae.input_dim, body + head)


def check_classifier(net):
    if len(net.layers) < 2 or net.layers[-1].activation is not Activation.SOFTMAX:
        raise ShapeError("expected a classifier ending in an embedding layer and a softmax layer")


def finetune(net, samples, labels, cfg, on_epoch=None):
    """Cross-entropy training of every layer; returns ``(net, loss_history)``."""
    check_classifier(net)
    labels = np.asarray(labels)
    if labels.ndim != 1 or len(labels) != len(samples):
        raise DataError(f"{len(samples)} samples but labels of shape {labels.shape}")
    k = net.output_dim
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in [0, {k})")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != net.input_dim:
        raise ShapeError(f"sample width does not match classifier input {net.input_dim}")
    history = nn.fit(net, samples, labels.astype(np.intp), "cross_entropy", cfg, on_epoch)
    return net, history


def extract_embeddings(net, batch):
    """Post-activation output of the penultimate (embedding) layer."""
    check_classifier(net)
    return nn.predict(net, batch, upto=len(net.layers) - 1)


def classify(net, batch):
    return np.argmax(nn.predict(net, batch), axis=1)


def accuracy(net, batch, labels):
    return float(np.mean(classify(net, batch) == np.asarray(labels)))

"""Strict JSON run configuration shared by all CLI stages."""

import json
from dataclasses import dataclass, field
from typing import Optional

from .dataio import SynthSpec
from .errors import ConfigError
from .nn import Activation, Constant, LinearDecay, LogDecay, TrainConfig
from .pretrain import AutoencoderConfig, default_pretrain_config
from .transfer import ClassifierConfig, InitMode, default_finetune_config
from .viz import TsneConfig


@dataclass
class ProtocolConfig:
    k: int = 10
    n_same: int = 3000
    n_diff: int = 3000
    # fraction of each synthetic class held out for pairs / evaluation
    test_fraction: float = 0.5

    def __post_init__(self):
        if self.k < 1 or self.n_same < 0 or self.n_diff < 0:
            raise ConfigError("protocol needs k >= 1 and non-negative pair counts")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in [0, 1)")


@dataclass
class Paths:
    manifest: Optional[str] = None
    train_manifest: Optional[str] = None
    test_manifest: Optional[str] = None
    pairs: Optional[str] = None
    ae_model: Optional[str] = None
    classifier: Optional[str] = None
    embeddings: Optional[str] = None


@dataclass
class RunConfig:
    seed: int = 0
    synth: SynthSpec = field(default_factory=SynthSpec)
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    paths: Paths = field(default_factory=Paths)
    figures: bool = True


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


_SCHEDULES = {
    "log_decay": (LogDecay, ("start", "end")),
    "linear_decay": (LinearDecay, ("start", "decay_per_epoch")),
    "constant": (Constant, ("lr",)),
}


def parse_schedule(d, where):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"{where}: lr_schedule needs a 'kind'")
    try:
        cls, fields = _SCHEDULES[d["kind"]]
    except KeyError:
        raise ConfigError(f"{where}: unknown lr_schedule kind {d['kind']!r}") from None
    _check_keys(d, ("kind",) + fields, where)
    missing = [f for f in fields if f not in d]
    if missing:
        raise ConfigError(f"{where}: lr_schedule missing {', '.join(missing)}")
    return cls(*(float(d[f]) for f in fields))


def schedule_to_dict(s):
    for kind, (cls, fields) in _SCHEDULES.items():
        if isinstance(s, cls):
            return {"kind": kind, **{f: getattr(s, f) for f in fields}}
    raise ConfigError(f"unknown schedule {s!r}")


_TRAIN_KEYS = ("max_epochs", "batch_size", "lr_schedule", "momentum", "patience", "min_delta", "seed")


def parse_train(d, base, where):
    _check_keys(d, _TRAIN_KEYS, where)
    kw = {k: getattr(base, k) for k in _TRAIN_KEYS}
    kw.update({k: v for k, v in d.items() if k != "lr_schedule"})
    if "lr_schedule" in d:
        kw["lr_schedule"] = parse_schedule(d["lr_schedule"], where)
    return TrainConfig(**kw)


def train_to_dict(t):
    return {
        "max_epochs": t.max_epochs,
        "batch_size": t.batch_size,
        "lr_schedule": schedule_to_dict(t.lr_schedule),
        "momentum": t.momentum,
        "patience": t.patience,
        "min_delta": t.min_delta,
        "seed": t.seed,
    }


def _simple(cls, d, where, **extra):
    names = list(cls.__dataclass_fields__)
    _check_keys(d, names, where)
    return cls(**{**extra, **d})


def parse_config(d, seed_override=None):
    """Build a RunConfig from a decoded JSON object; unknown keys are errors.

    Any training ``seed`` left unset falls back to the run seed.
    """
    _check_keys(d, RunConfig.__dataclass_fields__, "config")
    seed = int(d.get("seed", 0)) if seed_override is None else int(seed_override)
    try:
        synth = _simple(SynthSpec, d.get("synth", {}), "synth", seed=seed)

        ae_d = dict(d.get("autoencoder", {}))
        _check_keys(ae_d, ("input_dim", "hidden1", "code_dim", "train"), "autoencoder")
        ae_train = parse_train(ae_d.pop("train", {}), _with_seed(default_pretrain_config(), seed), "autoencoder.train")
        autoencoder = AutoencoderConfig(**ae_d, train=ae_train)

        cl_d = dict(d.get("classifier", {}))
        _check_keys(cl_d, ("embed_dim", "num_classes", "init_mode", "new_layer_activation",
                           "force_sigmoid_all", "train"), "classifier")
        cl_train = parse_train(cl_d.pop("train", {}), _with_seed(default_finetune_config(), seed), "classifier.train")
        classifier = ClassifierConfig(**cl_d, train=cl_train)

        protocol = _simple(ProtocolConfig, d.get("protocol", {}), "protocol")
        tsne = _simple(TsneConfig, d.get("tsne", {}), "tsne", seed=seed)
        paths = _simple(Paths, d.get("paths", {}), "paths")
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None
    figures = d.get("figures", True)
    if not isinstance(figures, bool):
        raise ConfigError("figures must be true or false")
    return RunConfig(seed, synth, autoencoder, classifier, protocol, tsne, paths, figures)


def _with_seed(t, seed):
    t.seed = seed
    return t


def load_config(path, seed_override=None):
    if path is None:
        return parse_config({}, seed_override)
    with open(path, encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(d, seed_override)


def config_to_dict(cfg):
    c = cfg.classifier
    return {
        "seed": cfg.seed,
        "synth": dict(vars(cfg.synth)),
        "autoencoder": {
            "input_dim": cfg.autoencoder.input_dim,
            "hidden1": cfg.autoencoder.hidden1,
            "code_dim": cfg.autoencoder.code_dim,
            "train": train_to_dict(cfg.autoencoder.train),
        },
        "classifier": {
            "embed_dim": c.embed_dim,
            "num_classes": c.num_classes,
            "init_mode": InitMode(c.init_mode).value,
            "new_layer_activation": Activation(c.new_layer_activation).value,
            "force_sigmoid_all": c.force_sigmoid_all,
            "train": train_to_dict(c.train),
        },
        "protocol": dict(vars(cfg.protocol)),
        "tsne": dict(vars(cfg.tsne)),
        "paths": dict(vars(cfg.paths)),
        "figures": cfg.figures,
    }


def dump_config(cfg, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config_to_dict(cfg), f, indent=2)
        f.write("\n")

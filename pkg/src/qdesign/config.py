"""Experiment configuration: a flat ``key = value`` text file.

Unknown keys are rejected. ``#`` starts a comment. Optional integers accept
``none``. Booleans accept ``true``/``false``/``1``/``0``/``yes``/``no``.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from qdesign.cnn import CnnConfig
from qdesign.correlators import CORRELATOR_NAMES
from qdesign.ensembles import DEFAULT_EPSILON, ENSEMBLE_NAMES
from qdesign.errors import ConfigError

# Stage tags mixed into derived seeds.
STAGE_GENERATE = 1
STAGE_SPLIT = 2
STAGE_TRAIN = 3


@dataclass
class ExperimentConfig:
    n_qubits: int = 10
    correlator: str = "xxyy"
    ensemble_a: str = "pauli1"
    ensemble_b: str = "haar"
    images_per_class: int = 3125
    batch_m: int = 5
    train_count: int = 5000
    seed: int = 0
    brickwork_depth: typing.Optional[int] = None
    calibrate_brickwork: bool = False
    epsilon_target: float = DEFAULT_EPSILON
    share_draws: bool = True
    threads: int = 1
    # network and optimiser
    conv1_filters: int = 32
    conv1_size: int = 2
    conv2_filters: int = 64
    conv2_size: int = 3
    fc_units: int = 512
    learning_rate: float = 0.001
    batch_size: int = 100
    epochs: int = 200
    precision: str = "float32"
    init_std: float = 0.1
    init_bias: float = 0.1
    # files
    samples_path: str = "samples.qcsm"
    images_path: str = "images.qcim"
    model_path: str = "model.qcnn"
    metrics_path: str = "metrics.csv"
    eval_path: str = "eval.csv"

    def validate(self) -> "ExperimentConfig":
        for key in ("ensemble_a", "ensemble_b"):
            if getattr(self, key) not in ENSEMBLE_NAMES:
                raise ConfigError(f"{key}={getattr(self, key)!r} is not one of {', '.join(ENSEMBLE_NAMES)}")
        if self.correlator not in CORRELATOR_NAMES:
            raise ConfigError(f"correlator={self.correlator!r} is not one of {', '.join(CORRELATOR_NAMES)}")
        if not 1 <= self.n_qubits <= 14:
            raise ConfigError("n_qubits must lie in [1, 14]")
        if self.images_per_class < 1:
            raise ConfigError("images_per_class must be >= 1")
        if self.batch_m < 1:
            raise ConfigError("batch_m must be >= 1")
        if not 0 < self.train_count < 2 * self.images_per_class:
            raise ConfigError(f"train_count must lie in (0, {2 * self.images_per_class})")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        try:
            self.cnn_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def cnn_config(self) -> CnnConfig:
        names = {f.name for f in fields(CnnConfig)} - {"seed", "classes"}
        return CnnConfig(seed=derive_seed(self.seed, STAGE_TRAIN), classes=2,
                         **{k: getattr(self, k) for k in names})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_TYPES = typing.get_type_hints(ExperimentConfig)


def derive_seed(master: int, *path: int) -> int:
    """64-bit seed mixed from the master seed and integer tags (numpy SeedSequence hash)."""
    return int(np.random.SeedSequence([master, *path]).generate_state(1, np.uint64)[0])


def image_seed(master: int, class_index: int, image_index: int) -> int:
    return derive_seed(master, STAGE_GENERATE, class_index, image_index)


def parse_value(key: str, text: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    tp = _TYPES[key]
    text = text.strip()
    optional = typing.get_origin(tp) is typing.Union
    if optional:
        if text.lower() in ("", "none"):
            return None
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    try:
        if tp is bool:
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(text)
        return tp(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} (expected {tp.__name__})") from None


def field_names() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]


def field_type(key: str):
    return _TYPES[key]


def load_config(path) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = parse_value(key, value)
    return ExperimentConfig(**values)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.as_dict().items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif value is None:
            value = "none"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"

"""Python front end for the Y-CT-Net C++ core.

Configs travel as dicts here and as JSON strings across the binding.
Arrays are numpy; every call copies.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    Error,
    IoError,
    NumericError,
    ShapeError,
    dice_ce_loss,
    dice_score,
    generate_phantom,
    plan_windows,
    sliding_window,
    write_phantom_dataset,
)

__all__ = [
    "ConfigError", "Error", "IoError", "NumericError", "ShapeError", "Model",
    "preset", "validate_config", "trace_shapes", "generate_phantom", "dice_ce_loss",
    "dice_score", "hd95", "plan_windows", "sliding_window", "write_phantom_dataset",
    "train", "evaluate_checkpoint", "grad_check",
]


def preset(name):
    return json.loads(_core.preset(name))


def validate_config(document):
    """Raises ConfigError naming the offending field."""
    _core.validate_config(json.dumps(document))


def trace_shapes(model_config):
    """[(name, [C, D, H, W]), ...] in forward order."""
    return [(name, list(shape)) for name, shape in _core.trace_shapes(json.dumps(model_config))]


def hd95(a, b, spacing=(1.0, 1.0, 1.0)):
    """Returns (value_mm, defined)."""
    return _core.hd95(a, b, list(spacing))


def train(document, data, out):
    """Trains on the dataset's train split; returns [(step, loss), ...]."""
    return _core.train(json.dumps(document), str(data), str(out))


def evaluate_checkpoint(checkpoint, data, split="val", overlap=0.5):
    return json.loads(_core.evaluate_checkpoint(str(checkpoint), str(data), split, overlap))


def grad_check(model_config, size=16, params=100, seed=0):
    return json.loads(_core.grad_check(json.dumps(model_config), size, params, seed))


class Model:
    def __init__(self, model_config=None, seed=0, _core_model=None):
        self._m = _core_model if _core_model is not None else _core.Model(json.dumps(model_config), seed)

    @classmethod
    def load(cls, checkpoint):
        return cls(_core_model=_core.Model.load(str(checkpoint)))

    def save(self, checkpoint):
        self._m.save(str(checkpoint))

    def forward(self, x):
        return self._m.forward(x)

    def probabilities(self, x):
        return self._m.probabilities(x)

    @property
    def config(self):
        return json.loads(self._m.config_json())

    def parameter_count(self):
        return self._m.parameter_count()

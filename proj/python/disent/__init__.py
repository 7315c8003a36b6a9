"""Python access to the disent C++ core.

Configurations are plain dicts using the same keys as the CLI's config.json;
missing keys keep their defaults.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    DisentError,
    InputError,
    LoadError,
    NumericError,
    cosine_similarity,
    encode,
    expression_loss,
    fooling_loss,
    linear_probe,
    reconstruction_loss,
)

__all__ = [
    "ConfigError",
    "DisentError",
    "InputError",
    "LoadError",
    "NumericError",
    "cosine_similarity",
    "encode",
    "expression_loss",
    "fooling_loss",
    "generate_synthetic",
    "linear_probe",
    "reconstruction_loss",
    "render",
    "run_cli",
    "train_synthetic",
]


def generate_synthetic(spec=None):
    """Returns a dict with images [n, S, S, C], exp_labels and id_labels."""
    return _core.generate_synthetic(json.dumps(spec or {}))


def render(exp, identity, spec=None):
    """Renders one jitter-free image for the given factor levels."""
    return _core.render(json.dumps(spec or {}), exp, identity)


def train_synthetic(run_config, checkpoint_path):
    """Trains on the synthetic set described by run_config and saves a checkpoint.

    Returns the logged metrics rows as a list of dicts.
    """
    return _core.train_synthetic(json.dumps(run_config), str(checkpoint_path))


def run_cli(*args):
    """Runs the command-line tool in-process; returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])

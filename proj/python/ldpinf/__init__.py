"""Influence-function estimates of how randomized-response LDP changes test loss."""

import json
import os

from ._core import (
    ConfigError,
    DataError,
    NumericalError,
    __version__,
    distortion_matrix,
    label_influence,
    mae,
    observed_distribution,
    recover_distribution,
    spearman_rho,
    train_logistic,
)
from ._core import run_json as _run_json

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "__version__",
    "distortion_matrix",
    "label_influence",
    "load_config",
    "mae",
    "observed_distribution",
    "recover_distribution",
    "run",
    "spearman_rho",
    "train_logistic",
]


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f), os.path.dirname(os.path.abspath(path))


def run(config, base_dir="", output_dir=""):
    """Runs a sweep. `config` is a dict or a path to a JSON config file.

    Returns the report as a dict (rows, groups, baseline, timing). With
    `output_dir` set, the report files are also written there.
    """
    if isinstance(config, (str, os.PathLike)):
        config, base_dir = load_config(config)
    return json.loads(_run_json(json.dumps(config), str(base_dir), str(output_dir)))

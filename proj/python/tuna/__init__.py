# Copyright 2026 The TUNA-CIL Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Class-incremental learning with orthogonal task adapters.

Thin wrapper over the compiled core: configs may be given as dicts, JSON
text or a path to a JSON file, and run reports come back as dicts.
"""

import json
import os

from ._core import (
    ConfigError,
    DataError,
    Model,
    NumericalError,
    ShapeError,
    entropy,
    fuse_adapter_files,
    fuse_vectors,
    select_by_entropy,
    softmax,
    split_classes,
)
from . import _core

STRATEGIES = ("tuna", "entropy", "universal", "maxlogit")

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericalError",
    "ShapeError",
    "STRATEGIES",
    "default_config",
    "entropy",
    "fuse_adapter_files",
    "fuse_vectors",
    "run_experiment",
    "select_by_entropy",
    "softmax",
    "split_classes",
    "synthetic_stream",
]


def _config_text(config):
    if config is None:
        return ""
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, (str, os.PathLike)) and os.path.isfile(config):
        with open(config, encoding="utf-8") as f:
            return f.read()
    if isinstance(config, str):
        return config
    raise TypeError("config must be a dict, JSON text or a path")


def default_config():
    """Every configuration field with its default value."""
    return json.loads(_core.default_config())


def synthetic_stream(config=None, seed=None):
    """Per-task dicts with classes, train_x/train_y and test_x/test_y arrays."""
    return _core.synthetic_stream(_config_text(config), seed)


def run_experiment(config=None, seed=None, out_dir=None):
    """Runs the incremental protocol and returns the report as a dict."""
    return json.loads(_core.run_experiment(_config_text(config), seed, os.fspath(out_dir) if out_dir else ""))

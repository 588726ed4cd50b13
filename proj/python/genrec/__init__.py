# Copyright 2026 The genrec Authors.
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

"""Generative recommendation over collaborative multimodal semantic ids."""

import json
import os

from ._genrec import (
    ConfigError,
    EmptyDatasetError,
    Error,
    NumericError,
    ParseError,
    StageError,
    config_keys,
    dataset_stats,
    default_config,
    hit_rate,
    ndcg,
    normalize_config,
    read_emb,
    sha256_hex,
    stage_names,
    write_emb,
)
from . import _genrec

__all__ = [
    "ConfigError",
    "EmptyDatasetError",
    "Error",
    "NumericError",
    "ParseError",
    "StageError",
    "config_keys",
    "dataset_stats",
    "default_config",
    "hit_rate",
    "ndcg",
    "normalize_config",
    "parse_config",
    "read_emb",
    "run_pipeline",
    "run_stage",
    "sha256_hex",
    "stage_names",
    "write_emb",
]


def parse_config(text="", overrides=None):
    """Returns the effective configuration as a dict of key -> text value."""
    out = {}
    for line in normalize_config(text, list(overrides or [])).splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def _run_dir(run_dir):
    if run_dir is None:
        run_dir = os.environ.get("CEMG_RUN_DIR", "runs/default")
    return os.fspath(run_dir)


def run_pipeline(config="", run_dir=None, overrides=None, force=False):
    """Runs every stage and returns the parsed metrics."""
    text = _genrec.run_pipeline(config, _run_dir(run_dir), list(overrides or []), force)
    return json.loads(text)


def run_stage(stage, config="", run_dir=None, overrides=None, force=False):
    """Runs one stage; returns False when its inputs were unchanged."""
    return _genrec.run_stage(stage, config, _run_dir(run_dir), list(overrides or []), force)

# Copyright 2026 The mudaif Authors
# SPDX-License-Identifier: Apache-2.0
"""Encoder-free vision-language model: Python interface to the C++ core."""

from __future__ import annotations

import json
import os
from typing import Any, Mapping

from ._core import (
    ConfigError,
    Error,
    IoError,
    LengthError,
    NumericError,
    ParameterError,
    ParseError,
    VocabularyError,
)
from ._core import Model as _CoreModel
from ._core import count_params_flops_json as _count_params_flops_json
from ._core import grad_check_json as _grad_check_json
from ._core import make_data as _make_data
from ._core import train_json as _train_json

__all__ = [
    "ConfigError",
    "Error",
    "IoError",
    "LengthError",
    "Model",
    "NumericError",
    "ParameterError",
    "ParseError",
    "VocabularyError",
    "count_params_flops",
    "grad_check",
    "make_data",
    "train",
]


class Model(_CoreModel):
    """A trained checkpoint ready for decoding and evaluation."""

    def evaluate(self, manifest: str | os.PathLike, split: str = "test") -> dict[str, Any]:
        return json.loads(self.evaluate_json(os.fspath(manifest), split))

    @property
    def config(self) -> dict[str, Any]:
        return json.loads(self.config_json())


def make_data(spec: Mapping[str, Any], n: int, seed: int, out: str | os.PathLike) -> str:
    """Writes `n` synthetic scenes and returns the manifest path."""
    return _make_data(json.dumps(dict(spec)), n, seed, os.fspath(out))


def train(config: str | os.PathLike, out: str | os.PathLike) -> dict[str, Any]:
    """Trains from a run-config file and returns the run summary."""
    return json.loads(_train_json(os.fspath(config), os.fspath(out)))


def grad_check(config: str | os.PathLike) -> dict[str, Any]:
    return json.loads(_grad_check_json(os.fspath(config)))


def count_params_flops(
    model: Mapping[str, Any], height: int, width: int, text_len: int, prompt_len: int = 0
) -> dict[str, Any]:
    """Closed-form cost of the encoder-free model and the encoder-based reference."""
    return json.loads(_count_params_flops_json(json.dumps(dict(model)), height, width, text_len, prompt_len))

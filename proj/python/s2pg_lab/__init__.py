# SPDX-License-Identifier: Apache-2.0
"""Stateful policy-gradient laboratory."""

from ._core import (
    Env,
    InputError,
    NumericError,
    gradcheck,
    load_config,
    make_env,
    normalize_returns,
    regime_experiment,
    run,
    z_bar,
    z_tilde,
)

__all__ = [
    "Env",
    "InputError",
    "NumericError",
    "gradcheck",
    "load_config",
    "make_env",
    "normalize_returns",
    "regime_experiment",
    "run",
    "z_bar",
    "z_tilde",
]

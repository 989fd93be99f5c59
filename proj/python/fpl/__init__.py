"""Frequency-principle experiments: spline steady states, spectral diagnostics and scenario runs."""

import json

from ._core import (
    ConfigError,
    DegenerateGeometryError,
    DomainError,
    Error,
    Interpolant,
    KernelSpec,
    NumericalError,
    __version__,
    first_principal_direction,
    generalization_bound,
    kernel_weights_from_stats,
    nudft,
    riesz_constant,
    steady_state,
)
from . import _core


def validate(config):
    """Resolved configuration (defaults merged) as a dict; raises ConfigError."""
    return json.loads(_core.validate_json(str(config)))


def run(config, out, seed=None, paper_scale=False):
    """Run a scenario config into `out` and return its manifest."""
    return json.loads(_core.run_json(str(config), str(out), seed, paper_scale))


__all__ = [
    "ConfigError",
    "DegenerateGeometryError",
    "DomainError",
    "Error",
    "Interpolant",
    "KernelSpec",
    "NumericalError",
    "__version__",
    "first_principal_direction",
    "generalization_bound",
    "kernel_weights_from_stats",
    "nudft",
    "riesz_constant",
    "run",
    "steady_state",
    "validate",
]

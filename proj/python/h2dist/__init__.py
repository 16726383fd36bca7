"""H2-matrix compression of Galerkin BEM matrices with simulated distributed setup.

Settings use the command-line flag names of ``h2bench`` with underscores in
place of dashes, e.g. ``leaf_limit=32`` or ``verify_sequential=True``.
"""

import json

import numpy as np

from ._core import ConfigError, DimensionError, ProtocolError, dense_matrix as _dense_matrix
from ._core import dump_trees_json, matvec as _matvec, run_json, setting_keys, sphere_mesh, sweep_json

__all__ = [
    "ConfigError",
    "DimensionError",
    "ProtocolError",
    "dense_matrix",
    "dump_trees",
    "matvec",
    "run",
    "setting_keys",
    "sphere_mesh",
    "sweep",
]


def _settings(kwargs):
    out = {}
    for key, value in kwargs.items():
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        out[key.replace("_", "-")] = str(value)
    return out


def run(*, timing=True, **settings):
    """Run one configuration and return the report as a dict."""
    return json.loads(run_json(_settings(settings), timing))


def sweep(axis, values, **settings):
    """Run one configuration per value; returns (report dict, CSV text)."""
    report, csv = sweep_json(_settings(settings), axis, [float(v) for v in values])
    return json.loads(report), csv


def dump_trees(**settings):
    return json.loads(dump_trees_json(_settings(settings)))


def matvec(x, level, **settings):
    """y = G x on the level-`level` sphere; real for Laplace, complex for Helmholtz."""
    x = np.asarray(x)
    return _matvec(x.astype(np.complex128), _settings(dict(settings, level=level)))


def dense_matrix(level, **settings):
    return _dense_matrix(_settings(dict(settings, level=level)))

"""Boosted forests for exponential-family responses with infinitesimal-jackknife variances."""

from ._core import GbfError, Model, fit, load_model
from ._core import cv as _cv
from ._core import simulate as _simulate

__all__ = ["GbfError", "Model", "fit", "load_model", "cv", "simulate"]


def cv(data, schema, family, **kwargs):
    """K-fold cross-validation of a CSV dataset; returns a dict with one row per stage."""
    return _cv(str(data), str(schema), family, **kwargs)


def simulate(config):
    """Run a simulation grid.

    `config` is either key = value text or a dict of the same keys; list values
    are joined with commas. Returns (records_csv, summary_csv).
    """
    if isinstance(config, dict):
        lines = []
        for key, value in config.items():
            if isinstance(value, (list, tuple)):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        config = "\n".join(lines) + "\n"
    return _simulate(config)

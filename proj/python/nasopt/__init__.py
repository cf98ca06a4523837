"""Architecture search for networks that emit candidate solutions."""

import json

from ._core import (
    ConfigError,
    Error,
    Genotype,
    Objective,
    ParseError,
    make_objective,
    protein_energy,
    sample_genotype,
    space_size,
    verify,
)
from . import _core

__all__ = [
    "ConfigError",
    "Error",
    "Genotype",
    "Objective",
    "ParseError",
    "default_config",
    "make_objective",
    "protein_energy",
    "sample_genotype",
    "search",
    "space_size",
    "train",
    "verify",
]


def default_config():
    return json.loads(_core._default_config())


def _config(config):
    cfg = default_config()
    for key, value in (config or {}).items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return json.dumps(cfg)


def train(genotype, config=None, seed=0, budgeted=False):
    """Trains one genotype; `config` overrides fields of the default experiment config."""
    return json.loads(_core._train(str(genotype), _config(config), seed, budgeted))


def search(config=None, seed=0, run_dir=""):
    """One search run; writes search.csv and best.json when `run_dir` is given."""
    return json.loads(_core._search(_config(config), seed, str(run_dir)))

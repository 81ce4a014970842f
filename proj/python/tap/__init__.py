"""Planning over a learned latent world model to edit reasoning chains.

Thin wrappers over the native module; structured results come back as
plain dicts and lists.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    EnvError,
    InvalidTokenError,
    NumericsError,
    ParseError,
    TapError,
    normalized_levenshtein,
    parse_chain,
    render_chain,
    softmax,
    token_f1,
)

EXIT_OK = _core.EXIT_OK
EXIT_CHECK_FAILED = _core.EXIT_CHECK_FAILED
EXIT_CONFIG = _core.EXIT_CONFIG
EXIT_ENV = _core.EXIT_ENV
EXIT_NUMERIC = _core.EXIT_NUMERIC


def run_cli(*args):
    """Run a `tap` subcommand in-process; returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])


def generate_tasks(n, seed=0):
    return json.loads(_core.generate_tasks_json(n, seed))


def synthetic_reward(task, chain, similarity="token_f1"):
    """Reward of `chain` (list of token lists) against the task's target chain."""
    return _core.synthetic_reward(json.dumps(task), chain, similarity)


def simulation_lemma(trials=100, seed=0):
    return json.loads(_core.simulation_lemma_json(trials, seed))


def convergence(sizes=(250, 1000, 4000), seeds=5, epochs=20, seed=0):
    return json.loads(_core.convergence_json(list(sizes), seeds, epochs, seed))


def multiscale(seeds=5, seed=0):
    return json.loads(_core.multiscale_json(seeds, seed))


__all__ = [
    "ConfigError",
    "DomainError",
    "EnvError",
    "InvalidTokenError",
    "NumericsError",
    "ParseError",
    "TapError",
    "convergence",
    "generate_tasks",
    "multiscale",
    "normalized_levenshtein",
    "parse_chain",
    "render_chain",
    "run_cli",
    "simulation_lemma",
    "softmax",
    "synthetic_reward",
    "token_f1",
]

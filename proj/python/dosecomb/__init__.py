"""Drug-combination dose finding with partial toxicity attribution."""

import json

from . import _core
from ._core import DomainError, UsageError, mtd_curve, mtd_solve_y, prob_dlt

__all__ = [
    "DomainError",
    "UsageError",
    "make_grid_scenario",
    "mtd_curve",
    "mtd_solve_y",
    "prob_dlt",
    "run_study",
    "run_trial",
    "sample_posterior",
]


def make_grid_scenario(alpha, beta, gamma, levels_x=4, levels_y=4):
    """Scenario dict with working-model probabilities on equally spaced levels."""
    return json.loads(_core.make_grid_scenario(alpha, beta, gamma, levels_x, levels_y))


def sample_posterior(records, config=None):
    """records: list of {"dose": {"x", "y"}, "outcome": ...} dicts."""
    return json.loads(_core.sample_posterior(json.dumps(records), json.dumps(config or {})))


def run_trial(scenario, config=None, seed=1):
    return json.loads(_core.run_trial(json.dumps(scenario), json.dumps(config or {}), seed))


def run_study(scenario, config=None, replicates=200, seed=1, threads=1):
    return json.loads(
        _core.run_study(json.dumps(scenario), json.dumps(config or {}), replicates, seed, threads)
    )

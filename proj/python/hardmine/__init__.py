"""Active hard-sample mining for re-identification.

Thin wrapper over the C++ core. Configs and specs are plain dicts using
the same keys as the JSON files; reports come back as dicts.
"""

import json as _json

from . import _hardmine
from ._hardmine import (
    average_precision,
    entropy_score,
    jeffreys_divergence,
    least_confidence_score,
    margin_score,
    mean_average_precision,
    naive_annotation_cost,
    rank_k_accuracy,
    softmax,
    softmax_ce_gradient,
)

Error = _hardmine.Error
# args are (code, message)
Error.code = property(lambda self: self.args[0])

__all__ = [
    "Error",
    "average_precision",
    "compare_strategies",
    "default_config",
    "entropy_score",
    "full_data_reference",
    "generate_synthetic",
    "jeffreys_divergence",
    "least_confidence_score",
    "margin_score",
    "mean_average_precision",
    "naive_annotation_cost",
    "rank_k_accuracy",
    "run_experiment",
    "softmax",
    "softmax_ce_gradient",
    "standard_spec",
    "validate_dataset",
]


def default_config():
    return _json.loads(_hardmine.default_config())


def standard_spec(seed=0):
    return _json.loads(_hardmine.standard_spec(seed))


def generate_synthetic(spec, out_path):
    """Writes a synthetic dataset as JSON Lines; returns the sample count."""
    return _hardmine.generate_synthetic(_json.dumps(spec), str(out_path))


def validate_dataset(path):
    return _json.loads(_hardmine.validate_dataset(str(path)))


def run_experiment(dataset_path, config=None, strategy="ahsm"):
    return _json.loads(_hardmine.run_experiment(str(dataset_path), _json.dumps(config or {}), strategy))


def compare_strategies(dataset_path, config=None, strategies=("ahsm", "random"), seeds=range(1, 11)):
    return _json.loads(
        _hardmine.compare_strategies(str(dataset_path), _json.dumps(config or {}), list(strategies), list(seeds))
    )


def full_data_reference(dataset_path, config=None):
    return _json.loads(_hardmine.full_data_reference(str(dataset_path), _json.dumps(config or {})))

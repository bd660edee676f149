"""Python front end for the aenp C++ library."""

import json

from . import _aenp
from ._aenp import ConfigError, NumericalError, git_describe

__all__ = [
    "ConfigError",
    "NumericalError",
    "Model",
    "git_describe",
    "load_run",
    "operator_lab",
    "oracle_loglik",
    "run_experiment",
    "sample_task",
]


def _dump(cfg):
    return "" if cfg is None else json.dumps(cfg)


def sample_task(seed, index, mode="ID", sampler=None, process=None):
    """One task from the Gibbs-process generator as a dict of lists."""
    return _aenp.sample_task(seed, index, mode, _dump(sampler), _dump(process))


def oracle_loglik(task, kind="known_beta", context_as_target=False):
    """Mean per-point log predictive density of the generating process."""
    return _aenp.oracle_loglik(task, kind, context_as_target)


class Model:
    """A neural process built from a model config dict."""

    def __init__(self, config=None, _impl=None):
        self._impl = _impl if _impl is not None else _aenp.Model(_dump(config or {}))

    def predict(self, x_context, y_context, x_target, bank=True):
        """Predictive (mean, variance) lists. bank=False runs the strict path."""
        return self._impl.predict(list(x_context), list(y_context), list(x_target), bank)

    @property
    def config(self):
        return json.loads(self._impl.config_json())

    def num_parameters(self):
        return self._impl.num_parameters()


def load_run(run_dir):
    """The trained model of a finished train run directory."""
    return Model(_impl=_aenp.load_run(str(run_dir)))


def operator_lab(config=None):
    return json.loads(_aenp.operator_lab(_dump(config)))


def run_experiment(config, force=False):
    """Runs an experiment document; returns the path of its results table."""
    return _aenp.run_experiment(_dump(config), force)

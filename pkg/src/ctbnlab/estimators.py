"""Estimator-style wrappers over the functional learners.

Thin adapters only: ``__init__`` stores its arguments verbatim (so
``get_params``/``set_params``/``clone`` work through the usual
introspection), ``fit`` assembles the config dataclasses, delegates, and
exposes the outcome through trailing-underscore attributes (``result_``,
``edges_``).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

from .bn import BnLearnConfig, Dataset, learn_bn
from .ctbn import CtbnLearnConfig, learn_ctbn_full
from .model import (EncodingScheme, SufficientStats, Trajectory,
                    collect_sufficient_stats)
from .partial import (PartialLearnConfig, SgdSchedule, UniformizationConfig,
                      learn_ctbn_partial)
from .simulate import ObservationSet

__all__ = ["CtbnStructureLearner", "PartialCtbnStructureLearner",
           "BnStructureLearner"]


def _as_scheme(reference_levels, interactions):
    if reference_levels is not None:
        reference_levels = tuple(int(r) for r in reference_levels)
    return EncodingScheme(reference_levels, str(interactions))


class CtbnStructureLearner(BaseEstimator):
    """Directed-graph recovery from fully observed trajectories.

    ``fit`` accepts a :class:`Trajectory` or precomputed
    :class:`SufficientStats`; ``cardinalities`` is only needed for a
    trajectory that does not visit every level.
    """

    def __init__(self, cardinalities=None, interactions="none",
                 reference_levels=None, path_len=100, lambda_min_ratio=1e-4,
                 tol=1e-10, max_iter=20000, gic_grid_size=50, n_jobs=1):
        self.cardinalities = cardinalities
        self.interactions = interactions
        self.reference_levels = reference_levels
        self.path_len = path_len
        self.lambda_min_ratio = lambda_min_ratio
        self.tol = tol
        self.max_iter = max_iter
        self.gic_grid_size = gic_grid_size
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if isinstance(X, SufficientStats):
            stats = X
        elif isinstance(X, Trajectory):
            cards = self.cardinalities
            if cards is None:
                cards = tuple(max(2, int(X.states[:, w].max()) + 1)
                              for w in range(X.node_count))
            stats = collect_sufficient_stats(X, cards)
        else:
            raise TypeError("X must be a Trajectory or SufficientStats, "
                            f"got {type(X).__name__}")
        config = CtbnLearnConfig(path_len=self.path_len,
                                 lambda_min_ratio=self.lambda_min_ratio,
                                 tol=self.tol, max_iter=self.max_iter,
                                 gic_grid_size=self.gic_grid_size,
                                 n_jobs=self.n_jobs)
        scheme = _as_scheme(self.reference_levels, self.interactions)
        self.result_ = learn_ctbn_full(stats, scheme, config)
        self.edges_ = self.result_.edges
        self.cardinalities_ = self.result_.cardinalities
        return self


class PartialCtbnStructureLearner(BaseEstimator):
    """Directed-graph recovery from snapshot observations.

    ``fit`` takes an :class:`ObservationSet`; the chain and stochastic
    solver draw from ``random_state``.
    """

    def __init__(self, cardinalities=None, interactions="none",
                 reference_levels=None, eta_factor=2.0, burn_in=200,
                 n_samples=5, thinning=2, step_scale=0.5, step_decay=0.6,
                 iterations=3000, box=10.0, path_len=100,
                 lambda_min_ratio=1e-4, m_eval=50, gic_grid_size=50,
                 random_state=None):
        self.cardinalities = cardinalities
        self.interactions = interactions
        self.reference_levels = reference_levels
        self.eta_factor = eta_factor
        self.burn_in = burn_in
        self.n_samples = n_samples
        self.thinning = thinning
        self.step_scale = step_scale
        self.step_decay = step_decay
        self.iterations = iterations
        self.box = box
        self.path_len = path_len
        self.lambda_min_ratio = lambda_min_ratio
        self.m_eval = m_eval
        self.gic_grid_size = gic_grid_size
        self.random_state = random_state

    def fit(self, X, y=None):
        if not isinstance(X, ObservationSet):
            raise TypeError("X must be an ObservationSet, "
                            f"got {type(X).__name__}")
        cards = self.cardinalities
        config = PartialLearnConfig(
            cardinalities=None if cards is None else tuple(cards),
            scheme=_as_scheme(self.reference_levels, self.interactions),
            uniformization=UniformizationConfig(eta_factor=self.eta_factor,
                                                burn_in=self.burn_in,
                                                n_samples=self.n_samples,
                                                thinning=self.thinning),
            schedule=SgdSchedule(step_scale=self.step_scale,
                                 step_decay=self.step_decay,
                                 iterations=self.iterations, box=self.box),
            path_len=self.path_len, lambda_min_ratio=self.lambda_min_ratio,
            m_eval=self.m_eval, gic_grid_size=self.gic_grid_size)
        rng = np.random.default_rng(self.random_state)
        self.result_ = learn_ctbn_partial(X, config, rng=rng)
        self.edges_ = self.result_.edges
        self.cardinalities_ = self.result_.cardinalities
        return self


class BnStructureLearner(BaseEstimator):
    """Parent recovery for a layered Bayesian network from tabular data.

    ``layers`` (list of column-index blocks, earliest first) is required;
    ``levels`` declares category counts for discrete columns, None entries
    being continuous.
    """

    def __init__(self, layers=None, family="auto", levels=None, path_len=100,
                 lambda_min_ratio=1e-4, tol=1e-10, max_iter=20000,
                 gic_grid_size=50):
        self.layers = layers
        self.family = family
        self.levels = levels
        self.path_len = path_len
        self.lambda_min_ratio = lambda_min_ratio
        self.tol = tol
        self.max_iter = max_iter
        self.gic_grid_size = gic_grid_size

    def fit(self, X, y=None):
        if self.layers is None:
            raise ValueError("layers must be set before fitting; pass the "
                             "blocks of a causal ordering")
        if isinstance(X, Dataset):
            dataset = X
        else:
            values = check_array(X, dtype=float, ensure_min_samples=2)
            levels = self.levels
            dataset = Dataset(values, None if levels is None
                              else tuple(levels))
        config = BnLearnConfig(path_len=self.path_len,
                               lambda_min_ratio=self.lambda_min_ratio,
                               tol=self.tol, max_iter=self.max_iter,
                               gic_grid_size=self.gic_grid_size)
        self.result_ = learn_bn(dataset, self.layers, self.family, config)
        self.edges_ = self.result_.edges
        self.layers_ = self.result_.layers
        self.n_features_in_ = dataset.node_count
        return self

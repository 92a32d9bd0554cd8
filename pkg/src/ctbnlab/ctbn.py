"""Structure learning for CTBNs from a fully observed trajectory.

The (1/T)-scaled negative log likelihood separates over nodes and ordered
state pairs, so each subproblem

    l^w_{s,s'}(theta) = (1/T) * sum_c [ -n_w(c;s,s') theta'Z_w(c)
                                        + t_w(c;s) exp(theta'Z_w(c)) ]

is solved on its own lambda path; BIC picks the path point and the GIC
threshold prunes small coordinates before reading off the arrows.
"""
from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np
from joblib import Parallel, delayed

from .model import (EncodingScheme, NodeFeatureMap, ParamSet, SufficientStats,
                    _ordered_pairs, edges_from_beta)
from .optim import (DegenerateLossError, SmoothLoss, bic_select,
                    gic_threshold, lambda_path)


class CtbnTransitionLoss(SmoothLoss):
    """Subproblem loss of one node and ordered state pair.

    Built from grouped statistics: ``design`` holds one feature row per
    context configuration with exposure, ``jumps`` the transition counts
    and ``occupancy`` the time spent in the source state.  Counts may be
    fractional (Monte Carlo averages are fed through the same class).
    """

    def __init__(self, design: np.ndarray, jumps: np.ndarray,
                 occupancy: np.ndarray, horizon: float, sample_size: float,
                 feature_map: NodeFeatureMap | None = None):
        design = np.asarray(design, dtype=float)
        jumps = np.asarray(jumps, dtype=float)
        occupancy = np.asarray(occupancy, dtype=float)
        if design.ndim != 2 or design.shape[0] != jumps.size \
                or jumps.size != occupancy.size:
            raise ValueError("design, jumps and occupancy must align")
        if (jumps < 0).any() or (occupancy < 0).any():
            raise ValueError("counts and occupancies must be nonnegative")
        if occupancy.sum() <= 0:
            raise DegenerateLossError(
                "no occupancy in the source state: the loss is affine in the "
                "intercept and has no minimiser")
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.design = design
        self.jumps = jumps
        self.occupancy = occupancy
        self.horizon = float(horizon)
        self.sample_size = float(sample_size)
        self.dim = design.shape[1]
        self.penalized = np.ones(self.dim, dtype=bool)
        self.penalized[0] = False
        self.feature_map = feature_map

    def value(self, theta: np.ndarray) -> float:
        eta = self.design @ theta
        return float((self.occupancy @ np.exp(eta) - self.jumps @ eta)
                     / self.horizon)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        eta = self.design @ theta
        w = self.occupancy * np.exp(eta) - self.jumps
        return self.design.T @ w / self.horizon

    def value_and_gradient(self, theta: np.ndarray):
        eta = self.design @ theta
        rate = self.occupancy * np.exp(eta)
        value = (rate.sum() - self.jumps @ eta) / self.horizon
        grad = self.design.T @ (rate - self.jumps) / self.horizon
        return float(value), grad

    def fit_free(self) -> np.ndarray:
        theta = np.zeros(self.dim)
        total_jumps = self.jumps.sum()
        if total_jumps <= 0:
            raise DegenerateLossError(
                "no jumps for this transition: the intercept diverges")
        theta[0] = np.log(total_jumps / self.occupancy.sum())
        return theta

    # ``value`` is the time-averaged negative log-likelihood, so the fit
    # term of both criteria is horizon * value = -log L; model size is
    # charged at log(sample size) resp. log(ambient dimension) per
    # coordinate.  Scaling the fit term by the jump count instead makes
    # the criteria keep every noise coordinate the path ever picks up.
    def bic_score(self, value: float, nnz: int) -> float:
        return self.horizon * value + np.log(self.sample_size) * nnz

    def gic_score(self, value: float, nnz: int, p_total: int) -> float:
        return self.horizon * value + np.log(p_total) * nnz


def ctbn_subproblem_loss(stats: SufficientStats, w: int, s: int, s2: int,
                         scheme: EncodingScheme | None = None) -> CtbnTransitionLoss:
    """Assemble the loss of subproblem ``(w, s, s')`` from trajectory stats."""
    scheme = scheme or EncodingScheme()
    cards = stats.cardinalities
    if s == s2 or not 0 <= s < cards[w] or not 0 <= s2 < cards[w]:
        raise ValueError("invalid state pair (%r, %r) for node %d" % (s, s2, w))
    fmap = NodeFeatureMap(cards, w, scheme)
    keys, occ, counts = stats.node_tables(w)
    return _loss_from_tables(fmap, cards, keys, occ, counts, s, s2,
                             stats.horizon, stats.total_jumps())


def _loss_from_tables(fmap: NodeFeatureMap, cards, keys, occ, counts,
                      s: int, s2: int, horizon: float,
                      sample_size: float) -> CtbnTransitionLoss:
    t_vec = occ[:, s]
    n_vec = counts[:, s, s2]
    keep = (t_vec > 0) | (n_vec > 0)
    digits = _digits_from_keys(keys[keep], fmap.context_cards)
    design = fmap.matrix(digits) if keep.any() else np.ones((0, fmap.dim))
    return CtbnTransitionLoss(design, n_vec[keep], t_vec[keep], horizon,
                              sample_size, fmap)


def _digits_from_keys(keys: np.ndarray, context_cards) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64).copy()
    digits = np.empty((keys.size, len(context_cards)), dtype=np.int64)
    for pos, card in enumerate(context_cards):
        digits[:, pos] = keys % card
        keys //= card
    return digits


@dataclass(frozen=True)
class CtbnLearnConfig:
    """Knobs of the complete-data learner."""

    path_len: int = 100
    lambda_min_ratio: float = 1e-4
    tol: float = 1e-10
    max_iter: int = 20000
    gic_grid_size: int = 50
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.path_len < 1 or self.gic_grid_size < 1:
            raise ValueError("path_len and gic_grid_size must be >= 1")
        if not 0 < self.lambda_min_ratio <= 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1]")


@dataclass(frozen=True)
class LearnResult:
    """Per-subproblem estimates and the implied arrow set.

    ``betas`` holds the GIC-thresholded vectors used for the edges;
    pre-threshold solutions sit in ``diagnostics[key]['beta_selected']``.
    """

    cardinalities: tuple[int, ...]
    scheme: EncodingScheme
    betas: Mapping[tuple[int, int, int], np.ndarray]
    lambda_selected: Mapping[tuple[int, int, int], float]
    delta_selected: Mapping[tuple[int, int, int], float]
    edges: frozenset[tuple[int, int]]
    diagnostics: Mapping[tuple[int, int, int], Mapping]

    def __post_init__(self) -> None:
        object.__setattr__(self, "betas", MappingProxyType(dict(self.betas)))
        object.__setattr__(self, "lambda_selected",
                           MappingProxyType(dict(self.lambda_selected)))
        object.__setattr__(self, "delta_selected",
                           MappingProxyType(dict(self.delta_selected)))
        object.__setattr__(self, "diagnostics",
                           MappingProxyType(dict(self.diagnostics)))

    def param_set(self) -> ParamSet:
        return ParamSet(self.cardinalities, self.scheme, dict(self.betas))


def penalized_dimension(cardinalities, scheme: EncodingScheme | None = None) -> int:
    """Total penalized coordinates over all subproblems.

    For binary nodes without interactions this is 2d(d-1).
    """
    scheme = scheme or EncodingScheme()
    total = 0
    for w, card in enumerate(cardinalities):
        dim = NodeFeatureMap(cardinalities, w, scheme).dim
        total += (dim - 1) * card * (card - 1)
    return total


def learn_ctbn_full(stats: SufficientStats,
                    scheme: EncodingScheme | None = None,
                    config: CtbnLearnConfig | None = None) -> LearnResult:
    """Penalized-likelihood structure learning from complete data.

    Every subproblem runs its own warm-started lambda path; a subproblem
    with no occupancy or no jumps is skipped with a zero vector (a node
    that never moves gets no incoming arrows).
    """
    scheme = scheme or EncodingScheme()
    config = config or CtbnLearnConfig()
    cards = stats.cardinalities
    p_total = max(1, penalized_dimension(cards, scheme))
    sample_size = stats.total_jumps()

    tasks = []
    for w in range(len(cards)):
        fmap = NodeFeatureMap(cards, w, scheme)
        keys, occ, counts = stats.node_tables(w)
        for s, s2 in _ordered_pairs(cards[w]):
            tasks.append((w, s, s2, fmap, keys, occ, counts))

    def solve(task):
        w, s, s2, fmap, keys, occ, counts = task
        if occ[:, s].sum() <= 0:
            return (w, s, s2), np.zeros(fmap.dim), 0.0, 0.0, \
                {"skipped": "no occupancy in source state"}
        if counts[:, s, s2].sum() <= 0:
            return (w, s, s2), np.zeros(fmap.dim), 0.0, 0.0, \
                {"skipped": "no jumps for this transition"}
        loss = _loss_from_tables(fmap, cards, keys, occ, counts, s, s2,
                                 stats.horizon, sample_size)
        path = lambda_path(loss, config.path_len, config.lambda_min_ratio,
                           config.tol, config.max_iter)
        pick = bic_select(path, loss)
        beta_sel = path.solutions[pick]
        delta, beta = gic_threshold(beta_sel, loss, p_total,
                                    config.gic_grid_size)
        diag = {"lambda_grid_len": len(path),
                "lambda_index": pick,
                "iterations": int(sum(i["iterations"] for i in path.infos)),
                "converged": all(i["converged"] for i in path.infos),
                "kkt": path.infos[pick]["kkt"],
                "beta_selected": beta_sel}
        return (w, s, s2), beta, float(path.lambdas[pick]), delta, diag

    if config.n_jobs > 1:
        results = Parallel(n_jobs=config.n_jobs)(delayed(solve)(t) for t in tasks)
    else:
        results = [solve(t) for t in tasks]

    betas = {}
    lambdas = {}
    deltas = {}
    diagnostics = {}
    for key, beta, lam, delta, diag in results:
        betas[key] = beta
        lambdas[key] = lam
        deltas[key] = delta
        diagnostics[key] = diag
    params = ParamSet(cards, scheme, betas)
    edges = edges_from_beta(params, 0.0)
    return LearnResult(cards, scheme, betas, lambdas, deltas, edges, diagnostics)

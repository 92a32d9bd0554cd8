"""Structure learning for layered static Bayesian networks.

Nodes come with an ordered layer partition: every node in an earlier layer
is a candidate parent of every node in a later layer, so each node's parent
set drops out of one penalized regression onto all earlier-layer variables.
Continuous targets get a Gaussian model, discrete ones a logistic or softmax
model depending on cardinality.  Predictors are standardized so a single
threshold is meaningful across columns; reported coefficients are mapped
back to the original scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.special import expit, logsumexp

from .model import ModelError
from .optim import SmoothLoss, bic_select, gic_threshold, lambda_path

__all__ = [
    "LayerPartition",
    "layers_from_dag",
    "Dataset",
    "simulate_gbn",
    "GaussianNodeLoss",
    "LogisticNodeLoss",
    "MultinomialNodeLoss",
    "bn_node_loss",
    "BnLearnConfig",
    "BnLearnResult",
    "learn_bn",
    "shd",
]

_RSS_FLOOR = 1e-300


@dataclass(frozen=True)
class LayerPartition:
    """Ordered blocks of node indices; earlier blocks may feed later ones."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(int(v) for v in block) for block in self.blocks)
        if not blocks or any(len(b) == 0 for b in blocks):
            raise ModelError("layer partition needs at least one nonempty block")
        seen: set[int] = set()
        for block in blocks:
            for v in block:
                if v < 0 or v in seen:
                    raise ModelError(f"node {v} repeated or negative in the partition")
                seen.add(v)
        if seen != set(range(len(seen))):
            raise ModelError("layers must cover nodes 0..d-1 exactly")
        object.__setattr__(self, "blocks", blocks)
        level = {}
        for i, block in enumerate(blocks):
            for v in block:
                level[v] = i
        object.__setattr__(self, "_level", level)

    @property
    def node_count(self):
        return sum(len(b) for b in self.blocks)

    def level(self, node):
        return self._level[node]

    def predecessors(self, node):
        """All nodes in strictly earlier blocks, ascending."""
        k = self._level[node]
        return tuple(sorted(v for b in self.blocks[:k] for v in b))


def layers_from_dag(node_count, edges):
    """Longest-path layering of a DAG: level(v) = 1 + max over parents.

    Raises :class:`ModelError` on cycles, self loops, or stray endpoints.
    """
    parents: list[list[int]] = [[] for _ in range(node_count)]
    children: list[list[int]] = [[] for _ in range(node_count)]
    indeg = np.zeros(node_count, dtype=np.int64)
    for u, v in edges:
        u, v = int(u), int(v)
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise ModelError(f"edge ({u}, {v}) leaves the node range")
        if u == v:
            raise ModelError(f"self loop at node {u}")
        parents[v].append(u)
        children[u].append(v)
        indeg[v] += 1
    level = np.zeros(node_count, dtype=np.int64)
    queue = [v for v in range(node_count) if indeg[v] == 0]
    done = 0
    while queue:
        u = queue.pop()
        done += 1
        for v in children[u]:
            level[v] = max(level[v], level[u] + 1)
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if done < node_count:
        raise ModelError("the directed graph has a cycle")
    blocks = []
    for k in range(int(level.max()) + 1):
        blocks.append(tuple(int(v) for v in np.flatnonzero(level == k)))
    return LayerPartition(tuple(blocks))


@dataclass(frozen=True)
class Dataset:
    """Tabular sample; ``levels[v]`` is the category count, None = continuous."""

    values: np.ndarray
    levels: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ModelError("values must be a nonempty (samples, nodes) array")
        levels = self.levels
        if levels is None:
            levels = (None,) * values.shape[1]
        levels = tuple(None if L is None else int(L) for L in levels)
        if len(levels) != values.shape[1]:
            raise ModelError("levels must list one entry per node")
        for v, L in enumerate(levels):
            if L is None:
                continue
            if L < 2:
                raise ModelError(f"discrete node {v} needs at least two levels")
            col = values[:, v]
            if np.any(np.abs(col - np.rint(col)) > 1e-9) or col.min() < 0 \
                    or col.max() >= L:
                raise ModelError(f"column {v} is not coded in 0..{L - 1}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "levels", levels)

    @property
    def node_count(self):
        return self.values.shape[1]

    @property
    def sample_size(self):
        return self.values.shape[0]

    def discrete_column(self, v):
        return np.rint(self.values[:, v]).astype(np.int64)


def simulate_gbn(weights, noise_sd, m, rng, intercepts=None):
    """Draw ``m`` rows from the linear SEM X_v = a_v + sum_u w[u,v] X_u + e_v.

    ``weights`` doubles as the DAG: nonzero entries are the edges, and the
    implied graph must be acyclic.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ModelError("weights must be a square matrix")
    d = w.shape[0]
    sd = np.broadcast_to(np.asarray(noise_sd, dtype=float), (d,))
    if np.any(sd <= 0):
        raise ModelError("noise standard deviations must be positive")
    offs = np.zeros(d) if intercepts is None \
        else np.broadcast_to(np.asarray(intercepts, dtype=float), (d,))
    edges = [(u, v) for u, v in zip(*np.nonzero(w))]
    layers = layers_from_dag(d, edges)
    x = np.zeros((int(m), d))
    for block in layers.blocks:
        for v in block:
            x[:, v] = offs[v] + x @ w[:, v] + sd[v] * rng.standard_normal(int(m))
    return Dataset(x)


class GaussianNodeLoss(SmoothLoss):
    """Half the residual sum of squares on a centred target.

    The value is kept on the sum scale (no 1/m), so value(0) on a centred
    target is half its squared norm.  Both criteria use the profile form
    m*log(RSS), which stays comparable across sparsity levels without an
    explicit noise variance.
    """

    def __init__(self, design, target):
        design = np.asarray(design, dtype=float)
        target = np.asarray(target, dtype=float)
        if design.ndim != 2 or design.shape[0] != target.size:
            raise ValueError("design and target must align")
        self.design = design
        self.target = target
        self.sample_size = float(target.size)
        self.dim = design.shape[1]
        self.penalized = np.ones(self.dim, dtype=bool)

    def value(self, theta):
        r = self.design @ theta - self.target
        return float(0.5 * (r @ r))

    def gradient(self, theta):
        r = self.design @ theta - self.target
        return self.design.T @ r

    def bic_score(self, value, nnz):
        m = self.sample_size
        return m * math.log(max(2.0 * value, _RSS_FLOOR)) + math.log(m) * nnz

    def gic_score(self, value, nnz, p_total):
        m = self.sample_size
        return m * math.log(max(2.0 * value, _RSS_FLOOR)) + math.log(p_total) * nnz


class LogisticNodeLoss(SmoothLoss):
    """Summed logistic deviance with a free intercept in column 0.

    The criteria follow the deviance convention 2*NLL + penalty, the
    discrete analogue of the Gaussian profile score.
    """

    def __init__(self, design, target):
        design = np.asarray(design, dtype=float)
        target = np.asarray(target, dtype=float)
        if design.ndim != 2 or design.shape[0] != target.size:
            raise ValueError("design and target must align")
        if not np.isin(target, (0.0, 1.0)).all():
            raise ValueError("logistic target must be binary 0/1")
        self.design = design
        self.target = target
        self.sample_size = float(target.size)
        self.dim = design.shape[1]
        self.penalized = np.ones(self.dim, dtype=bool)
        self.penalized[0] = False

    def value(self, theta):
        eta = self.design @ theta
        return float(np.sum(np.logaddexp(0.0, eta) - self.target * eta))

    def gradient(self, theta):
        eta = self.design @ theta
        return self.design.T @ (expit(eta) - self.target)

    def bic_score(self, value, nnz):
        return 2.0 * value + math.log(self.sample_size) * nnz

    def gic_score(self, value, nnz, p_total):
        return 2.0 * value + math.log(p_total) * nnz


class MultinomialNodeLoss(SmoothLoss):
    """Summed softmax deviance, reference class 0, one block per other class.

    Coefficients are laid out block by block, each block starting with its
    own free intercept.  Criteria use the 2*NLL deviance convention.
    """

    def __init__(self, design, target, n_classes):
        design = np.asarray(design, dtype=float)
        target = np.asarray(target, dtype=np.int64)
        if design.ndim != 2 or design.shape[0] != target.size:
            raise ValueError("design and target must align")
        if n_classes < 2:
            raise ValueError("multinomial needs at least two classes")
        if target.min() < 0 or target.max() >= n_classes:
            raise ValueError("target classes out of range")
        self.design = design
        self.target = target
        self.n_classes = int(n_classes)
        self.sample_size = float(target.size)
        self.block = design.shape[1]
        self.dim = self.block * (n_classes - 1)
        pen = np.ones(self.block, dtype=bool)
        pen[0] = False
        self.penalized = np.tile(pen, n_classes - 1)
        self._rows = np.arange(target.size)

    def _logits(self, theta):
        return self.design @ theta.reshape(self.n_classes - 1, self.block).T

    def value(self, theta):
        h = self._logits(theta)
        lse = logsumexp(np.column_stack([np.zeros(len(h)), h]), axis=1)
        picked = np.where(self.target > 0, h[self._rows, self.target - 1], 0.0)
        return float(np.sum(lse - picked))

    def gradient(self, theta):
        h = self._logits(theta)
        lse = logsumexp(np.column_stack([np.zeros(len(h)), h]), axis=1)
        prob = np.exp(h - lse[:, None])
        onehot = np.zeros_like(prob)
        pos = self.target > 0
        onehot[self._rows[pos], self.target[pos] - 1] = 1.0
        g = self.design.T @ (prob - onehot)
        return g.T.reshape(-1)

    def bic_score(self, value, nnz):
        return 2.0 * value + math.log(self.sample_size) * nnz

    def gic_score(self, value, nnz, p_total):
        return 2.0 * value + math.log(p_total) * nnz


@dataclass(frozen=True)
class _Column:
    """Provenance of one standardized design column."""

    node: int
    level: int | None
    center: float
    scale: float


def _node_design(dataset, predecessors):
    values = dataset.values
    m = dataset.sample_size
    cols: list[_Column] = []
    mats: list[np.ndarray] = []
    for u in predecessors:
        L = dataset.levels[u]
        if L is None:
            raws = [(None, values[:, u])]
        else:
            coded = dataset.discrete_column(u)
            raws = [(lvl, (coded == lvl).astype(float)) for lvl in range(1, L)]
        for lvl, raw in raws:
            mu = float(raw.mean())
            sd = float(raw.std())
            col = (raw - mu) / sd if sd > 0 else np.zeros(m)
            cols.append(_Column(u, lvl, mu, sd))
            mats.append(col)
    design = np.column_stack(mats) if mats else np.zeros((m, 0))
    return design, tuple(cols)


def _resolve_family(dataset, node, family):
    L = dataset.levels[node]
    if family == "auto":
        if L is None:
            return "gaussian"
        return "logistic" if L == 2 else "multinomial"
    if family == "gaussian" and L is not None:
        raise ModelError("gaussian family needs a continuous target")
    if family == "logistic" and L != 2:
        raise ModelError("logistic family needs a binary target")
    if family == "multinomial" and L is None:
        raise ModelError("multinomial family needs a discrete target")
    if family not in ("gaussian", "logistic", "multinomial"):
        raise ValueError(f"unknown family {family!r}")
    return family


def bn_node_loss(dataset, layers, node, family="auto"):
    """Penalized regression loss of one node onto its earlier-layer columns.

    The returned loss carries ``columns`` (provenance of each standardized
    predictor), ``family`` and, for Gaussian targets, ``target_center``.
    """
    if layers.level(node) == 0:
        raise ModelError(f"node {node} sits in the first layer and has no "
                         "candidate parents")
    fam = _resolve_family(dataset, node, family)
    design, cols = _node_design(dataset, layers.predecessors(node))
    if fam == "gaussian":
        y = dataset.values[:, node]
        center = float(y.mean())
        loss = GaussianNodeLoss(design, y - center)
        loss.target_center = center
    else:
        full = np.column_stack([np.ones(dataset.sample_size), design])
        y = dataset.discrete_column(node)
        if fam == "logistic":
            loss = LogisticNodeLoss(full, y.astype(float))
        else:
            loss = MultinomialNodeLoss(full, y, dataset.levels[node])
    loss.node = node
    loss.family = fam
    loss.columns = cols
    return loss


def _column_coefficients(loss, beta):
    """Map a flat iterate to per-column coefficient vectors (standardized)."""
    cols = loss.columns
    if loss.family == "gaussian":
        return {i: np.array([beta[i]]) for i in range(len(cols))}
    if loss.family == "logistic":
        return {i: np.array([beta[1 + i]]) for i in range(len(cols))}
    block = loss.block
    k1 = loss.n_classes - 1
    return {
        i: np.array([beta[c * block + 1 + i] for c in range(k1)])
        for i in range(len(cols))
    }


def _original_scale(loss, beta):
    """Undo the standardization; returns (intercepts, {(node, level): coef})."""
    cols = loss.columns
    per_col = _column_coefficients(loss, beta)
    width = 1 if loss.family != "multinomial" else loss.n_classes - 1
    if loss.family == "gaussian":
        intercept = np.array([loss.target_center])
    elif loss.family == "logistic":
        intercept = np.array([beta[0]])
    else:
        intercept = np.array([beta[c * loss.block] for c in range(width)])
    terms = {}
    for i, col in enumerate(cols):
        std_coef = per_col[i]
        if col.scale > 0:
            orig = std_coef / col.scale
            intercept = intercept - std_coef * (col.center / col.scale)
        else:
            orig = np.zeros_like(std_coef)
        terms[(col.node, col.level)] = orig
    return intercept, terms


@dataclass(frozen=True)
class BnLearnConfig:
    path_len: int = 100
    lambda_min_ratio: float = 1e-4
    tol: float = 1e-10
    max_iter: int = 20000
    gic_grid_size: int = 50

    def __post_init__(self):
        if self.path_len < 1:
            raise ValueError("path_len must be at least 1")
        if not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        if self.tol <= 0 or self.max_iter < 1 or self.gic_grid_size < 1:
            raise ValueError("tol, max_iter and gic_grid_size must be positive")


@dataclass(frozen=True)
class BnLearnResult:
    layers: LayerPartition
    families: Mapping
    coefficients: Mapping          # node -> flat iterate, standardized scale
    intercepts: Mapping            # node -> original-scale intercept(s)
    terms: Mapping                 # node -> {(parent, level): original coef}
    lambda_selected: Mapping
    delta_selected: Mapping
    edges: frozenset
    diagnostics: Mapping

    def __post_init__(self):
        for name in ("families", "coefficients", "intercepts", "terms",
                     "lambda_selected", "delta_selected", "diagnostics"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))
        object.__setattr__(self, "edges", frozenset(self.edges))

    def parent_sets(self):
        out: dict[int, set] = {}
        for u, v in self.edges:
            out.setdefault(v, set()).add(u)
        return out


def learn_bn(dataset, layers, family="auto", config=None):
    """Penalized parent recovery for every node outside the first layer.

    Each node is regressed onto all earlier-layer columns along a lambda
    path; BIC picks the path point and a GIC threshold prunes small
    standardized coefficients.  An edge u -> v is reported when any
    surviving coefficient of v belongs to u.
    """
    config = config or BnLearnConfig()
    if not isinstance(layers, LayerPartition):
        layers = LayerPartition(tuple(tuple(b) for b in layers))
    if layers.node_count != dataset.node_count:
        raise ModelError("layer partition does not match the dataset width")
    if dataset.sample_size < 2:
        raise ModelError("need at least two samples to score models")
    targets = [v for block in layers.blocks[1:] for v in block]
    losses = {v: bn_node_loss(dataset, layers, v, family) for v in targets}
    families = {v: losses[v].family for v in targets}
    coefficients = {}
    intercepts = {}
    terms = {}
    lambda_selected = {}
    delta_selected = {}
    diagnostics = {}
    edges = set()
    for v in targets:
        loss = losses[v]
        # GIC ambient dimension: this node's own candidate-predictor count.
        ambient = max(int(loss.penalized.sum()), 1)
        path = lambda_path(loss, config.path_len, config.lambda_min_ratio,
                           config.tol, config.max_iter)
        idx = bic_select(path, loss)
        delta, trimmed = gic_threshold(path.solutions[idx], loss, ambient,
                                       config.gic_grid_size)
        coefficients[v] = trimmed
        lambda_selected[v] = float(path.lambdas[idx])
        delta_selected[v] = float(delta)
        inter, term = _original_scale(loss, trimmed)
        intercepts[v] = inter
        terms[v] = term
        per_col = _column_coefficients(loss, trimmed)
        for i, col in enumerate(loss.columns):
            if np.any(per_col[i] != 0):
                edges.add((col.node, v))
        diagnostics[v] = {
            "lambda_index": int(idx),
            "nnz": int(np.count_nonzero(trimmed[loss.penalized])),
            "ambient": ambient,
            "converged": bool(path.infos[idx].get("converged", True)),
        }
    return BnLearnResult(layers, families, coefficients, intercepts, terms,
                         lambda_selected, delta_selected, frozenset(edges),
                         diagnostics)


def shd(learned, truth):
    """Structural Hamming distance; a reversed edge counts once."""
    a = {(int(u), int(v)) for u, v in learned}
    b = {(int(u), int(v)) for u, v in truth}
    only_a = a - b
    only_b = b - a
    reversals = sum(1 for u, v in only_a if (v, u) in only_b)
    return len(only_a) + len(only_b) - reversals

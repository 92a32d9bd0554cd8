"""Core types for continuous-time Bayesian networks.

A CTBN over nodes ``0..d-1`` attaches to each node a conditional intensity
matrix (CIM) per configuration of its parent set.  Structure learning never
sees the parent sets; it works with a log-linear parametrisation instead:
for node ``w`` and ordered state pair ``(s, s')`` the log intensity is a
linear function of a binary feature vector ``Z_w(c)`` built from the joint
state ``c`` of the remaining nodes.  An arrow ``u -> w`` is present exactly
when some coordinate of some ``beta^w_{s,s'}`` owned by ``u`` is nonzero.

Configurations are keyed by a canonical integer: mixed-radix over the
participating nodes in ascending id order, first node least significant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np


class ModelError(ValueError):
    """Raised when a model, trajectory, or parameter set is malformed."""


# ---------------------------------------------------------------------------
# configuration keys


def _check_cardinalities(cardinalities: Sequence[int]) -> tuple[int, ...]:
    cards = tuple(int(c) for c in cardinalities)
    if len(cards) == 0:
        raise ModelError("need at least one node")
    if any(c < 2 for c in cards):
        raise ModelError("every node needs cardinality >= 2, got %r" % (cards,))
    return cards


def config_key(config: Sequence[int], cardinalities: Sequence[int]) -> int:
    """Canonical integer key of a configuration.

    Mixed radix, first listed node least significant.  ``config`` and
    ``cardinalities`` run over the same node subset in ascending node order.
    """
    if len(config) != len(cardinalities):
        raise ModelError("config length %d != cardinality length %d"
                         % (len(config), len(cardinalities)))
    key = 0
    stride = 1
    for value, card in zip(config, cardinalities):
        v = int(value)
        if not 0 <= v < card:
            raise ModelError("state %d out of range for cardinality %d" % (v, card))
        key += v * stride
        stride *= int(card)
    return key


def config_from_key(key: int, cardinalities: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`config_key`."""
    key = int(key)
    if key < 0:
        raise ModelError("negative configuration key")
    digits = []
    for card in cardinalities:
        digits.append(key % card)
        key //= card
    if key != 0:
        raise ModelError("configuration key out of range")
    return tuple(digits)


def context_nodes(d: int, w: int) -> tuple[int, ...]:
    """All nodes except ``w``, ascending."""
    if not 0 <= w < d:
        raise ModelError("node %d out of range for d=%d" % (w, d))
    return tuple(u for u in range(d) if u != w)


# ---------------------------------------------------------------------------
# encoding scheme and feature maps


@dataclass(frozen=True)
class EncodingScheme:
    """How context states map to regression features.

    Parameters
    ----------
    reference_levels : tuple of int, optional
        Per-node level that is absorbed into the intercept.  ``None`` means
        level 0 for every node.
    interactions : str
        ``"none"`` for main effects only, ``"pairwise"`` to append products
        of indicator pairs from distinct context nodes.
    """

    reference_levels: tuple[int, ...] | None = None
    interactions: str = "none"

    def __post_init__(self) -> None:
        if self.interactions not in ("none", "pairwise"):
            raise ModelError("interactions must be 'none' or 'pairwise', got %r"
                             % (self.interactions,))
        if self.reference_levels is not None:
            object.__setattr__(self, "reference_levels",
                               tuple(int(r) for r in self.reference_levels))

    def references_for(self, cardinalities: Sequence[int]) -> tuple[int, ...]:
        cards = tuple(cardinalities)
        if self.reference_levels is None:
            return (0,) * len(cards)
        if len(self.reference_levels) != len(cards):
            raise ModelError("reference_levels length %d != node count %d"
                             % (len(self.reference_levels), len(cards)))
        for r, c in zip(self.reference_levels, cards):
            if not 0 <= r < c:
                raise ModelError("reference level %d out of range for cardinality %d"
                                 % (r, c))
        return self.reference_levels


class NodeFeatureMap:
    """Feature rows ``Z_w(c)`` for the context of one node.

    Coordinate order: intercept first, then for each context node ``u``
    (ascending) its non-reference levels (ascending), then, when pairwise
    interactions are on, products of main-effect indicators for node pairs
    ``u < v`` with level pairs in lexicographic order.

    Attributes
    ----------
    owners : tuple of frozenset
        Per coordinate, the set of context nodes it involves.  The intercept
        owns the empty set.
    """

    def __init__(self, cardinalities: Sequence[int], w: int,
                 scheme: EncodingScheme | None = None):
        cards = _check_cardinalities(cardinalities)
        scheme = scheme or EncodingScheme()
        refs = scheme.references_for(cards)
        self.node = int(w)
        self.context = context_nodes(len(cards), w)
        self.context_cards = tuple(cards[u] for u in self.context)
        # (position in context vector, level) per main effect
        mains: list[tuple[int, int]] = []
        owners: list[frozenset[int]] = [frozenset()]
        for pos, u in enumerate(self.context):
            for level in range(cards[u]):
                if level == refs[u]:
                    continue
                mains.append((pos, level))
                owners.append(frozenset((u,)))
        pairs: list[tuple[int, int]] = []
        if scheme.interactions == "pairwise":
            for i in range(len(mains)):
                for j in range(i + 1, len(mains)):
                    if mains[i][0] == mains[j][0]:
                        continue
                    pairs.append((i, j))
                    owners.append(owners[1 + i] | owners[1 + j])
        self._mains = tuple(mains)
        self._pairs = tuple(pairs)
        self.owners = tuple(owners)
        self.dim = 1 + len(mains) + len(pairs)

    def config_count(self) -> int:
        n = 1
        for c in self.context_cards:
            n *= c
        return n

    def matrix(self, configs: np.ndarray) -> np.ndarray:
        """Design matrix for rows of context digits, shape (C, dim)."""
        configs = np.asarray(configs, dtype=np.int64)
        if configs.ndim == 1:
            configs = configs[None, :]
        if configs.shape[1] != len(self.context):
            raise ModelError("expected %d context digits per row, got %d"
                             % (len(self.context), configs.shape[1]))
        for pos, card in enumerate(self.context_cards):
            col = configs[:, pos]
            if col.size and (col.min() < 0 or col.max() >= card):
                raise ModelError("context digit out of range at position %d" % pos)
        out = np.empty((configs.shape[0], self.dim))
        out[:, 0] = 1.0
        for k, (pos, level) in enumerate(self._mains):
            out[:, 1 + k] = configs[:, pos] == level
        base = 1 + len(self._mains)
        for k, (i, j) in enumerate(self._pairs):
            out[:, base + k] = out[:, 1 + i] * out[:, 1 + j]
        return out

    def row(self, config: Sequence[int]) -> np.ndarray:
        return self.matrix(np.asarray(config, dtype=np.int64))[0]

    def all_configs(self) -> np.ndarray:
        """Every context configuration as digit rows, ordered by key."""
        n = self.config_count()
        keys = np.arange(n, dtype=np.int64)
        digits = np.empty((n, len(self.context)), dtype=np.int64)
        for pos, card in enumerate(self.context_cards):
            digits[:, pos] = keys % card
            keys = keys // card
        return digits


def encode_parent_config(config: Sequence[int], w: int,
                         cardinalities: Sequence[int],
                         scheme: EncodingScheme | None = None) -> np.ndarray:
    """Feature vector ``Z_w(c)`` for one context configuration.

    ``config`` lists the states of all nodes except ``w`` in ascending node
    order.
    """
    fmap = NodeFeatureMap(cardinalities, w, scheme)
    return fmap.row(config)


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class CtbnModel:
    """A CTBN given explicitly by parent sets and per-configuration CIMs.

    ``cims[w]`` has shape ``(n_configs, card_w, card_w)`` where parent
    configurations are keyed by :func:`config_key` over ``parents[w]``.
    """

    cardinalities: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]
    cims: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        cards = _check_cardinalities(self.cardinalities)
        object.__setattr__(self, "cardinalities", cards)
        d = len(cards)
        if len(self.parents) != d or len(self.cims) != d:
            raise ModelError("parents and cims must have one entry per node")
        parents = []
        cims = []
        for w in range(d):
            pa = tuple(int(u) for u in self.parents[w])
            if any(not 0 <= u < d or u == w for u in pa):
                raise ModelError("invalid parent set %r for node %d" % (pa, w))
            if tuple(sorted(set(pa))) != pa:
                raise ModelError("parents of node %d must be sorted and unique" % w)
            n_cfg = 1
            for u in pa:
                n_cfg *= cards[u]
            q = np.array(self.cims[w], dtype=float)
            if q.shape != (n_cfg, cards[w], cards[w]):
                raise ModelError("cims[%d] must have shape (%d, %d, %d), got %r"
                                 % (w, n_cfg, cards[w], cards[w], q.shape))
            off = q.copy()
            idx = np.arange(cards[w])
            off[:, idx, idx] = 0.0
            if (off < 0).any():
                raise ModelError("negative off-diagonal intensity at node %d" % w)
            if not np.allclose(q.sum(axis=2), 0.0, atol=1e-8):
                raise ModelError("CIM rows of node %d do not sum to zero" % w)
            q.setflags(write=False)
            parents.append(pa)
            cims.append(q)
        object.__setattr__(self, "parents", tuple(parents))
        object.__setattr__(self, "cims", tuple(cims))

    @property
    def node_count(self) -> int:
        return len(self.cardinalities)

    def parent_key(self, w: int, state: Sequence[int]) -> int:
        """Configuration key of node ``w``'s parents under full state ``state``."""
        pa = self.parents[w]
        return config_key([state[u] for u in pa], [self.cardinalities[u] for u in pa])

    def rate_row(self, w: int, state: Sequence[int]) -> np.ndarray:
        """Intensity row of node ``w`` out of its current state."""
        return self.cims[w][self.parent_key(w, state), state[w], :]

    def leave_rate(self, state: Sequence[int]) -> float:
        """Total intensity of leaving the joint state."""
        return float(sum(-self.rate_row(w, state)[state[w]]
                         for w in range(self.node_count)))

    def true_edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((u, w) for w in range(self.node_count)
                         for u in self.parents[w])


# ---------------------------------------------------------------------------
# parameters


def _ordered_pairs(card: int) -> list[tuple[int, int]]:
    return [(s, s2) for s in range(card) for s2 in range(card) if s != s2]


@dataclass(frozen=True)
class ParamSet:
    """Log-linear parameters, one vector per node and ordered state pair."""

    cardinalities: tuple[int, ...]
    scheme: EncodingScheme
    betas: Mapping[tuple[int, int, int], np.ndarray]

    def __post_init__(self) -> None:
        cards = _check_cardinalities(self.cardinalities)
        object.__setattr__(self, "cardinalities", cards)
        clean: dict[tuple[int, int, int], np.ndarray] = {}
        dims = {w: NodeFeatureMap(cards, w, self.scheme).dim for w in range(len(cards))}
        for w in range(len(cards)):
            for s, s2 in _ordered_pairs(cards[w]):
                key = (w, s, s2)
                if key not in self.betas:
                    raise ModelError("missing beta for subproblem %r" % (key,))
                vec = np.array(self.betas[key], dtype=float)
                if vec.shape != (dims[w],):
                    raise ModelError("beta%r must have length %d, got %r"
                                     % (key, dims[w], vec.shape))
                vec.setflags(write=False)
                clean[key] = vec
        if len(clean) != len(self.betas):
            extra = set(self.betas) - set(clean)
            raise ModelError("unexpected beta keys %r" % (sorted(extra),))
        object.__setattr__(self, "betas", MappingProxyType(clean))

    @property
    def node_count(self) -> int:
        return len(self.cardinalities)


def intensity(params: ParamSet, w: int, s: int, s2: int,
              config: Sequence[int]) -> float:
    """``Q_w(c; s, s')`` under the log-linear parametrisation."""
    z = encode_parent_config(config, w, params.cardinalities, params.scheme)
    return float(np.exp(params.betas[(w, s, s2)] @ z))


_CIM_STACK_LIMIT = 2 ** 22


def cim_from_beta(params: ParamSet, w: int) -> np.ndarray:
    """Dense intensity stack of node ``w`` over every context configuration.

    Returns shape ``(n_configs, card_w, card_w)`` with diagonals filled so
    each row sums to zero.  Context configurations are keyed canonically
    over all nodes except ``w``.
    """
    fmap = NodeFeatureMap(params.cardinalities, w, params.scheme)
    n_cfg = fmap.config_count()
    if n_cfg > _CIM_STACK_LIMIT:
        raise ModelError("context of node %d has %d configurations, over the "
                         "dense stack limit %d" % (w, n_cfg, _CIM_STACK_LIMIT))
    z = fmap.matrix(fmap.all_configs())
    card = params.cardinalities[w]
    out = np.zeros((n_cfg, card, card))
    for s, s2 in _ordered_pairs(card):
        out[:, s, s2] = np.exp(z @ params.betas[(w, s, s2)])
    idx = np.arange(card)
    out[:, idx, idx] = -out.sum(axis=2)
    return out


def edges_from_beta(params: ParamSet, delta: float = 0.0) -> frozenset[tuple[int, int]]:
    """Arrows implied by the nonzero pattern of the slopes.

    A coordinate with ``|beta| > delta`` contributes ``u -> w`` for every
    context node ``u`` it involves; the intercept contributes nothing.
    """
    if delta < 0:
        raise ModelError("delta must be nonnegative")
    edges: set[tuple[int, int]] = set()
    fmaps = {w: NodeFeatureMap(params.cardinalities, w, params.scheme)
             for w in range(params.node_count)}
    for (w, _, _), vec in params.betas.items():
        owners = fmaps[w].owners
        for j in np.nonzero(np.abs(vec) > delta)[0]:
            for u in owners[j]:
                edges.add((u, w))
    return frozenset(edges)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """A piecewise-constant path on ``[0, horizon]``.

    ``states`` has one row per constancy interval: row 0 is the initial
    state, row ``i`` holds from ``times[i-1]`` on (right-continuous).
    Consecutive rows differ at exactly one node, or at most one node when
    ``allow_virtual`` marks the path as carrying self-jumps.
    """

    horizon: float
    times: np.ndarray
    states: np.ndarray
    allow_virtual: bool = False

    def __post_init__(self) -> None:
        horizon = float(self.horizon)
        if not np.isfinite(horizon) or horizon <= 0:
            raise ModelError("horizon must be positive and finite")
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=np.int64)
        if times.ndim != 1:
            raise ModelError("times must be one-dimensional")
        if states.ndim != 2 or states.shape[0] != times.size + 1:
            raise ModelError("states must have shape (len(times) + 1, d)")
        if states.shape[1] < 1:
            raise ModelError("need at least one node")
        if (states < 0).any():
            raise ModelError("negative state value")
        if times.size:
            if times[0] <= 0 or times[-1] > horizon:
                raise ModelError("jump times must lie in (0, horizon]")
            if (np.diff(times) <= 0).any():
                raise ModelError("jump times must be strictly increasing")
            changed = (states[1:] != states[:-1]).sum(axis=1)
            if self.allow_virtual:
                if (changed > 1).any():
                    raise ModelError("jumps may change at most one node")
            elif (changed != 1).any():
                raise ModelError("each jump must change exactly one node")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def node_count(self) -> int:
        return int(self.states.shape[1])

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    def state_at(self, t: float) -> np.ndarray:
        """State at time ``t``, right-continuous at jumps."""
        if not 0 <= t <= self.horizon:
            raise ModelError("time %g outside [0, %g]" % (t, self.horizon))
        idx = int(np.searchsorted(self.times, t, side="right"))
        return self.states[idx]


# ---------------------------------------------------------------------------
# sufficient statistics


@dataclass(frozen=True)
class SufficientStats:
    """Jump counts and occupation times of a fully observed trajectory.

    ``jump_counts[(w, key, s, s2)]`` counts jumps of node ``w`` from ``s``
    to ``s2`` while its context had configuration ``key``;
    ``occupation[(w, key, s)]`` is the time node ``w`` spent in ``s`` under
    that context.  Keys are canonical integers over all nodes except ``w``.
    """

    horizon: float
    cardinalities: tuple[int, ...]
    jump_counts: Mapping[tuple[int, int, int, int], int]
    occupation: Mapping[tuple[int, int, int], float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cardinalities",
                           _check_cardinalities(self.cardinalities))
        object.__setattr__(self, "jump_counts", MappingProxyType(dict(self.jump_counts)))
        object.__setattr__(self, "occupation", MappingProxyType(dict(self.occupation)))

    def total_jumps(self) -> int:
        return int(sum(self.jump_counts.values()))

    def node_tables(self, w: int):
        """Per-context tables for one node.

        Returns ``(keys, occ, counts)`` where ``keys`` is the sorted array
        of context keys touched by node ``w``, ``occ`` has shape
        ``(len(keys), card_w)`` and ``counts`` ``(len(keys), card_w, card_w)``.
        """
        cache = getattr(self, "_node_cache", None)
        if cache is None:
            cache = {}
            for (node, key, s), t in self.occupation.items():
                cache.setdefault(node, ({}, {}))[0].setdefault(key, []).append((s, t))
            for (node, key, s, s2), n in self.jump_counts.items():
                cache.setdefault(node, ({}, {}))[1].setdefault(key, []).append((s, s2, n))
            object.__setattr__(self, "_node_cache", cache)
        occ_map, cnt_map = cache.get(w, ({}, {}))
        card = self.cardinalities[w]
        keys = sorted(set(occ_map) | set(cnt_map))
        occ = np.zeros((len(keys), card))
        counts = np.zeros((len(keys), card, card))
        for i, key in enumerate(keys):
            for s, t in occ_map.get(key, ()):
                occ[i, s] += t
            for s, s2, n in cnt_map.get(key, ()):
                counts[i, s, s2] += n
        return np.asarray(keys, dtype=np.int64), occ, counts


_KEY_LIMIT = 2 ** 62


def collect_sufficient_stats(traj: Trajectory,
                             cardinalities: Sequence[int]) -> SufficientStats:
    """Sweep a trajectory into per-node sufficient statistics."""
    cards = _check_cardinalities(cardinalities)
    if traj.allow_virtual:
        raise ModelError("virtual jumps must be dropped before collecting stats")
    d = traj.node_count
    if len(cards) != d:
        raise ModelError("cardinality count %d != node count %d" % (len(cards), d))
    states = traj.states
    for w in range(d):
        if states[:, w].max(initial=0) >= cards[w]:
            raise ModelError("state of node %d exceeds cardinality %d" % (w, cards[w]))
    dt = np.diff(np.concatenate(([0.0], traj.times, [traj.horizon])))
    jump_counts: dict[tuple[int, int, int, int], int] = {}
    occupation: dict[tuple[int, int, int], float] = {}
    for w in range(d):
        ctx = [u for u in range(d) if u != w]
        card = cards[w]
        keys = _context_keys(states, ctx, cards, card * card)
        sw = states[:, w]
        if isinstance(keys, np.ndarray):
            combo = keys * card + sw
            uniq, inv = np.unique(combo, return_inverse=True)
            tot = np.bincount(inv, weights=dt)
            for u, t in zip(uniq, tot):
                occupation[(w, int(u) // card, int(u) % card)] = float(t)
            jumped = np.nonzero(sw[1:] != sw[:-1])[0]
            if jumped.size:
                combo2 = (combo[jumped]) * card + sw[jumped + 1]
                uniq2, cnt2 = np.unique(combo2, return_counts=True)
                for u, n in zip(uniq2, cnt2):
                    u = int(u)
                    jump_counts[(w, u // (card * card), (u // card) % card,
                                 u % card)] = int(n)
        else:
            for i in range(states.shape[0]):
                k = (w, keys[i], int(sw[i]))
                occupation[k] = occupation.get(k, 0.0) + float(dt[i])
            for i in np.nonzero(sw[1:] != sw[:-1])[0]:
                k2 = (w, keys[i], int(sw[i]), int(sw[i + 1]))
                jump_counts[k2] = jump_counts.get(k2, 0) + 1
    return SufficientStats(traj.horizon, cards, jump_counts, occupation)


def _context_keys(states: np.ndarray, ctx: list[int], cards: tuple[int, ...],
                  extra_factor: int = 1):
    """Canonical context key per row; exact integers even past int64.

    ``extra_factor`` is the headroom the caller needs for combining keys
    with further digits without overflowing int64.
    """
    prod = extra_factor
    for u in ctx:
        prod *= cards[u]
    if prod < _KEY_LIMIT:
        strides = np.empty(len(ctx), dtype=np.int64)
        acc = 1
        for pos, u in enumerate(ctx):
            strides[pos] = acc
            acc *= cards[u]
        return list(states[:, ctx].astype(np.int64) @ strides)
    keys = []
    for row in states:
        key = 0
        acc = 1
        for u in ctx:
            key += int(row[u]) * acc
            acc *= cards[u]
        keys.append(key)
    return keys

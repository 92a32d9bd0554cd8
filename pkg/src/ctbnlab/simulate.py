"""Simulation of the joint Markov jump process and noisy observation of it.

The joint process of a CTBN is a Markov jump process on the product state
space whose generator moves one node at a time.  Simulation uses the
competing-clocks form of the Gillespie algorithm and never builds the
product space; amalgamation and stationary distributions are provided for
small models where the dense generator is useful.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import connected_components

from .model import (CtbnModel, ModelError, Trajectory, _check_cardinalities,
                    config_key)


def gillespie_sample(model: CtbnModel, horizon: float,
                     rng: np.random.Generator,
                     initial: Sequence[int] | None = None) -> Trajectory:
    """Draw one trajectory of the joint process on ``[0, horizon]``.

    Parameters
    ----------
    initial : sequence of int, optional
        Starting state.  ``None`` draws each node uniformly.
    """
    if horizon <= 0 or not np.isfinite(horizon):
        raise ModelError("horizon must be positive and finite")
    d = model.node_count
    cards = model.cardinalities
    if initial is None:
        state = np.array([rng.integers(c) for c in cards], dtype=np.int64)
    else:
        state = np.asarray(initial, dtype=np.int64).copy()
        if state.shape != (d,):
            raise ModelError("initial state must have one entry per node")
        if (state < 0).any() or (state >= np.asarray(cards)).any():
            raise ModelError("initial state out of range")

    init_state = state.copy()
    children: list[list[int]] = [[] for _ in range(d)]
    for w in range(d):
        for u in model.parents[w]:
            children[u].append(w)

    rows = [model.rate_row(w, state).copy() for w in range(d)]
    for w in range(d):
        rows[w][state[w]] = 0.0
    leave = np.array([rows[w].sum() for w in range(d)])

    times: list[float] = []
    jumps: list[tuple[int, int]] = []
    t = 0.0
    while True:
        total = leave.sum()
        if total <= 0:
            break
        t += rng.exponential() / total
        if t > horizon:
            break
        u = rng.random() * total
        w = int(np.searchsorted(np.cumsum(leave), u, side="right"))
        w = min(w, d - 1)
        row = rows[w]
        target = int(np.searchsorted(np.cumsum(row), rng.random() * leave[w],
                                     side="right"))
        target = min(target, cards[w] - 1)
        times.append(t)
        jumps.append((w, target))
        state[w] = target
        for v in (w, *children[w]):
            rows[v] = model.rate_row(v, state).copy()
            rows[v][state[v]] = 0.0
            leave[v] = rows[v].sum()

    states = np.empty((len(times) + 1, d), dtype=np.int64)
    states[0] = init_state
    cur = init_state.copy()
    for i, (w, target) in enumerate(jumps):
        cur[w] = target
        states[i + 1] = cur
    return Trajectory(horizon, np.asarray(times), states)


@dataclass(frozen=True)
class AmalgamatedSpace:
    """Dense generator of the joint process on the product state space."""

    cardinalities: tuple[int, ...]
    states: np.ndarray   # (K, d) digit table, row k decodes state code k
    generator: np.ndarray  # (K, K)

    @property
    def size(self) -> int:
        return int(self.generator.shape[0])

    def encode(self, state: Sequence[int]) -> int:
        return config_key(state, self.cardinalities)


_PRODUCT_LIMIT = 4096


def product_strides(cardinalities: Sequence[int]) -> np.ndarray:
    strides = np.empty(len(cardinalities), dtype=np.int64)
    acc = 1
    for i, c in enumerate(cardinalities):
        strides[i] = acc
        acc *= int(c)
    return strides


def state_table(cardinalities: Sequence[int]) -> np.ndarray:
    """All joint states as digit rows, ordered by state code."""
    cards = tuple(int(c) for c in cardinalities)
    size = 1
    for c in cards:
        size *= c
    if size > _PRODUCT_LIMIT:
        raise ModelError("product state space has %d states, over the limit %d"
                         % (size, _PRODUCT_LIMIT))
    codes = np.arange(size, dtype=np.int64)
    table = np.empty((size, len(cards)), dtype=np.int64)
    for i, c in enumerate(cards):
        table[:, i] = codes % c
        codes = codes // c
    return table


def amalgamated_generator(model: CtbnModel) -> AmalgamatedSpace:
    """Assemble the joint generator; only single-node moves are nonzero."""
    cards = model.cardinalities
    table = state_table(cards)
    size = table.shape[0]
    strides = product_strides(cards)
    q = np.zeros((size, size))
    codes = np.arange(size, dtype=np.int64)
    for w in range(model.node_count):
        pa = model.parents[w]
        if pa:
            pa_strides = product_strides([cards[u] for u in pa])
            keys = table[:, list(pa)] @ pa_strides
        else:
            keys = np.zeros(size, dtype=np.int64)
        sw = table[:, w]
        rates = model.cims[w][keys, sw, :].copy()          # (K, card_w)
        np.put_along_axis(rates, sw[:, None], 0.0, axis=1)
        targets = codes[:, None] + (np.arange(cards[w])[None, :] - sw[:, None]) \
            * strides[w]
        q[codes[:, None], targets] = rates
    q[codes, codes] = -q.sum(axis=1)
    return AmalgamatedSpace(cards, table, q)


def stationary_distribution(generator: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Stationary law of an irreducible generator.

    Solves ``pi Q = 0`` with the normalisation row appended, after checking
    that the positive-rate graph is strongly connected.
    """
    q = np.asarray(generator, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ModelError("generator must be square")
    size = q.shape[0]
    off = q.copy()
    np.fill_diagonal(off, 0.0)
    if (off < -tol).any():
        raise ModelError("negative off-diagonal rate")
    if np.abs(q.sum(axis=1)).max() > 1e-6:
        raise ModelError("generator rows must sum to zero")
    graph = scipy.sparse.csr_matrix(off > tol)
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    if n_comp > 1:
        counts = np.bincount(labels)
        stranded = int(np.argmin(counts))
        members = np.nonzero(labels == stranded)[0].tolist()
        raise ModelError("generator is reducible: states %r are not strongly "
                         "connected with the rest" % (members,))
    a = np.vstack([q.T, np.ones((1, size))])
    b = np.zeros(size + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.abs(pi @ q).max())
    if residual > 1e-8:
        raise ModelError("stationary solve left residual %g" % residual)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class ObservationSet:
    """States recorded at a grid of times, possibly with flip noise.

    ``states[j]`` is the (noisy) joint state seen at ``times[j]``; each
    node's reading is independently replaced by a uniform draw over the
    other levels with probability ``noise``.
    """

    horizon: float
    times: np.ndarray
    states: np.ndarray
    noise: float = 0.0

    def __post_init__(self) -> None:
        horizon = float(self.horizon)
        if not np.isfinite(horizon) or horizon <= 0:
            raise ModelError("horizon must be positive and finite")
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=np.int64)
        if times.ndim != 1 or times.size == 0:
            raise ModelError("need at least one observation time")
        if states.ndim != 2 or states.shape[0] != times.size:
            raise ModelError("states must have one row per observation time")
        if (times < 0).any() or (times > horizon).any():
            raise ModelError("observation times must lie in [0, horizon]")
        if (np.diff(times) < 0).any():
            raise ModelError("observation times must be ascending")
        if (states < 0).any():
            raise ModelError("negative observed state")
        noise = float(self.noise)
        if not 0 <= noise < 0.5:
            raise ModelError("noise must lie in [0, 0.5)")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "noise", noise)

    @property
    def node_count(self) -> int:
        return int(self.states.shape[1])

    def inferred_cardinalities(self) -> tuple[int, ...]:
        """Per-node max observed level + 1, floored at 2."""
        return tuple(max(2, int(m) + 1) for m in self.states.max(axis=0))


def observe(traj: Trajectory, times: Sequence[float],
            cardinalities: Sequence[int] | None = None,
            noise: float = 0.0,
            rng: np.random.Generator | None = None) -> ObservationSet:
    """Read the trajectory at ``times`` with per-node flip noise.

    The reading at a jump time is the post-jump state (right-continuous).
    """
    times = np.asarray(times, dtype=float)
    if noise > 0:
        if rng is None:
            raise ModelError("noise > 0 needs an rng")
        if cardinalities is None:
            raise ModelError("noise > 0 needs cardinalities")
    idx = np.searchsorted(traj.times, times, side="right")
    seen = traj.states[idx].copy()
    if noise > 0:
        cards = _check_cardinalities(cardinalities)
        flip = rng.random(seen.shape) < noise
        for w in range(traj.node_count):
            rows = np.nonzero(flip[:, w])[0]
            if rows.size == 0:
                continue
            other = rng.integers(0, cards[w] - 1, size=rows.size)
            seen[rows, w] = other + (other >= seen[rows, w])
    return ObservationSet(traj.horizon, times, seen, noise)

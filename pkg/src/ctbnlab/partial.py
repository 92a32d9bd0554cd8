"""Structure learning from partially observed trajectories.

The sampler follows the uniformization construction: under the current
parameters a dominating Poisson process proposes a grid of candidate jump
times (real jumps of the current trajectory plus thinned virtual ones), and
forward filtering / backward sampling redraws the state sequence on that
grid conditional on the observations.  A projected stochastic proximal
gradient loop rides on top of the sampler, so the Markov chain is persistent
across gradient steps and across the regularization path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from ._ffbs import ffbs_kernel
from .ctbn import CtbnTransitionLoss, LearnResult, _digits_from_keys, penalized_dimension
from .model import (
    EncodingScheme,
    ModelError,
    NodeFeatureMap,
    ParamSet,
    Trajectory,
    _ordered_pairs,
    collect_sufficient_stats,
    edges_from_beta,
)
from .optim import DegenerateLossError, gic_threshold, soft_threshold
from .simulate import (
    ObservationSet,
    amalgamated_generator,
    product_strides,
    state_table,
)

__all__ = [
    "InfeasibleObservationError",
    "SpgdDivergenceError",
    "UniformizationConfig",
    "SgdSchedule",
    "PartialLearnConfig",
    "SpgdResult",
    "initial_trajectory",
    "add_virtual_jumps",
    "drop_virtual",
    "ffbs",
    "RaoTehChain",
    "rao_teh_step",
    "mcmc_gradient",
    "proximal_sgd",
    "spgd_learn_partial",
    "learn_ctbn_partial",
]

# Minimum separation between synthetic jumps inserted at one observation time.
_JUMP_SPACING = 1e-9

# Exponent clamp when turning coefficients into rates; the box constraint
# keeps iterates well inside this in practice.
_EXP_CLIP = 500.0

_GRADIENT_BLOWUP = 1e8

# Hard ceiling on the uniformization grid per sweep.  Legitimate chains stay
# around eta * horizon events; hitting this means the rates are so large the
# sweep would exhaust memory, so fail with a clear error instead.
_MAX_GRID_EVENTS = 5_000_000


class InfeasibleObservationError(RuntimeError):
    """The observations have probability zero under the proposal grid."""


class SpgdDivergenceError(RuntimeError):
    """Stochastic gradient blew up; the step schedule is too aggressive."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


@dataclass(frozen=True)
class UniformizationConfig:
    """Knobs for the dominating-rate sampler."""

    eta_factor: float = 2.0
    burn_in: int = 200
    n_samples: int = 5
    thinning: int = 2

    def __post_init__(self):
        if not self.eta_factor > 1.0:
            raise ValueError("eta_factor must exceed 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")


@dataclass(frozen=True)
class SgdSchedule:
    """Step sizes gamma_k = step_scale * k**(-step_decay), plus box bound."""

    step_scale: float = 0.5
    step_decay: float = 0.6
    iterations: int = 3000
    box: float = 10.0

    def __post_init__(self):
        if self.step_scale <= 0:
            raise ValueError("step_scale must be positive")
        if not 0.5 < self.step_decay <= 1.0:
            raise ValueError("step_decay must lie in (1/2, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.box <= 0:
            raise ValueError("box must be positive")

    def gamma(self, k):
        return self.step_scale * float(k) ** (-self.step_decay)


@dataclass(frozen=True)
class PartialLearnConfig:
    cardinalities: tuple | None = None
    scheme: EncodingScheme = field(default_factory=EncodingScheme)
    uniformization: UniformizationConfig = field(default_factory=UniformizationConfig)
    schedule: SgdSchedule = field(default_factory=SgdSchedule)
    path_len: int = 100
    lambda_min_ratio: float = 1e-4
    m_eval: int = 50
    gic_grid_size: int = 50

    def __post_init__(self):
        if self.path_len < 1:
            raise ValueError("path_len must be at least 1")
        if not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        if self.m_eval < 1:
            raise ValueError("m_eval must be at least 1")
        if self.gic_grid_size < 1:
            raise ValueError("gic_grid_size must be at least 1")


@dataclass(frozen=True)
class SpgdResult:
    final: Mapping
    average: Mapping
    diagnostics: Mapping

    def __post_init__(self):
        object.__setattr__(self, "final", MappingProxyType(dict(self.final)))
        object.__setattr__(self, "average", MappingProxyType(dict(self.average)))
        object.__setattr__(self, "diagnostics", MappingProxyType(dict(self.diagnostics)))


def initial_trajectory(observations, cardinalities=None):
    """Hold-last trajectory through the observed snapshots.

    The initial state is the first observed vector.  When consecutive
    snapshots differ in several nodes, one synthetic jump per node is placed
    just before the observation time (spacing 1e-9, ascending node order), so
    the trajectory matches every snapshot exactly at its own time.
    """
    if not isinstance(observations, ObservationSet):
        raise TypeError("observations must be an ObservationSet")
    cards = tuple(int(c) for c in (cardinalities or observations.inferred_cardinalities()))
    states = observations.states
    if states.shape[1] != len(cards):
        raise ModelError("cardinalities do not match the observed node count")
    for w, c in enumerate(cards):
        if states[:, w].max(initial=0) >= c:
            raise ModelError(f"observed level out of range for node {w}")
    held = states[0].copy()
    times: list[float] = []
    vals: list[np.ndarray] = []
    for j in range(len(observations.times)):
        t = observations.times[j]
        target = states[j]
        changed = np.flatnonzero(target != held)
        if changed.size == 0:
            continue
        if t <= 0:
            raise ModelError("observation at time zero conflicts with the initial state")
        k = changed.size
        for i, w in enumerate(changed):
            times.append(t - (k - 1 - i) * _JUMP_SPACING)
            held = held.copy()
            held[w] = target[w]
            vals.append(held.copy())
    state_rows = np.vstack([states[0]] + vals) if vals else states[:1].copy()
    return Trajectory(observations.horizon, np.asarray(times, float), state_rows)


def _leave_rates(source, states):
    """Total leave rate of each row of ``states`` under a model or ParamSet."""
    out = np.empty(len(states))
    if isinstance(source, ParamSet):
        cards = source.cardinalities
        maps = [NodeFeatureMap(cards, w, source.scheme) for w in range(len(cards))]
        for i, st in enumerate(states):
            total = 0.0
            for w, card in enumerate(cards):
                z = maps[w].row([st[v] for v in maps[w].context])
                s = st[w]
                for s2 in range(card):
                    if s2 != s:
                        total += math.exp(float(z @ source.betas[(w, s, s2)]))
            out[i] = total
    else:
        for i, st in enumerate(states):
            out[i] = source.leave_rate(st)
    return out


def add_virtual_jumps(trajectory, source, eta, rng):
    """Superimpose thinned Poisson(eta - q(x)) self-transitions on a path."""
    leave = _leave_rates(source, trajectory.states)
    if eta < leave.max(initial=0.0):
        raise ModelError("dominating rate eta must be at least the largest leave rate")
    edges = np.concatenate([[0.0], trajectory.times, [trajectory.horizon]])
    lengths = np.diff(edges)
    counts = rng.poisson(np.maximum(eta - leave, 0.0) * lengths)
    seg = np.repeat(np.arange(len(lengths)), counts)
    u = rng.random(counts.sum())
    virt = edges[seg] + u * lengths[seg]
    all_times = np.concatenate([trajectory.times, virt])
    order = np.argsort(all_times, kind="stable")
    after = np.vstack([trajectory.states[1:], trajectory.states[seg]])
    states = np.vstack([trajectory.states[:1], after[order]])
    return Trajectory(trajectory.horizon, all_times[order], states, allow_virtual=True)


def drop_virtual(trajectory):
    """Remove self-transitions, inverting :func:`add_virtual_jumps`."""
    st = trajectory.states
    if len(trajectory.times) == 0:
        return Trajectory(trajectory.horizon, trajectory.times.copy(), st.copy())
    keep = np.any(st[1:] != st[:-1], axis=1)
    states = np.vstack([st[:1], st[1:][keep]])
    return Trajectory(trajectory.horizon, trajectory.times[keep], states)


def ffbs(transition, initial, likelihoods, rng):
    """Draw one state sequence given a transition matrix and evidence weights.

    ``likelihoods[j, x]`` multiplies the filter at grid point j.  Raises
    :class:`InfeasibleObservationError` when the filtered mass vanishes.
    """
    p = np.ascontiguousarray(transition, dtype=float)
    g = np.ascontiguousarray(likelihoods, dtype=float)
    nu = np.asarray(initial, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ModelError("transition matrix must be square")
    if np.any(p < -1e-12) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-8):
        raise ModelError("transition matrix rows must be probability vectors")
    if g.ndim != 2 or g.shape[1] != p.shape[0]:
        raise ModelError("likelihood matrix does not match the state space")
    if np.any(g < 0):
        raise ModelError("likelihoods must be nonnegative")
    if nu.shape != (p.shape[0],) or np.any(nu < 0) or not math.isclose(nu.sum(), 1.0, abs_tol=1e-8):
        raise ModelError("initial distribution must be a probability vector")
    codes = ffbs_kernel(p, g, nu, rng.random(g.shape[0]))
    if codes[0] < 0:
        raise InfeasibleObservationError("observations have zero probability on this grid")
    return codes


class _Space:
    """Index tables over the amalgamated state space (product of all nodes)."""

    def __init__(self, cardinalities, scheme):
        self.cards = tuple(int(c) for c in cardinalities)
        self.scheme = scheme
        self.strides = product_strides(self.cards)
        self.states = state_table(self.cards)
        self.size = len(self.states)
        d = len(self.cards)
        self.maps = [NodeFeatureMap(self.cards, w, scheme) for w in range(d)]
        self.design = []
        self.code_table = []
        self.minus_key = []
        self.targets = []
        codes = np.arange(self.size, dtype=np.int64)
        for w in range(d):
            fmap = self.maps[w]
            cw = self.cards[w]
            self.design.append(fmap.matrix(fmap.all_configs()))
            ctx = fmap.context
            if ctx:
                ctx_table = state_table(tuple(self.cards[v] for v in ctx))
                base = ctx_table @ self.strides[list(ctx)]
            else:
                base = np.zeros(1, dtype=np.int64)
            table = base[:, None] + np.arange(cw, dtype=np.int64) * self.strides[w]
            self.code_table.append(table)
            inv = np.empty(self.size, dtype=np.int64)
            inv[table.reshape(-1)] = np.repeat(np.arange(len(base), dtype=np.int64), cw)
            self.minus_key.append(inv)
            own = self.states[:, w].astype(np.int64) * self.strides[w]
            self.targets.append(
                codes[:, None] - own[:, None] + np.arange(cw, dtype=np.int64) * self.strides[w]
            )

    def encode(self, states):
        return np.asarray(states, dtype=np.int64) @ self.strides

    def generator_from_betas(self, betas):
        q = np.zeros((self.size, self.size))
        rows_idx = np.arange(self.size)[:, None]
        for w, cw in enumerate(self.cards):
            pairs = _ordered_pairs(cw)
            stacked = np.column_stack([betas[(w, s, s2)] for s, s2 in pairs])
            rates = np.exp(np.clip(self.design[w] @ stacked, None, _EXP_CLIP))
            full = np.zeros((rates.shape[0], cw, cw))
            for i, (s, s2) in enumerate(pairs):
                full[:, s, s2] = rates[:, i]
            per_state = full[self.minus_key[w], self.states[:, w], :]
            q[rows_idx, self.targets[w]] = per_state
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return q


def _likelihood_matrix(space, observations):
    eps = observations.noise
    lik = np.ones((len(observations.times), space.size))
    for w, cw in enumerate(space.cards):
        match = space.states[:, w][None, :] == observations.states[:, w][:, None]
        if eps > 0:
            lik *= np.where(match, 1.0 - eps, eps / (cw - 1))
        else:
            lik *= match
    return lik


class RaoTehChain:
    """Persistent posterior sampler over trajectories given observations.

    One ``step`` resamples virtual jumps under the current parameters and
    redraws the skeleton with FFBS.  Parameters can be swapped at any time
    via ``set_betas`` or ``set_model``; the trajectory state carries over,
    which is what the stochastic gradient loop relies on.
    """

    def __init__(self, observations, cardinalities=None, scheme=None,
                 eta_factor=2.0, initial_distribution=None, start=None):
        if not isinstance(observations, ObservationSet):
            raise TypeError("observations must be an ObservationSet")
        if not eta_factor > 1.0:
            raise ValueError("eta_factor must exceed 1")
        cards = tuple(int(c) for c in (cardinalities or observations.inferred_cardinalities()))
        self.space = _Space(cards, scheme or EncodingScheme())
        self.horizon = observations.horizon
        self.eta_factor = float(eta_factor)
        self.obs_times = np.asarray(observations.times, dtype=float)
        self._lik = _likelihood_matrix(self.space, observations)
        if initial_distribution is None:
            self.nu = np.full(self.space.size, 1.0 / self.space.size)
        else:
            self.nu = np.asarray(initial_distribution, dtype=float)
            if self.nu.shape != (self.space.size,) or np.any(self.nu < 0) \
                    or not math.isclose(self.nu.sum(), 1.0, abs_tol=1e-8):
                raise ModelError("initial distribution must be a probability vector")
        base = start if start is not None else initial_trajectory(observations, cards)
        if base.horizon != self.horizon or base.node_count != len(cards):
            raise ModelError("starting trajectory does not match the observations")
        self.times = np.asarray(base.times, dtype=float).copy()
        self.codes = self.space.encode(base.states)
        self._p = None
        self._leave = None
        self.eta = None

    @property
    def jump_count(self):
        return len(self.times)

    def set_model(self, model):
        self._set_generator(amalgamated_generator(model).generator)

    def set_betas(self, betas):
        self._set_generator(self.space.generator_from_betas(betas))

    def _set_generator(self, q):
        leave = -np.diag(q).copy()
        eta = self.eta_factor * leave.max()
        if eta <= 0:
            eta = 1.0
        p = q / eta
        np.fill_diagonal(p, 1.0 - leave / eta)
        self._p = np.ascontiguousarray(p)
        self._leave = leave
        self.eta = eta

    def step(self, rng):
        """One uniformization sweep: thin virtual jumps, then FFBS redraw."""
        if self._p is None:
            raise RuntimeError("set_model or set_betas must be called before stepping")
        edges = np.concatenate([[0.0], self.times, [self.horizon]])
        lengths = np.diff(edges)
        counts = rng.poisson((self.eta - self._leave[self.codes]) * lengths)
        total = int(counts.sum()) + len(self.times)
        if total > _MAX_GRID_EVENTS:
            raise ModelError(
                f"uniformization grid needs {total} events over the horizon; "
                "the rates are too large to sample")
        seg = np.repeat(np.arange(len(lengths)), counts)
        u = rng.random(counts.sum())
        virt = edges[seg] + u * lengths[seg]
        ev_times = np.concatenate([self.times, virt])
        ev_codes = np.concatenate([self.codes[1:], self.codes[seg]])
        order = np.argsort(ev_times, kind="stable")
        grid_times = ev_times[order]

        m1 = len(grid_times) + 1
        g = np.ones((m1, self.space.size))
        if len(self.obs_times):
            idx = np.searchsorted(
                np.concatenate([[0.0], grid_times]), self.obs_times, side="right") - 1
            np.multiply.at(g, idx, self._lik)
        new_codes = ffbs_kernel(self._p, g, self.nu, rng.random(m1))
        if new_codes[0] < 0:
            raise InfeasibleObservationError(
                "observations have zero probability under the current parameters")
        keep = new_codes[1:] != new_codes[:-1]
        self.times = grid_times[keep]
        self.codes = np.concatenate([new_codes[:1], new_codes[1:][keep]])
        return self

    def trajectory(self):
        return Trajectory(self.horizon, self.times.copy(), self.space.states[self.codes])

    def stats(self):
        """Occupancy over amalgamated codes plus per-node jump count tables."""
        space = self.space
        t_occ = np.zeros(space.size)
        lengths = np.diff(np.concatenate([[0.0], self.times, [self.horizon]]))
        np.add.at(t_occ, self.codes, lengths)
        counts = [
            np.zeros((space.code_table[w].shape[0], cw, cw))
            for w, cw in enumerate(space.cards)
        ]
        n = len(self.times)
        if n:
            pre = self.codes[:-1]
            post = self.codes[1:]
            st_pre = space.states[pre]
            st_post = space.states[post]
            node = (st_pre != st_post).argmax(axis=1)
            for w, cw in enumerate(space.cards):
                mask = node == w
                if not mask.any():
                    continue
                cfg = space.minus_key[w][pre[mask]]
                flat = (cfg * cw + st_pre[mask, w]) * cw + st_post[mask, w]
                np.add.at(counts[w].reshape(-1), flat, 1.0)
        return t_occ, counts


def rao_teh_step(trajectory, source, observations, config=None, rng=None,
                 initial_distribution=None):
    """One posterior resampling sweep for a single trajectory.

    ``source`` is either a CtbnModel or a ParamSet; its cardinalities define
    the state space.  Returns the new trajectory (self-transitions removed).
    """
    config = config or UniformizationConfig()
    rng = np.random.default_rng(rng)
    if isinstance(source, ParamSet):
        cards, scheme = source.cardinalities, source.scheme
    else:
        cards, scheme = source.cardinalities, None
    chain = RaoTehChain(observations, cards, scheme, config.eta_factor,
                        initial_distribution, start=trajectory)
    if isinstance(source, ParamSet):
        chain.set_betas(source.betas)
    else:
        chain.set_model(source)
    chain.step(rng)
    return chain.trajectory()


def mcmc_gradient(params, trajectories):
    """Monte Carlo gradient of the penalized likelihood's smooth part.

    Sufficient statistics of the sampled trajectories are averaged first;
    the gradient is linear in them, so this equals the average of per-sample
    gradients at a fraction of the cost.
    """
    if not isinstance(params, ParamSet):
        raise TypeError("params must be a ParamSet")
    if len(trajectories) == 0:
        raise ValueError("at least one sampled trajectory is required")
    horizon = trajectories[0].horizon
    cards = params.cardinalities
    for traj in trajectories:
        if traj.horizon != horizon:
            raise ModelError("sampled trajectories must share one horizon")
        if traj.node_count != len(cards):
            raise ModelError("trajectory node count does not match the parameters")
    m = len(trajectories)
    merged: list[dict] = [dict() for _ in cards]
    for traj in trajectories:
        stats = collect_sufficient_stats(traj, cards)
        for w, cw in enumerate(cards):
            keys, occ, counts = stats.node_tables(w)
            store = merged[w]
            for i, key in enumerate(keys):
                slot = store.get(int(key))
                if slot is None:
                    store[int(key)] = [occ[i].astype(float).copy(), counts[i].astype(float).copy()]
                else:
                    slot[0] += occ[i]
                    slot[1] += counts[i]
    out = {}
    for w, cw in enumerate(cards):
        fmap = NodeFeatureMap(cards, w, params.scheme)
        store = merged[w]
        if store:
            keys = np.array(sorted(store), dtype=np.int64)
            occ = np.stack([store[int(k)][0] for k in keys]) / m
            counts = np.stack([store[int(k)][1] for k in keys]) / m
            design = fmap.matrix(_digits_from_keys(keys, fmap.context_cards))
        else:
            occ = np.zeros((0, cw))
            counts = np.zeros((0, cw, cw))
            design = np.zeros((0, fmap.dim))
        for s, s2 in _ordered_pairs(cw):
            beta = params.betas[(w, s, s2)]
            rates = np.exp(np.clip(design @ beta, None, _EXP_CLIP))
            resid = occ[:, s] * rates - counts[:, s, s2]
            out[(w, s, s2)] = design.T @ resid / horizon
    return out


class _BetaLayout:
    """Flat vector layout over all (node, source, target) coefficient blocks."""

    def __init__(self, cardinalities, scheme):
        self.cards = tuple(int(c) for c in cardinalities)
        self.scheme = scheme
        self.maps = [NodeFeatureMap(self.cards, w, scheme) for w in range(len(self.cards))]
        self.keys = []
        self.slices = {}
        offset = 0
        mask = []
        for w, cw in enumerate(self.cards):
            dim = self.maps[w].dim
            for s, s2 in _ordered_pairs(cw):
                self.keys.append((w, s, s2))
                self.slices[(w, s, s2)] = slice(offset, offset + dim)
                block = np.ones(dim, dtype=bool)
                block[0] = False
                mask.append(block)
                offset += dim
        self.dim = offset
        self.penalized = np.concatenate(mask) if mask else np.zeros(0, dtype=bool)

    def flatten(self, betas):
        vec = np.zeros(self.dim)
        for key in self.keys:
            vec[self.slices[key]] = betas[key]
        return vec

    def unflatten(self, vec):
        return {key: np.asarray(vec[self.slices[key]]).copy() for key in self.keys}

    def zero_betas(self):
        return {key: np.zeros(self.slices[key].stop - self.slices[key].start)
                for key in self.keys}


def proximal_sgd(gradient_fn, theta0, lam, penalized, schedule, *, trace=None):
    """Projected stochastic proximal gradient descent with l1 shrinkage.

    ``gradient_fn(theta, k)`` returns the stochastic gradient at iterate k
    (1-based).  Returns the final iterate and the average over the second
    half of the run.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    penalized = np.asarray(penalized, dtype=bool)
    half = schedule.iterations // 2
    acc = np.zeros_like(theta)
    tail = 0
    for k in range(1, schedule.iterations + 1):
        grad = np.asarray(gradient_fn(theta, k), dtype=float)
        worst = np.abs(grad).max(initial=0.0)
        if not np.isfinite(worst) or worst > _GRADIENT_BLOWUP:
            raise SpgdDivergenceError(
                f"stochastic gradient reached magnitude {worst:.3e} at iteration {k}",
                {"iteration": k, "lambda": lam},
            )
        gamma = schedule.gamma(k)
        theta = soft_threshold(theta - gamma * grad, gamma * lam * penalized)
        np.clip(theta, -schedule.box, schedule.box, out=theta)
        if k > half:
            acc += theta
            tail += 1
        if trace is not None:
            trace.append(float(worst))
    if tail == 0:
        return theta, theta.copy()
    return theta, acc / tail


def _chain_gradient_fn(chain, layout, uniformization, rng):
    design = chain.space.design
    code_table = chain.space.code_table
    horizon = chain.horizon

    def fn(theta, _k):
        chain.set_betas(layout.unflatten(theta))
        t_occ = np.zeros(chain.space.size)
        counts = None
        for _ in range(uniformization.n_samples):
            for _ in range(uniformization.thinning):
                chain.step(rng)
            occ_i, counts_i = chain.stats()
            t_occ += occ_i
            if counts is None:
                counts = counts_i
            else:
                for w in range(len(counts)):
                    counts[w] += counts_i[w]
        m = uniformization.n_samples
        grad = np.zeros(layout.dim)
        for w, cw in enumerate(layout.cards):
            occ_w = t_occ[code_table[w]] / m
            counts_w = counts[w] / m
            for s, s2 in _ordered_pairs(cw):
                beta = theta[layout.slices[(w, s, s2)]]
                rates = np.exp(np.clip(design[w] @ beta, None, _EXP_CLIP))
                resid = occ_w[:, s] * rates - counts_w[:, s, s2]
                grad[layout.slices[(w, s, s2)]] = design[w].T @ resid / horizon
        return grad

    return fn


def spgd_learn_partial(observations, lam, *, cardinalities=None, scheme=None,
                       uniformization=None, schedule=None, rng=None, beta0=None):
    """Fit one penalized model at a fixed lambda from partial observations."""
    if not isinstance(observations, ObservationSet):
        raise TypeError("observations must be an ObservationSet")
    scheme = scheme or EncodingScheme()
    uniformization = uniformization or UniformizationConfig()
    schedule = schedule or SgdSchedule()
    rng = np.random.default_rng(rng)
    cards = tuple(int(c) for c in (cardinalities or observations.inferred_cardinalities()))
    chain = RaoTehChain(observations, cards, scheme, uniformization.eta_factor)
    layout = _BetaLayout(cards, scheme)
    theta0 = layout.flatten(beta0) if beta0 is not None else np.zeros(layout.dim)
    chain.set_betas(layout.unflatten(theta0))
    for _ in range(uniformization.burn_in):
        chain.step(rng)
    trace: list[float] = []
    final, average = proximal_sgd(
        _chain_gradient_fn(chain, layout, uniformization, rng),
        theta0, lam, layout.penalized, schedule, trace=trace)
    diagnostics = {
        "iterations": schedule.iterations,
        "lambda": float(lam),
        "max_gradient": max(trace) if trace else 0.0,
        "jump_count": chain.jump_count,
    }
    return SpgdResult(layout.unflatten(final), layout.unflatten(average), diagnostics)


def _sample_tables(chain, count, thinning, rng):
    """Average sufficient statistics over ``count`` thinned posterior draws."""
    t_occ = np.zeros(chain.space.size)
    counts = None
    jumps = 0
    for _ in range(count):
        for _ in range(thinning):
            chain.step(rng)
        occ_i, counts_i = chain.stats()
        t_occ += occ_i
        jumps += chain.jump_count
        if counts is None:
            counts = counts_i
        else:
            for w in range(len(counts)):
                counts[w] += counts_i[w]
    t_occ /= count
    for w in range(len(counts)):
        counts[w] /= count
    return t_occ, counts, jumps / count


def learn_ctbn_partial(observations, config=None, rng=None):
    """Structure learning from noisy/partial snapshots of one trajectory.

    Runs a persistent posterior sampler, follows a single global lambda path
    with warm-started stochastic proximal gradient solves, then scores the
    per-lambda final iterates with BIC on a fresh evaluation sample and
    applies the information-criterion threshold per subproblem.
    """
    if not isinstance(observations, ObservationSet):
        raise TypeError("observations must be an ObservationSet")
    config = config or PartialLearnConfig()
    rng = np.random.default_rng(rng)
    cards = tuple(int(c) for c in (config.cardinalities or observations.inferred_cardinalities()))
    scheme = config.scheme
    unif = config.uniformization
    chain = RaoTehChain(observations, cards, scheme, unif.eta_factor)
    layout = _BetaLayout(cards, scheme)
    space = chain.space

    chain.set_betas(layout.zero_betas())
    for _ in range(unif.burn_in):
        chain.step(rng)

    # Evaluation sample under the flat parametrization: intercept starting
    # points and the top of the lambda path both come from it.
    t_occ0, counts0, _ = _sample_tables(chain, config.m_eval, unif.thinning, rng)
    theta = np.zeros(layout.dim)
    for w, cw in enumerate(layout.cards):
        occ_w = t_occ0[space.code_table[w]]
        for s, s2 in _ordered_pairs(cw):
            n = counts0[w][:, s, s2].sum()
            t = occ_w[:, s].sum()
            if n > 0 and t > 0:
                theta[layout.slices[(w, s, s2)].start] = math.log(n / t)
    grad0 = np.zeros(layout.dim)
    for w, cw in enumerate(layout.cards):
        occ_w = t_occ0[space.code_table[w]]
        for s, s2 in _ordered_pairs(cw):
            beta = theta[layout.slices[(w, s, s2)]]
            rates = np.exp(np.clip(space.design[w] @ beta, None, _EXP_CLIP))
            resid = occ_w[:, s] * rates - counts0[w][:, s, s2]
            grad0[layout.slices[(w, s, s2)]] = space.design[w].T @ resid / chain.horizon
    lam_top = float(np.abs(grad0[layout.penalized]).max(initial=0.0))
    if lam_top <= 0:
        grid = np.array([0.0])
    elif config.path_len == 1:
        grid = np.array([lam_top])
    else:
        grid = np.geomspace(lam_top, lam_top * config.lambda_min_ratio, config.path_len)

    finals = []
    jump_trace = []
    grad_fn = _chain_gradient_fn(chain, layout, unif, rng)
    for lam in grid:
        theta, _avg = proximal_sgd(grad_fn, theta, float(lam), layout.penalized, config.schedule)
        finals.append(theta.copy())
        jump_trace.append(chain.jump_count)

    chain.set_betas(layout.unflatten(theta))
    t_occ, counts, n_ic = _sample_tables(chain, config.m_eval, unif.thinning, rng)

    p_total = penalized_dimension(cards, scheme)
    betas = {}
    lambda_selected = {}
    delta_selected = {}
    diagnostics = {}
    for w, cw in enumerate(layout.cards):
        occ_w = t_occ[space.code_table[w]]
        for s, s2 in _ordered_pairs(cw):
            key = (w, s, s2)
            sl = layout.slices[key]
            dim = sl.stop - sl.start
            keep = (occ_w[:, s] > 0) | (counts[w][:, s, s2] > 0)
            degenerate = not keep.any() or counts[w][:, s, s2].sum() <= 0 or n_ic < 2
            if not degenerate:
                try:
                    loss = CtbnTransitionLoss(
                        space.design[w][keep], counts[w][keep, s, s2], occ_w[keep, s],
                        chain.horizon, n_ic, feature_map=space.maps[w])
                except DegenerateLossError:
                    degenerate = True
            if degenerate:
                betas[key] = np.zeros(dim)
                lambda_selected[key] = float(grid[-1])
                delta_selected[key] = 0.0
                diagnostics[key] = {"note": "no jumps in evaluation sample", "nnz": 0}
                continue
            best_idx = 0
            best_score = math.inf
            for i, vec in enumerate(finals):
                sub = vec[sl]
                nnz = int(np.count_nonzero(sub[1:]))
                score = loss.bic_score(loss.value(sub), nnz)
                if score < best_score:
                    best_score = score
                    best_idx = i
            chosen = finals[best_idx][sl].copy()
            delta, trimmed = gic_threshold(chosen, loss, p_total, config.gic_grid_size)
            betas[key] = trimmed
            lambda_selected[key] = float(grid[best_idx])
            delta_selected[key] = float(delta)
            diagnostics[key] = {
                "lambda_index": best_idx,
                "nnz": int(np.count_nonzero(trimmed[1:])),
                "bic": float(best_score),
            }
    diagnostics["chain"] = {
        "lambda_grid": [float(x) for x in grid],
        "eval_jump_mean": float(n_ic),
        "jump_trace": [int(x) for x in jump_trace],
        "burn_in": unif.burn_in,
    }
    params = ParamSet(cards, scheme, betas)
    edges = edges_from_beta(params, 0.0)
    return LearnResult(cards, scheme, betas, lambda_selected, delta_selected,
                       edges, diagnostics)

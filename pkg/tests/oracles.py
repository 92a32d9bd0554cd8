"""Independent reference implementations the tests compare against.

Everything here is written the slow, obvious way (enumeration, dense
linear algebra, brute-force scans) and deliberately shares no code with
the package.
"""
from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg


def finite_difference_gradient(fun, theta, h=1e-5):
    """Central differences, coordinate by coordinate."""
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (fun(up) - fun(dn)) / (2 * h)
    return grad


def enumerate_configs(cards):
    """All joint states as tuples, position 0 fastest (mixed-radix order)."""
    return [tuple(reversed(c))
            for c in itertools.product(*[range(k) for k in reversed(cards)])]


def joint_generator(cards, rate_fn):
    """Dense generator over the joint space from a per-node rate function.

    ``rate_fn(w, state, s2)`` gives the intensity of node ``w`` jumping to
    ``s2`` while the joint state is ``state``.
    """
    states = enumerate_configs(cards)
    index = {st: i for i, st in enumerate(states)}
    K = len(states)
    Q = np.zeros((K, K))
    for st in states:
        i = index[st]
        for w, card in enumerate(cards):
            for s2 in range(card):
                if s2 == st[w]:
                    continue
                nxt = list(st)
                nxt[w] = s2
                Q[i, index[tuple(nxt)]] = rate_fn(w, st, s2)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return np.array(states), Q


def hmm_posterior(transition, initial, likelihoods):
    """Exact marginal posterior over hidden paths of a short chain.

    Returns a dict mapping each path (tuple of states) to its posterior
    probability, computed by complete enumeration.
    """
    transition = np.asarray(transition, dtype=float)
    likelihoods = np.asarray(likelihoods, dtype=float)
    m, K = likelihoods.shape
    probs = {}
    for path in itertools.product(range(K), repeat=m):
        p = initial[path[0]] * likelihoods[0, path[0]]
        for j in range(1, m):
            p *= transition[path[j - 1], path[j]] * likelihoods[j, path[j]]
        if p > 0:
            probs[path] = p
    total = sum(probs.values())
    return {path: p / total for path, p in probs.items()}


def conditioned_moments(q, a, b, horizon, n=2001):
    """Expected occupancy and jump counts of an MJP bridge from ``a`` to ``b``.

    Uses E[t_s] = int P_u(a,s) P_{T-u}(s,b) du / P_T(a,b) and
    E[n_{s,s'}] = Q(s,s') int P_u(a,s) P_{T-u}(s',b) du / P_T(a,b),
    integrated by Simpson's rule on ``n`` (odd) grid points.
    """
    q = np.asarray(q, dtype=float)
    size = q.shape[0]
    ts = np.linspace(0.0, horizon, n)
    mats = [scipy.linalg.expm(q * t) for t in ts]
    denom = mats[-1][a, b]
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (ts[1] - ts[0]) / 3.0
    fwd = np.stack([m[a, :] for m in mats])
    back = np.stack([mats[n - 1 - i][:, b] for i in range(n)])
    occ = (w[:, None] * fwd * back).sum(axis=0) / denom
    jumps = q * (fwd.T @ (w[:, None] * back)) / denom
    np.fill_diagonal(jumps, 0.0)
    return occ, jumps


def sem_covariance(weights, noise_sd):
    """Stationary covariance of a linear structural equation model.

    ``x = intercepts + W^T x + eps`` column-wise, so with B = W^T,
    cov = (I - B)^{-1} D (I - B)^{-T}.
    """
    W = np.asarray(weights, dtype=float)
    d = W.shape[0]
    B = W.T
    inv = np.linalg.inv(np.eye(d) - B)
    D = np.diag(np.asarray(noise_sd, dtype=float) ** 2)
    return inv @ D @ inv.T


def all_digraphs(nodes):
    """Every simple directed graph on ``nodes`` vertices as a frozenset."""
    pairs = [(u, v) for u in range(nodes) for v in range(nodes) if u != v]
    graphs = []
    for mask in range(1 << len(pairs)):
        graphs.append(frozenset(p for i, p in enumerate(pairs)
                                if mask >> i & 1))
    return graphs


def shd_by_search(a, b, nodes):
    """Minimal add/delete/reverse operations from graph ``a`` to ``b``.

    Plain breadth-first search over edge sets; exponential, only for tiny
    node counts.
    """
    a = frozenset(a)
    b = frozenset(b)
    if a == b:
        return 0
    seen = {a}
    frontier = [a]
    dist = 0
    pairs = [(u, v) for u in range(nodes) for v in range(nodes) if u != v]
    while frontier:
        dist += 1
        nxt = []
        for g in frontier:
            moves = []
            for p in pairs:
                if p in g:
                    moves.append(g - {p})
                    rev = (p[1], p[0])
                    if rev not in g:
                        moves.append((g - {p}) | {rev})
                else:
                    moves.append(g | {p})
            for h in moves:
                h = frozenset(h)
                if h == b:
                    return dist
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        frontier = nxt
    raise AssertionError("search space exhausted")


def trajectory_negloglik(times, states, horizon, cards, rate_fn):
    """Complete-data negative log-likelihood of one trajectory.

    ``rate_fn(w, state, s2)`` as in :func:`joint_generator`; the density is
    prod(rates at jumps) * exp(-integral of total leave rate).
    """
    states = np.asarray(states)
    grid = np.concatenate(([0.0], np.asarray(times, dtype=float), [horizon]))
    total = 0.0
    for i in range(states.shape[0]):
        dt = grid[i + 1] - grid[i]
        st = tuple(int(x) for x in states[i])
        leave = sum(rate_fn(w, st, s2)
                    for w, card in enumerate(cards)
                    for s2 in range(card)
                    if s2 != st[w])
        total += leave * dt
        if i + 1 < states.shape[0]:
            nxt = states[i + 1]
            w = int(np.flatnonzero(nxt != states[i])[0])
            total -= np.log(rate_fn(w, st, int(nxt[w])))
    return total

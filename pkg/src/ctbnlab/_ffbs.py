"""Numba kernel for forward filtering / backward sampling.

Kept in its own module so the jit cache has a stable source location.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def ffbs_kernel(transition, likelihoods, initial, uniforms):
    """Sample a skeleton of the discrete chain given per-step likelihoods.

    ``likelihoods`` has one row per grid point.  Returns the sampled codes,
    or an array whose first entry is -1 when the filtered mass dies (the
    observations are infeasible under the transition matrix).

    The loops are written out by hand because the state space is small and
    the grid is long; per-step temporaries would dominate the runtime.
    """
    n1, size = likelihoods.shape
    alpha = np.empty((n1, size))
    work = np.empty(size)
    for s in range(size):
        work[s] = initial[s]
    for j in range(n1):
        z = 0.0
        for s in range(size):
            v = work[s] * likelihoods[j, s]
            alpha[j, s] = v
            z += v
        if z <= 0.0 or not np.isfinite(z):
            out = np.empty(n1, np.int64)
            out[0] = -1
            return out
        inv = 1.0 / z
        for s in range(size):
            alpha[j, s] *= inv
        if j < n1 - 1:
            for s2 in range(size):
                acc = 0.0
                for s in range(size):
                    acc += alpha[j, s] * transition[s, s2]
                work[s2] = acc

    out = np.empty(n1, np.int64)
    out[n1 - 1] = _draw(alpha[n1 - 1], uniforms[n1 - 1])
    for j in range(n1 - 2, -1, -1):
        nxt = out[j + 1]
        z = 0.0
        for s in range(size):
            v = alpha[j, s] * transition[s, nxt]
            work[s] = v
            z += v
        if z <= 0.0:
            out[0] = -1
            return out
        u = uniforms[j] * z
        c = 0.0
        pick = -1
        for s in range(size):
            if work[s] > 0.0:
                pick = s
                c += work[s]
                if u <= c:
                    break
        out[j] = pick
    return out


@njit(cache=True)
def _draw(probs, u):
    c = 0.0
    pick = -1
    for s in range(probs.shape[0]):
        if probs[s] > 0.0:
            pick = s
            c += probs[s]
            if u <= c:
                break
    return pick

"""L1-penalized minimisation of smooth convex losses.

The solver is FISTA with backtracking line search.  Model selection walks
a descending log-uniform lambda grid with warm starts, picks a point by
BIC, and prunes small coordinates with a generalised information criterion
over a threshold grid.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

# KKT tolerances: relative residual for active coordinates, absolute bound
# for unpenalized ones.  Zero penalized coordinates fall back to the
# absolute bound when lambda vanishes (the relative bound has no slack
# there).
KKT_REL = 1e-6
KKT_FREE = 1e-8

GIC_GRID_SIZE = 50
GIC_SPAN = 1e-3


class OptimizationError(RuntimeError):
    """Non-finite objective or diverged line search; carries the iterate."""

    def __init__(self, message: str, iterate: np.ndarray | None = None):
        super().__init__(message)
        self.iterate = iterate


class DegenerateLossError(RuntimeError):
    """The loss has no finite minimiser (flagged, not silently fixed)."""


class SmoothLoss(abc.ABC):
    """Differentiable convex loss with a marked set of penalized coordinates.

    Attributes
    ----------
    dim : int
        Number of coordinates.
    sample_size : float
        The ``n`` entering information criteria.
    penalized : ndarray of bool
        Which coordinates the L1 penalty applies to (intercepts are free).
    """

    dim: int
    sample_size: float
    penalized: np.ndarray

    @abc.abstractmethod
    def value(self, theta: np.ndarray) -> float: ...

    @abc.abstractmethod
    def gradient(self, theta: np.ndarray) -> np.ndarray: ...

    def value_and_gradient(self, theta: np.ndarray):
        return self.value(theta), self.gradient(theta)

    def fit_free(self) -> np.ndarray:
        """Minimise over the unpenalized coordinates with the rest at zero."""
        free = np.nonzero(~self.penalized)[0]
        theta = np.zeros(self.dim)
        if free.size == 0:
            return theta

        def fun(u):
            theta[free] = u
            v, g = self.value_and_gradient(theta)
            return v, g[free]

        res = scipy.optimize.minimize(fun, np.zeros(free.size), jac=True,
                                      method="L-BFGS-B",
                                      options={"gtol": 1e-12, "maxiter": 1000})
        theta = np.zeros(self.dim)
        theta[free] = res.x
        return theta

    # information criteria ----------------------------------------------
    def bic_score(self, value: float, nnz: int) -> float:
        n = self.sample_size
        return n * value + np.log(n) * nnz

    def gic_score(self, value: float, nnz: int, p_total: int) -> float:
        return self.sample_size * value + np.log(p_total) * nnz


def _snap_tiny(loss: SmoothLoss, x: np.ndarray) -> np.ndarray:
    # Penalized coordinates indistinguishable from zero at double precision
    # (activated by rounding drift, e.g. exactly at lambda_max) would
    # otherwise inflate support counts.
    scale = max(1.0, float(np.abs(x).max(initial=0.0)))
    tiny = loss.penalized & (x != 0) & (np.abs(x) <= 1e-12 * scale)
    if not tiny.any():
        return x
    snapped = x.copy()
    snapped[tiny] = 0.0
    return snapped


def soft_threshold(x, threshold):
    """Proximal map of ``threshold * ||.||_1``, elementwise.

    ``threshold`` broadcasts, so a vector with zeros at unpenalized
    coordinates leaves those untouched.
    """
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def penalized_l1(loss: SmoothLoss, theta: np.ndarray) -> float:
    return float(np.abs(theta[loss.penalized]).sum())


def kkt_residuals(loss: SmoothLoss, theta: np.ndarray, lam: float,
                  grad: np.ndarray | None = None) -> dict[str, float]:
    """Max stationarity violations, split by coordinate status."""
    if grad is None:
        grad = loss.gradient(theta)
    pen = loss.penalized
    active = pen & (theta != 0)
    zero = pen & (theta == 0)
    out = {"active": 0.0, "zero": 0.0, "free": 0.0}
    if active.any():
        out["active"] = float(np.abs(grad[active] + lam * np.sign(theta[active])).max())
    if zero.any():
        out["zero"] = float(np.abs(grad[zero]).max())
    if (~pen).any():
        out["free"] = float(np.abs(grad[~pen]).max())
    return out


def kkt_satisfied(loss: SmoothLoss, theta: np.ndarray, lam: float,
                  grad: np.ndarray | None = None) -> bool:
    res = kkt_residuals(loss, theta, lam, grad)
    zero_bound = max(lam * (1 + KKT_REL), KKT_FREE)
    return (res["active"] <= KKT_REL * max(lam, 1.0)
            and res["zero"] <= zero_bound
            and res["free"] <= KKT_FREE)


def fista(loss: SmoothLoss, lam: float, theta0: np.ndarray | None = None,
          tol: float = 1e-10, max_iter: int = 20000,
          return_info: bool = False):
    """Minimise ``loss(theta) + lam * ||theta_penalized||_1``.

    Backtracking FISTA: the local Lipschitz estimate starts at 1 and grows
    by factor 2 until the quadratic upper bound holds; it never shrinks.
    Stops once the relative change of the penalized objective drops below
    ``tol`` and the KKT conditions hold, or at ``max_iter``.
    """
    if lam < 0 or not np.isfinite(lam):
        raise ValueError("lambda must be finite and nonnegative")
    x = np.zeros(loss.dim) if theta0 is None else np.asarray(theta0, float).copy()
    if x.shape != (loss.dim,):
        raise ValueError("theta0 has wrong length")
    thresh_unit = lam * loss.penalized.astype(float)
    y = x.copy()
    t_mom = 1.0
    lip = 1.0
    f_prev = None
    f_cur = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        fy, gy = loss.value_and_gradient(y)
        if not np.isfinite(fy) or not np.isfinite(gy).all():
            raise OptimizationError("objective became non-finite", iterate=y)
        while True:
            step = 1.0 / lip
            cand = soft_threshold(y - step * gy, step * thresh_unit)
            diff = cand - y
            fc = loss.value(cand)
            bound = fy + gy @ diff + 0.5 * lip * (diff @ diff)
            if fc <= bound + 1e-12 * max(1.0, abs(fy)):
                break
            lip *= 2.0
            if lip > 1e18:
                raise OptimizationError("backtracking diverged", iterate=y)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        y = cand + ((t_mom - 1.0) / t_next) * (cand - x)
        x = cand
        t_mom = t_next
        f_cur = fc + lam * penalized_l1(loss, x)
        if f_prev is not None and abs(f_prev - f_cur) <= tol * max(1.0, abs(f_prev)):
            if kkt_satisfied(loss, x, lam):
                converged = True
                break
        f_prev = f_cur
    x = _snap_tiny(loss, x)
    if return_info:
        info = {"iterations": iterations, "converged": converged,
                "objective": float(f_cur),
                "kkt": kkt_residuals(loss, x, lam)}
        return x, info
    return x


@dataclass
class LassoPath:
    """Warm-started solutions along a descending lambda grid."""

    lambdas: np.ndarray
    solutions: list[np.ndarray]
    values: np.ndarray        # smooth loss at each solution
    nnz: np.ndarray           # nonzero penalized coordinates
    infos: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.solutions)


def lambda_max(loss: SmoothLoss, theta_free: np.ndarray | None = None) -> float:
    """Smallest lambda whose solution keeps every penalized coordinate zero."""
    if theta_free is None:
        theta_free = loss.fit_free()
    grad = loss.gradient(theta_free)
    pen = loss.penalized
    if not pen.any():
        return 0.0
    return float(np.abs(grad[pen]).max())


def lambda_path(loss: SmoothLoss, path_len: int = 100,
                lambda_min_ratio: float = 1e-4, tol: float = 1e-10,
                max_iter: int = 20000) -> LassoPath:
    """Solve along ``path_len`` log-uniform lambdas descending from lambda_max."""
    if path_len < 1:
        raise ValueError("path_len must be >= 1")
    if not 0 < lambda_min_ratio <= 1:
        raise ValueError("lambda_min_ratio must lie in (0, 1]")
    start = loss.fit_free()
    lam_top = lambda_max(loss, start)
    if lam_top <= 0:
        lambdas = np.array([0.0])
    elif path_len == 1:
        lambdas = np.array([lam_top])
    else:
        lambdas = np.geomspace(lam_top, lam_top * lambda_min_ratio, path_len)
    solutions: list[np.ndarray] = []
    infos: list[dict] = []
    values = np.empty(len(lambdas))
    nnz = np.empty(len(lambdas), dtype=np.int64)
    theta = start
    for i, lam in enumerate(lambdas):
        theta, info = fista(loss, float(lam), theta, tol=tol, max_iter=max_iter,
                            return_info=True)
        solutions.append(theta.copy())
        infos.append(info)
        values[i] = loss.value(theta)
        nnz[i] = int(np.count_nonzero(theta[loss.penalized]))
    return LassoPath(lambdas, solutions, values, nnz, infos)


def bic_select(path: LassoPath, loss: SmoothLoss) -> int:
    """Index of the BIC-optimal path point; ties go to the larger lambda."""
    if loss.sample_size < 2:
        raise ValueError("BIC needs sample_size >= 2, got %r" % (loss.sample_size,))
    scores = [loss.bic_score(v, int(k)) for v, k in zip(path.values, path.nnz)]
    return int(np.argmin(scores))


def gic_threshold(beta: np.ndarray, loss: SmoothLoss, p_total: int,
                  grid_size: int = GIC_GRID_SIZE):
    """Prune small penalized coordinates by a GIC over a threshold grid.

    The grid holds ``grid_size`` log-uniform values spanning three decades
    below the largest penalized magnitude, plus zero.  Zeroing applies to
    coordinates with ``|beta_j| <= delta``; ties prefer the larger delta.

    Returns ``(delta, thresholded_beta)``.
    """
    if p_total < 1:
        raise ValueError("p_total must be >= 1")
    beta = np.asarray(beta, dtype=float)
    pen = loss.penalized
    mags = np.abs(beta[pen])
    top = float(mags.max()) if mags.size else 0.0
    if top <= 0:
        grid = np.array([0.0])
    else:
        grid = np.concatenate([np.geomspace(top, top * GIC_SPAN, grid_size), [0.0]])
    best_score = np.inf
    best_delta = 0.0
    best_beta = beta
    for delta in grid:
        cand = beta.copy()
        cand[pen & (np.abs(beta) <= delta)] = 0.0
        nnz = int(np.count_nonzero(cand[pen]))
        score = loss.gic_score(loss.value(cand), nnz, p_total)
        if score < best_score:
            best_score = score
            best_delta = float(delta)
            best_beta = cand
    return best_delta, best_beta

"""Hard-margin solver and the closed-form robust max-margin classifier.

The max-l2-margin direction of ``{(x_i, y_i)}`` is the normalized
minimum-norm point of the convex hull of ``z_i = y_i x_i``; its norm is the
margin.  :func:`solve_margin` finds that point with Wolfe's active-set
minimum-norm-point algorithm, working only with the Gram matrix of the
``z_i``.  Every iterate gives a certified interval for the margin:

    min_i <z_i, p> / |p|  <=  margin  <=  |p|

and the solver stops once the relative width of that interval drops below
``tol``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lin_data import DistributionSpec, LinDataset


class NonSeparableError(ValueError):
    """Raised when the certified margin of a dataset is not positive."""


class SolverError(RuntimeError):
    pass


@dataclass
class MarginSolution:
    theta_tilde: np.ndarray
    gamma_tilde: float
    duality_gap: float = 0.0
    support: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0


@dataclass
class LinearClassifier:
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        norm = np.linalg.norm(self.theta)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"classifier must have unit norm, got {norm}")

    @classmethod
    def from_direction(cls, w) -> "LinearClassifier":
        w = np.asarray(w, dtype=np.float64)
        if not np.all(np.isfinite(w)):
            raise ValueError("direction must be finite")
        scale = np.max(np.abs(w)) if w.size else 0.0
        if scale == 0:
            raise ValueError("zero vector has no direction")
        # rescale first so the norm cannot overflow
        w = w / scale
        return cls(w / np.linalg.norm(w))

    def predict(self, xs):
        return np.where(np.asarray(xs) @ self.theta >= 0, 1.0, -1.0)


@dataclass(frozen=True)
class MarginBounds:
    lo: float
    hi: float
    t: float


def _affine_minimizer(gram: np.ndarray) -> np.ndarray:
    """Weights ``a`` (summing to one) minimizing ``a^T gram a``."""
    k = gram.shape[0]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = gram
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k]


def solve_margin(points, labels, tol: float = 1e-10,
                 max_iter: int = 10**6) -> MarginSolution:
    """Max-l2-margin direction and margin of a labelled point set.

    Raises :class:`NonSeparableError` when the minimum-norm point collapses
    to the origin (no direction with positive margin exists).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64)
    if points.shape[0] != labels.shape[0]:
        raise ValueError("one label per point required")
    z = points * labels[:, None]
    gram = z @ z.T
    scale = float(np.max(np.diag(gram)))
    if scale == 0:
        raise NonSeparableError("all points are at the origin")

    support = [int(np.argmin(np.diag(gram)))]
    lam = np.array([1.0])
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise SolverError(f"no certified solution after {max_iter} iterations")
        g = gram[:, support] @ lam
        pnorm2 = float(lam @ g[support])
        if pnorm2 <= 1e-13 * scale:
            raise NonSeparableError("origin lies in the convex hull of y_i x_i")
        j = int(np.argmin(g))
        gap = pnorm2 - g[j]
        if gap <= tol * pnorm2 or j in support:
            break
        support.append(j)
        lam = np.append(lam, 0.0)
        # minor cycle: move towards the affine minimizer, dropping points
        # whose weight hits zero on the way
        while True:
            alpha = _affine_minimizer(gram[np.ix_(support, support)])
            if np.all(alpha > 0):
                lam = alpha
                break
            neg = np.flatnonzero(alpha <= 0)
            ratios = lam[neg] / (lam[neg] - alpha[neg])
            step = float(np.min(ratios))
            lam = step * alpha + (1 - step) * lam
            # the blocking point leaves even if rounding left it slightly positive
            lam[neg[np.argmin(ratios)]] = 0.0
            keep = lam > 1e-15
            support = [s for s, k in zip(support, keep) if k]
            lam = lam[keep] / lam[keep].sum()

    p = z[support].T @ lam
    pnorm = float(np.linalg.norm(p))
    theta = p / pnorm
    margins = z @ theta
    gamma = float(np.min(margins))
    if gamma <= 0:
        raise NonSeparableError(f"certified margin {gamma} is not positive")
    return MarginSolution(theta_tilde=theta, gamma_tilde=gamma,
                          duality_gap=pnorm - gamma,
                          support=np.array(support), weights=lam,
                          iterations=it)


def closed_form_classifier(sol: MarginSolution, r: float,
                           eps_tr: float) -> LinearClassifier:
    """``[r - 2 eps, 2 gamma theta_tilde]`` normalized to unit length."""
    if eps_tr < 0:
        raise ValueError("eps_tr must be non-negative")
    if eps_tr >= r / 2:
        raise ValueError(f"eps_tr={eps_tr} must be below r/2={r / 2}")
    a = r - 2 * eps_tr
    b = 2 * sol.gamma_tilde
    theta = np.concatenate([[a], b * sol.theta_tilde]) / math.hypot(a, b)
    return LinearClassifier(theta / np.linalg.norm(theta))


def robust_maxmargin(data: LinDataset, eps_tr: float,
                     sol: MarginSolution | None = None) -> LinearClassifier:
    """eps_tr-robust max-margin classifier of a dataset from the distribution.

    Pass ``sol`` to reuse an already computed margin solution of the
    stripped data.
    """
    if eps_tr >= data.spec.r / 2:
        raise ValueError(f"eps_tr={eps_tr} must be below r/2={data.spec.r / 2}")
    if data.rotation is not None:
        raise ValueError("closed form needs the unrotated distribution")
    if not data.n < data.spec.d - 1:
        raise ValueError(f"closed form needs n < d-1 (n={data.n}, d={data.spec.d})")
    if sol is None:
        sol = solve_margin(data.stripped, data.ys)
    return closed_form_classifier(sol, data.spec.r, eps_tr)


def shifted_dataset(data: LinDataset, eps_tr: float) -> np.ndarray:
    """Covariates moved towards the decision boundary by ``eps_tr`` along e_1."""
    xs = data.xs.copy()
    xs[:, 0] -= data.ys * eps_tr
    return xs


def margin_bounds(spec: DistributionSpec, n: int, t: float) -> MarginBounds:
    if n < 1:
        raise ValueError("n must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    base = math.sqrt((spec.d - 1) / n)
    dev = 1 + t / math.sqrt(n)
    return MarginBounds(lo=spec.sigma * (base - dev), hi=spec.sigma * (base + dev), t=t)


def t_for_delta(delta: float) -> float:
    """Deviation ``t`` at which the margin bounds hold with probability 1 - delta."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.sqrt(2 * math.log(2 / delta))

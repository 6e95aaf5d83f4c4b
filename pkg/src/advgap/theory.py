"""Closed-form errors, susceptibility and high-probability bounds.

Everything here is a deterministic function of the margin ``gamma`` of the
stripped training data (or of an explicit classifier) and the problem
parameters.  ``phi`` denotes the scale ``sigma * gamma / (r/2 - eps_te)``
that sets the robust error ``Phi(-(r/2 - eps_tr) / phi)``.

``normal_cdf`` is ``scipy.special.ndtr``, which is accurate to a few ulp
over the whole real line (it switches to ``erfc`` in the tails, so
``Phi(-6)`` keeps full relative precision).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .lin_data import DistributionSpec
from .maxmargin import LinearClassifier, margin_bounds, t_for_delta


def normal_cdf(x):
    out = ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TheoryParams:
    spec: DistributionSpec
    n: int
    eps_tr: float
    eps_te: float
    delta: float = 0.05

    def __post_init__(self):
        r = self.spec.r
        if self.eps_te < 0 or self.eps_tr < 0:
            raise ValueError("budgets must be non-negative")
        if not 2 * self.eps_te < r:
            raise ValueError(f"need 2*eps_te < r (eps_te={self.eps_te}, r={r})")
        if not self.eps_tr < r / 2:
            raise ValueError(f"need eps_tr < r/2 (eps_tr={self.eps_tr}, r={r})")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.n < self.spec.d - 1:
            raise ValueError(f"need n < d-1 (n={self.n}, d={self.spec.d})")


@dataclass(frozen=True)
class TheoryBounds:
    phi_min: float
    phi_max: float
    eps_tilde: float
    gap_lower: float
    degenerate: bool = False


def _check_gamma(gamma_tilde):
    if not gamma_tilde > 0:
        raise ValueError(f"gamma_tilde must be positive, got {gamma_tilde}")


def phi_tilde(gamma_tilde: float, spec: DistributionSpec, eps_te: float) -> float:
    _check_gamma(gamma_tilde)
    if not eps_te < spec.r / 2:
        raise ValueError(f"eps_te={eps_te} must be below r/2={spec.r / 2}")
    return spec.sigma * gamma_tilde / (spec.r / 2 - eps_te)


def robust_error_closed(gamma_tilde: float, params: TheoryParams) -> float:
    phi = phi_tilde(gamma_tilde, params.spec, params.eps_te)
    return normal_cdf(-(params.spec.r / 2 - params.eps_tr) / phi)


def standard_accuracy_closed(gamma_tilde: float, r_train: float, r_test: float,
                             sigma: float) -> float:
    """Accuracy on data with separation ``r_test`` of the max-margin
    classifier trained on separation ``r_train``."""
    _check_gamma(gamma_tilde)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return normal_cdf(r_train * r_test / (4 * sigma * gamma_tilde))


def theory_bounds(params: TheoryParams) -> TheoryBounds:
    """phi range and lower bound on ``Err(eps_tr) - Err(0)`` at confidence 1 - delta.

    A non-positive ``phi_min`` or ``eps_tilde`` makes the bound vacuous (no
    positive budget satisfies its condition); it is then reported with
    ``degenerate=True`` and ``gap_lower = 0``.
    """
    spec = params.spec
    half = spec.r / 2
    mb = margin_bounds(spec, params.n, t_for_delta(params.delta))
    phi_min = spec.sigma * mb.lo / (half - params.eps_te)
    phi_max = spec.sigma * mb.hi / (half - params.eps_te)
    eps_tilde = half - phi_max / math.sqrt(2)
    if phi_min <= 0 or eps_tilde <= 0:
        return TheoryBounds(phi_min, phi_max, eps_tilde, 0.0, degenerate=True)
    eff = min(params.eps_tr, eps_tilde)
    gap = normal_cdf(half / phi_min) - normal_cdf((half - eff) / phi_min)
    return TheoryBounds(phi_min, phi_max, eps_tilde, gap)


def _suscept_args(gamma, r, sigma, eps_tr, eps_te):
    a = r - 2 * eps_tr
    return (a * (eps_te - r / 2) / (2 * gamma * sigma),
            a * (-eps_te - r / 2) / (2 * gamma * sigma))


def susceptibility_closed(gamma_tilde: float, params: TheoryParams) -> float:
    _check_gamma(gamma_tilde)
    s = params.spec
    hi_arg, lo_arg = _suscept_args(gamma_tilde, s.r, s.sigma, params.eps_tr, params.eps_te)
    return normal_cdf(hi_arg) - normal_cdf(lo_arg)


def robustness_closed(gamma_tilde: float, params: TheoryParams) -> float:
    return 1.0 - susceptibility_closed(gamma_tilde, params)


def susceptibility_bounds(params: TheoryParams, strict: bool = True) -> tuple[float, float]:
    """Interval for the susceptibility of the robust max-margin classifier.

    Each term of the susceptibility is monotone in ``gamma``, so plugging the
    margin bounds into the two terms in opposite order brackets it whenever
    the margin lies inside its bounds.  ``strict`` enforces the validity
    range ``eps_tr < r/2 - gamma_max`` used by the L1 extension; pass
    ``strict=False`` to evaluate the interval outside it.  A zero test
    budget gives the exact interval ``(0, 0)``.
    """
    s = params.spec
    mb = margin_bounds(s, params.n, t_for_delta(params.delta))
    if mb.lo <= 0:
        raise ValueError("lower margin bound is not positive; interval undefined")
    if strict and not params.eps_tr < s.r / 2 - mb.hi:
        raise ValueError(f"eps_tr={params.eps_tr} outside validity range "
                         f"eps_tr < r/2 - gamma_max = {s.r / 2 - mb.hi:.4g}")
    if params.eps_te == 0:
        # no perturbation flips anything; the two-term expression stays loose here
        return 0.0, 0.0
    first_max, _ = _suscept_args(mb.hi, s.r, s.sigma, params.eps_tr, params.eps_te)
    first_min, _ = _suscept_args(mb.lo, s.r, s.sigma, params.eps_tr, params.eps_te)
    _, second_min = _suscept_args(mb.lo, s.r, s.sigma, params.eps_tr, params.eps_te)
    _, second_max = _suscept_args(mb.hi, s.r, s.sigma, params.eps_tr, params.eps_te)
    hi = normal_cdf(first_max) - normal_cdf(second_min)
    lo = normal_cdf(first_min) - normal_cdf(second_max)
    return lo, hi


# -- arbitrary linear classifiers --------------------------------------------

def _linear_parts(theta, spec, eps_te, kind):
    theta = theta.theta if isinstance(theta, LinearClassifier) else np.asarray(theta, float)
    if theta.shape != (spec.d,):
        raise ValueError("classifier dimension does not match spec")
    t1 = float(theta[0])
    spread = spec.sigma * float(np.linalg.norm(theta[1:]))
    if kind == "signal":
        shrink = eps_te * abs(t1)
    elif kind == "l1":
        shrink = eps_te * float(np.max(np.abs(theta)))
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    return t1 * spec.r / 2, spread, shrink


def _cdf_diff(a, b):
    # Phi(a) - Phi(b) for a >= b, taken in the far tail when both are positive
    if b > 0:
        return max(0.0, normal_cdf(-b) - normal_cdf(-a))
    return max(0.0, normal_cdf(a) - normal_cdf(b))


def _cdf_ratio(num, den):
    # Phi(num / den) with den = 0 read as the limit of a point mass
    if den == 0:
        return 1.0 if num > 0 else (0.0 if num < 0 else 0.5)
    return normal_cdf(num / den)


def robust_error_general_linear(theta, spec: DistributionSpec, eps_te: float,
                                kind: str = "signal") -> float:
    """Exact robust error of any linear classifier under a directed attack.

    The clean margin of a test point is ``theta_1 r/2 + sigma |theta_rest| N``
    for both labels; the worst-case perturbation lowers it by
    ``eps * |theta_1|`` (signal interval) or ``eps * max_j |theta_j|`` (L1 ball).
    """
    mean, spread, shrink = _linear_parts(theta, spec, eps_te, kind)
    return _cdf_ratio(shrink - mean, spread)


def standard_error_general_linear(theta, spec: DistributionSpec) -> float:
    mean, spread, _ = _linear_parts(theta, spec, 0.0, "signal")
    return _cdf_ratio(-mean, spread)


def susceptibility_general_linear(theta, spec: DistributionSpec, eps_te: float,
                                  kind: str = "signal") -> float:
    """Probability that the worst-case perturbation flips the prediction."""
    mean, spread, shrink = _linear_parts(theta, spec, eps_te, kind)
    if spread == 0:
        return 1.0 if abs(mean) < shrink else 0.0
    return _cdf_diff((shrink - mean) / spread, (-shrink - mean) / spread)


def correct_and_susceptible_general_linear(theta, spec: DistributionSpec, eps_te: float,
                                           kind: str = "signal") -> float:
    """Probability of a correct clean prediction that the attack flips."""
    mean, spread, shrink = _linear_parts(theta, spec, eps_te, kind)
    if spread == 0:
        return 1.0 if 0 < mean < shrink else 0.0
    return _cdf_diff(mean / spread, (mean - shrink) / spread)

"""Adversarial logistic regression with an exact inner maximization.

For a linear score the worst case over both directed perturbation sets has
a closed form, so every gradient step uses the exact adversarial example.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lin_data import LinDataset, make_rng
from .maxmargin import LinearClassifier

log = logging.getLogger(__name__)


class PerturbationKind(str, enum.Enum):
    SIGNAL_INTERVAL = "signal"
    L1_BALL = "l1"


@dataclass(frozen=True)
class PerturbationSet:
    kind: PerturbationKind
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "kind", PerturbationKind(self.kind))
        if self.eps < 0:
            raise ValueError("eps must be non-negative")

    def attack_index(self, theta: np.ndarray) -> int:
        """Coordinate moved by the worst-case perturbation against ``theta``."""
        if self.kind is PerturbationKind.SIGNAL_INTERVAL:
            return 0
        # argmax returns the lowest index among ties
        return int(np.argmax(np.abs(theta)))

    def margin_shrink(self, theta: np.ndarray) -> float:
        return self.eps * abs(float(theta[self.attack_index(theta)]))


@dataclass
class TrainConfig:
    lr: float = 0.01
    max_epochs: int = 100_000
    stop_tol: float = 1e-10
    seed: int = 0
    batch_size: int | None = None
    log_every: int = 100
    schedule: str = "normalized"

    def __post_init__(self):
        if self.schedule not in ("constant", "normalized"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")


@dataclass
class TrainTrace:
    epochs: list[int] = field(default_factory=list)
    robust_loss: list[float] = field(default_factory=list)
    margin: list[float] = field(default_factory=list)
    cosine_to_ref: list[float] = field(default_factory=list)
    diverged: bool = False
    non_separable: bool = False
    converged: bool = False
    stop_reason: str = ""

    def record(self, epoch, loss, margin, cosine):
        self.epochs.append(epoch)
        self.robust_loss.append(loss)
        self.margin.append(margin)
        self.cosine_to_ref.append(cosine)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "robust_loss", "margin", "cosine_to_ref"])
            for row in zip(self.epochs, self.robust_loss, self.margin, self.cosine_to_ref):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _sign(v: float) -> float:
    # sign(0) := +1, the documented tie-break
    return -1.0 if v < 0 else 1.0


def worst_case_point(x, y, theta, pert: PerturbationSet) -> np.ndarray:
    """Element of the perturbation set around ``x`` minimizing ``y * theta @ x'``."""
    theta = np.asarray(theta, dtype=np.float64)
    if not np.any(theta):
        raise ValueError("theta must be nonzero")
    j = pert.attack_index(theta)
    out = np.array(x, dtype=np.float64, copy=True)
    out[j] -= y * pert.eps * _sign(theta[j])
    return out


def worst_case_batch(xs, ys, theta, pert: PerturbationSet) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    j = pert.attack_index(theta) if np.any(theta) else 0
    out = np.array(xs, dtype=np.float64, copy=True)
    out[:, j] -= ys * pert.eps * _sign(theta[j])
    return out


def _logistic_loss(m):
    return np.logaddexp(0.0, -m)


def _sigmoid_neg(m):
    # 1 / (1 + exp(m)), stable for large |m|
    return np.exp(-np.logaddexp(0.0, m))


def robust_loss_and_grad(theta, xs, ys, pert: PerturbationSet):
    """Mean robust logistic loss and its gradient at ``theta``.

    The inner maximizer is re-solved at ``theta``; away from ties in the
    attacked coordinate the gradient of the max equals the gradient at the
    maximizer.
    """
    adv = worst_case_batch(xs, ys, theta, pert)
    m = ys * (adv @ theta)
    loss = float(np.mean(_logistic_loss(m)))
    coef = -_sigmoid_neg(m) * ys
    grad = adv.T @ coef / len(ys)
    return loss, grad


def _log_logistic_loss(m):
    # log(log(1 + exp(-m))) without underflow for large margins
    safe = np.minimum(m, 30.0)
    return np.where(m > 30.0, -m, np.log(np.logaddexp(0.0, -safe)))


def robust_log_loss_and_normalized_grad(theta, xs, ys, pert: PerturbationSet):
    """``log L(theta)`` and ``grad L / L``, both stable once ``L`` underflows."""
    adv = worst_case_batch(xs, ys, theta, pert)
    m = ys * (adv @ theta)
    log_terms = _log_logistic_loss(m)
    log_sum = np.logaddexp.reduce(log_terms)
    # sigma(-m_i) / sum_j l(m_j)
    weights = np.exp(-np.logaddexp(0.0, m) - log_sum)
    grad = adv.T @ (-weights * ys)
    return float(log_sum - math.log(len(ys))), grad


def robust_margin(theta, xs, ys, pert: PerturbationSet) -> float:
    """Normalized minimum robust margin of ``theta`` on the training set."""
    norm = np.linalg.norm(theta)
    if norm == 0:
        return 0.0
    return float(np.min(ys * (xs @ theta)) - pert.margin_shrink(theta)) / norm


def _cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def adv_logistic_regression(data: LinDataset, pert: PerturbationSet,
                            cfg: TrainConfig | None = None,
                            reference: np.ndarray | None = None,
                            ref_stop: float = 1e-4,
                            init: np.ndarray | None = None):
    """Gradient descent on the robust logistic loss, starting from ``theta = 0``.

    With ``schedule="constant"`` the step is ``lr * grad L``; with
    ``schedule="normalized"`` it is ``lr * grad L / L``, which follows the same
    objective towards the same limit direction but does not slow down as the
    loss vanishes.

    Stops at ``max_epochs``, when the robust loss decreased by less than a
    relative ``stop_tol`` over the last 100 epochs, or, given a ``reference``
    direction, once the cosine to it exceeds ``1 - ref_stop``.  Returns the
    normalized final iterate and its trace.
    """
    cfg = cfg or TrainConfig()
    xs, ys = data.xs, data.ys
    n, d = xs.shape
    theta = np.zeros(d) if init is None else np.array(init, dtype=np.float64)
    rng = make_rng(cfg.seed)
    full_batch = cfg.batch_size is None or cfg.batch_size >= n
    normalized = cfg.schedule == "normalized"
    trace = TrainTrace()
    window_log_loss = None
    rises = 0
    prev = math.inf

    def step(th, bx, by):
        if normalized:
            log_loss, g = robust_log_loss_and_normalized_grad(th, bx, by, pert)
        else:
            loss, g = robust_loss_and_grad(th, bx, by, pert)
            log_loss = math.log(loss) if loss > 0 else -math.inf
        # overflow is caught by the divergence check below
        with np.errstate(over="ignore", invalid="ignore"):
            return th - cfg.lr * g, log_loss

    for epoch in range(1, cfg.max_epochs + 1):
        last_finite = theta
        if full_batch:
            # log_loss belongs to the iterate before the step
            theta, log_loss = step(theta, xs, ys)
        else:
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                theta, _ = step(theta, xs[idx], ys[idx])
            log_loss = robust_log_loss_and_normalized_grad(theta, xs, ys, pert)[0]

        if math.isnan(log_loss) or log_loss == math.inf or not np.all(np.isfinite(theta)):
            trace.diverged = True
            trace.stop_reason = "non-finite loss"
            theta = last_finite
            break
        rises = rises + 1 if log_loss > prev + 1e-12 else 0
        prev = log_loss
        if rises >= 10:
            trace.diverged = True
            trace.stop_reason = "loss increased for 10 consecutive epochs"
            log.warning("training diverged at epoch %d (lr=%g)", epoch, cfg.lr)
            break

        if epoch % cfg.log_every == 0 or epoch == cfg.max_epochs:
            cos = _cosine(theta, reference) if reference is not None else math.nan
            trace.record(epoch, math.exp(log_loss), robust_margin(theta, xs, ys, pert), cos)
            if reference is not None and cos > 1 - ref_stop:
                trace.converged = True
                trace.stop_reason = "cosine to reference reached"
                break
        if epoch % 100 == 0:
            # relative decrease L_old - L_new < tol * L_old, in log space
            if window_log_loss is not None and \
                    -math.expm1(log_loss - window_log_loss) < cfg.stop_tol:
                trace.converged = True
                trace.stop_reason = "relative loss decrease below stop_tol"
                break
            window_log_loss = log_loss

    if not trace.stop_reason:
        trace.stop_reason = "max_epochs reached"
    tail = trace.robust_loss[-2:]
    if len(tail) == 2 and tail[-1] >= math.log(2) and tail[0] - tail[1] < 1e-6 * tail[1]:
        trace.non_separable = True
    if not np.any(theta):
        raise RuntimeError(f"training left theta at zero ({trace.stop_reason})")
    return LinearClassifier.from_direction(theta), trace

"""Standard error, robust error and susceptibility of linear classifiers.

Monte Carlo estimates draw full ``d``-dimensional test points and attack
them with the exact worst-case perturbation; the exact evaluation uses the
Gaussian projection formulas of :mod:`advgap.theory`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import theory
from .adv_train import PerturbationSet, worst_case_batch
from .lin_data import DistributionSpec, LinDataset, sample_points
from .maxmargin import LinearClassifier, closed_form_classifier, solve_margin

MC_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class EvalReport:
    std_err: float
    rob_err: float
    suscept: float
    mc_std_err_of_estimates: float
    n_mc: int
    eps_te: float
    suscept_given_correct: float = math.nan
    n_shards: int = 1

    def check(self, slack: float = 3.0) -> None:
        """Raise if the report violates the error decomposition."""
        tol = slack * self.mc_std_err_of_estimates + 1e-12
        for name in ("std_err", "rob_err", "suscept"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.rob_err > self.std_err + self.suscept + tol:
            raise ValueError("robust error exceeds standard error + susceptibility")
        if self.rob_err < self.std_err - tol:
            raise ValueError("robust error below standard error")


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def _shard_counts(theta, spec, pert, n, seed_seq):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    chunk = max(1, MC_CHUNK_ELEMENTS // spec.d)
    wrong = flipped = robust_wrong = flipped_correct = 0
    done = 0
    while done < n:
        k = min(chunk, n - done)
        xs, ys = sample_points(spec, k, rng)
        clean = xs @ theta
        adv = worst_case_batch(xs, ys, theta, pert) @ theta
        # score 0 predicts +1 for both clean and attacked points
        pred, pred_adv = clean >= 0, adv >= 0
        correct = pred == (ys > 0)
        # flips are sought against the predicted class, so misclassified
        # points count too
        yhat = np.where(pred, 1.0, -1.0)
        flip = pred != (worst_case_batch(xs, yhat, theta, pert) @ theta >= 0)
        wrong += int(np.count_nonzero(~correct))
        flipped += int(np.count_nonzero(flip))
        flipped_correct += int(np.count_nonzero(flip & correct))
        robust_wrong += int(np.count_nonzero(pred_adv != (ys > 0)))
        done += k
    return wrong, flipped, robust_wrong, flipped_correct


def evaluate_mc(theta: LinearClassifier, spec: DistributionSpec, pert: PerturbationSet,
                n_mc: int, seed: int, n_shards: int = 1, workers: int = 1) -> EvalReport:
    """Monte Carlo errors of ``theta`` on ``n_mc`` fresh samples.

    The sample is split into ``n_shards`` shards seeded by
    ``SeedSequence(seed).spawn``; counts are integers, so the report is
    identical for any ``workers`` at a fixed shard count.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    if n_shards < 1 or n_shards > n_mc:
        raise ValueError("need 1 <= n_shards <= n_mc")
    th = theta.theta if isinstance(theta, LinearClassifier) else np.asarray(theta, float)
    sizes = [n_mc // n_shards + (i < n_mc % n_shards) for i in range(n_shards)]
    seqs = np.random.SeedSequence(seed).spawn(n_shards)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _shard_counts(th, spec, pert, *a), zip(sizes, seqs)))
    else:
        parts = [_shard_counts(th, spec, pert, k, s) for k, s in zip(sizes, seqs)]
    wrong, flipped, robust_wrong, flipped_correct = (sum(c) for c in zip(*parts))
    std, rob, sus = wrong / n_mc, robust_wrong / n_mc, flipped / n_mc
    n_correct = n_mc - wrong
    sus_c = flipped_correct / n_correct if n_correct else math.nan
    se = max(_binomial_se(p, n_mc) for p in (std, rob, sus))
    return EvalReport(std, rob, sus, se, n_mc, pert.eps, sus_c, n_shards)


def evaluate_exact(theta: LinearClassifier, spec: DistributionSpec,
                   pert: PerturbationSet) -> EvalReport:
    """Closed-form errors of an arbitrary linear classifier."""
    kind = pert.kind.value
    std = theory.standard_error_general_linear(theta, spec)
    rob = theory.robust_error_general_linear(theta, spec, pert.eps, kind)
    sus = theory.susceptibility_general_linear(theta, spec, pert.eps, kind)
    joint = theory.correct_and_susceptible_general_linear(theta, spec, pert.eps, kind)
    sus_c = joint / (1 - std) if std < 1 else math.nan
    return EvalReport(std, rob, sus, 0.0, 0, pert.eps, sus_c)


@dataclass
class MetricsRow:
    seed: int
    n: int
    d: int
    r: float
    sigma: float
    eps_tr: float
    eps_te: float
    std_err: float = math.nan
    rob_err: float = math.nan
    suscept: float = math.nan
    gamma_tilde: float = math.nan
    gap_lower: float = math.nan
    gap: float = math.nan
    rob_err_closed: float = math.nan
    mc_se: float = math.nan
    gamma_lo: float = math.nan
    gamma_hi: float = math.nan
    suscept_lo: float = math.nan
    suscept_hi: float = math.nan
    status: str = "ok"
    experiment: str = ""
    wall_time: float = 0.0


def measure(clf: LinearClassifier, spec: DistributionSpec, pert: PerturbationSet,
            n_mc: int, seed: int) -> EvalReport:
    """Monte Carlo report when ``n_mc > 0``, exact report otherwise."""
    if n_mc > 0:
        return evaluate_mc(clf, spec, pert, n_mc, seed)
    return evaluate_exact(clf, spec, pert)


def fill_measurement(row: MetricsRow, rep: EvalReport, rob_closed: float) -> None:
    row.std_err, row.rob_err, row.suscept = rep.std_err, rep.rob_err, rep.suscept
    row.mc_se = rep.mc_std_err_of_estimates
    row.rob_err_closed = rob_closed


def decomposition_curve(data: LinDataset, pert_grid, eps_te: float,
                        spec: DistributionSpec | None = None, n_mc: int = 0,
                        seed: int = 0, delta: float = 0.05,
                        kind: str = "signal") -> list[MetricsRow]:
    """Errors of the robust max-margin classifier along a grid of training budgets.

    ``std_err``/``rob_err``/``suscept`` are Monte Carlo estimates on a test
    sample seeded by ``seed`` (shared across the grid) when ``n_mc > 0``, and
    exact values otherwise; ``rob_err_closed`` is always exact.  A grid point
    whose budget is invalid yields a row with an error status.
    """
    spec = spec or data.spec
    sol = solve_margin(data.stripped, data.ys)
    pert = PerturbationSet(kind, eps_te)
    rows = []
    for eps_tr in sorted(pert_grid):
        row = MetricsRow(seed, data.n, spec.d, spec.r, spec.sigma, eps_tr, eps_te,
                         gamma_tilde=sol.gamma_tilde)
        try:
            clf = closed_form_classifier(sol, spec.r, eps_tr)
            rob_closed = theory.robust_error_general_linear(clf, spec, eps_te, kind)
            fill_measurement(row, measure(clf, spec, pert, n_mc, seed), rob_closed)
            params = theory.TheoryParams(spec, data.n, eps_tr, eps_te, delta)
            row.gap_lower = theory.theory_bounds(params).gap_lower
        except ValueError as exc:
            row.status = f"error: {exc}"
        rows.append(row)
    return rows

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from advgap import adv_train
from advgap.adv_train import (PerturbationSet, TrainConfig, adv_logistic_regression,
                              robust_log_loss_and_normalized_grad, robust_loss_and_grad,
                              robust_margin, worst_case_batch, worst_case_point)
from advgap.lin_data import DistributionSpec, LinDataset, sample_dataset
from advgap.maxmargin import robust_maxmargin, solve_margin


def toy_pair():
    return LinDataset(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, -1.0]),
                      DistributionSpec(2, 1, 2))


class TestPerturbationSet:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            PerturbationSet("signal", -1)

    def test_kind_coerced(self):
        assert PerturbationSet("l1", 1).kind is adv_train.PerturbationKind.L1_BALL


class TestWorstCasePoint:
    def test_signal_example(self):
        x = np.array([6.0, 0.5, -1.0])
        out = worst_case_point(x, 1, np.eye(3)[0], PerturbationSet("signal", 2))
        assert out.tolist() == [4.0, 0.5, -1.0]

    def test_l1_example(self):
        theta = np.array([0.1, 0.9, 0.0])
        out = worst_case_point(np.zeros(3), -1, theta, PerturbationSet("l1", 1))
        assert out.tolist() == [0.0, 1.0, 0.0]

    def test_sign_zero_is_positive(self):
        theta = np.array([0.0, 1.0])
        out = worst_case_point(np.array([1.0, 0.0]), 1, theta, PerturbationSet("signal", 0.5))
        assert out.tolist() == [0.5, 0.0]

    def test_l1_tie_lowest_index(self):
        theta = np.array([0.5, -0.5, 0.5])
        assert PerturbationSet("l1", 1).attack_index(theta) == 0

    def test_zero_theta(self):
        with pytest.raises(ValueError):
            worst_case_point(np.ones(2), 1, np.zeros(2), PerturbationSet("signal", 1))

    @pytest.mark.parametrize("kind", ["signal", "l1"])
    @pytest.mark.parametrize("seed", range(3))
    def test_random_search_oracle(self, kind, seed):
        rng = np.random.default_rng(seed)
        d, eps = 6, 1.3
        x, theta, y = rng.standard_normal(d), rng.standard_normal(d), rng.choice([-1.0, 1.0])
        best = y * theta @ worst_case_point(x, y, theta, PerturbationSet(kind, eps))
        m = 100_000
        if kind == "signal":
            deltas = np.zeros((m, d))
            deltas[:, 0] = rng.uniform(-eps, eps, m)
        else:
            # points of the l1 sphere: random signs times Dirichlet weights, plus the vertices
            w = rng.dirichlet(np.full(d, 0.3), m)
            deltas = eps * w * rng.choice([-1.0, 1.0], (m, d))
            deltas = np.vstack([deltas, eps * np.eye(d), -eps * np.eye(d)])
        vals = y * (x + deltas) @ theta
        assert best <= vals.min() + 1e-12
        assert best >= vals.min() - 1e-2 * abs(vals.min()) - 1e-9 or kind == "signal"

    def test_batch_matches_pointwise(self):
        rng = np.random.default_rng(1)
        xs, ys = rng.standard_normal((7, 4)), rng.choice([-1.0, 1.0], 7)
        theta = rng.standard_normal(4)
        pert = PerturbationSet("l1", 0.7)
        batch = worst_case_batch(xs, ys, theta, pert)
        for i in range(7):
            np.testing.assert_array_equal(batch[i], worst_case_point(xs[i], ys[i], theta, pert))


class TestGradients:
    @pytest.mark.parametrize("kind", ["signal", "l1"])
    def test_finite_differences(self, kind):
        data = sample_dataset(DistributionSpec(12, 1, 10), 15, 0)
        pert = PerturbationSet(kind, 2.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            theta = rng.standard_normal(10) * 0.3
            _, g = robust_loss_and_grad(theta, data.xs, data.ys, pert)
            h = 1e-6
            fd = np.array([(robust_loss_and_grad(theta + h * e, data.xs, data.ys, pert)[0]
                            - robust_loss_and_grad(theta - h * e, data.xs, data.ys, pert)[0])
                           / (2 * h) for e in np.eye(10)])
            assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)

    def test_normalized_gradient(self):
        data = sample_dataset(DistributionSpec(12, 1, 10), 15, 1)
        pert = PerturbationSet("signal", 1.0)
        theta = np.random.default_rng(2).standard_normal(10)
        loss, g = robust_loss_and_grad(theta, data.xs, data.ys, pert)
        log_loss, gn = robust_log_loss_and_normalized_grad(theta, data.xs, data.ys, pert)
        assert log_loss == pytest.approx(math.log(loss), rel=1e-12)
        np.testing.assert_allclose(gn, g / loss, rtol=1e-10)

    def test_normalized_gradient_survives_underflow(self):
        data = sample_dataset(DistributionSpec(12, 1, 50), 15, 1)
        theta = 1e4 * robust_maxmargin(data, 0.0).theta
        log_loss, gn = robust_log_loss_and_normalized_grad(theta, data.xs, data.ys,
                                                            PerturbationSet("signal", 0))
        assert np.isfinite(log_loss) and log_loss < -700
        assert np.all(np.isfinite(gn)) and np.linalg.norm(gn) > 0


class TestTraining:
    def test_symmetric_pair(self):
        clf, trace = adv_logistic_regression(toy_pair(), PerturbationSet("signal", 0),
                                             TrainConfig(max_epochs=5000))
        assert clf.theta @ np.array([1.0, 0.0]) > 0.999

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_closed_form(self, seed):
        data = sample_dataset(DistributionSpec(12, 1, 50), 20, seed)
        ref = robust_maxmargin(data, 3.0).theta
        clf, trace = adv_logistic_regression(data, PerturbationSet("signal", 3.0),
                                             TrainConfig(max_epochs=20_000))
        assert clf.theta @ ref > 0.99

    def test_l1_same_limit(self):
        data = sample_dataset(DistributionSpec(12, 1, 50), 20, 5)
        cfg = TrainConfig(max_epochs=5000)
        a, _ = adv_logistic_regression(data, PerturbationSet("signal", 3.0), cfg)
        b, _ = adv_logistic_regression(data, PerturbationSet("l1", 3.0), cfg)
        assert a.theta @ b.theta > 0.999

    def test_implicit_bias_trace(self):
        data = sample_dataset(DistributionSpec(12, 1, 50), 20, 2)
        ref = robust_maxmargin(data, 2.0).theta
        _, trace = adv_logistic_regression(data, PerturbationSet("signal", 2.0),
                                           TrainConfig(max_epochs=4000, log_every=20),
                                           reference=ref, ref_stop=1e-9)
        cos = np.array(trace.cosine_to_ref)
        tail = cos[len(cos) // 2:]
        assert np.all(np.diff(tail) >= -1e-3)
        closed = math.hypot(6 - 2.0, solve_margin(data.stripped, data.ys).gamma_tilde)
        # the normalized margin of the closed-form classifier is (r/2 - eps) theta_1 + ...;
        # compare the trained iterate with the closed form through the same functional
        target = robust_margin(ref, data.xs, data.ys, PerturbationSet("signal", 2.0))
        assert trace.margin[-1] >= 0.95 * target
        assert target <= closed + 1e-9

    def test_reference_stop(self):
        data = sample_dataset(DistributionSpec(12, 1, 50), 20, 3)
        ref = robust_maxmargin(data, 1.0).theta
        clf, trace = adv_logistic_regression(data, PerturbationSet("signal", 1.0),
                                             TrainConfig(max_epochs=50_000), reference=ref)
        assert trace.converged and trace.stop_reason == "cosine to reference reached"
        assert clf.theta @ ref > 1 - 1e-4

    def test_constant_schedule_makes_progress(self):
        data = sample_dataset(DistributionSpec(12, 1, 50), 20, 0)
        ref = robust_maxmargin(data, 2.0).theta
        clf, trace = adv_logistic_regression(
            data, PerturbationSet("signal", 2.0), TrainConfig(max_epochs=3000, schedule="constant"))
        assert clf.theta @ ref > 0.9
        losses = np.array(trace.robust_loss)
        assert np.all(np.diff(losses) <= 1e-12)

    def test_sgd_deterministic(self):
        data = sample_dataset(DistributionSpec(12, 1, 50), 20, 0)
        cfg = TrainConfig(max_epochs=300, batch_size=5, seed=4)
        a, _ = adv_logistic_regression(data, PerturbationSet("signal", 1.0), cfg)
        b, _ = adv_logistic_regression(data, PerturbationSet("signal", 1.0), cfg)
        assert np.array_equal(a.theta, b.theta)

    def test_non_separable_flag(self):
        clf, trace = adv_logistic_regression(toy_pair(), PerturbationSet("signal", 1.5),
                                             TrainConfig(max_epochs=2000))
        assert trace.non_separable

    def test_non_finite_divergence(self):
        # labels align with the huge coordinate, so the gradient step overflows
        xs = np.array([[1.0, 1e308], [-1.0, -1e308]])
        data = LinDataset(xs, np.array([1.0, -1.0]), DistributionSpec(2, 1, 2))
        clf, trace = adv_logistic_regression(data, PerturbationSet("signal", 0),
                                             TrainConfig(lr=1e10, schedule="constant"),
                                             init=np.array([1.0, 0.0]))
        assert trace.diverged and trace.stop_reason == "non-finite loss"
        assert clf.theta.tolist() == [1.0, 0.0]
        with pytest.raises(RuntimeError):
            adv_logistic_regression(data, PerturbationSet("signal", 0),
                                    TrainConfig(lr=1e10, schedule="constant"))

    def test_rising_loss_divergence(self, monkeypatch):
        calls = {"k": 0}

        def rising(theta, xs, ys, pert):
            calls["k"] += 1
            return float(calls["k"]), np.ones_like(theta)

        monkeypatch.setattr(adv_train, "robust_log_loss_and_normalized_grad", rising)
        _, trace = adv_logistic_regression(toy_pair(), PerturbationSet("signal", 0),
                                           TrainConfig(max_epochs=100))
        assert trace.diverged and "10 consecutive" in trace.stop_reason

    def test_trace_csv(self, tmp_path):
        data = sample_dataset(DistributionSpec(12, 1, 20), 5, 0)
        _, trace = adv_logistic_regression(data, PerturbationSet("signal", 1.0),
                                           TrainConfig(max_epochs=300))
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,robust_loss,margin,cosine_to_ref"
        assert len(lines) == len(trace.epochs) + 1

    @pytest.mark.parametrize("kw", [dict(lr=0), dict(max_epochs=0), dict(stop_tol=0),
                                    dict(schedule="adam")])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


@given(st.integers(0, 2**32 - 1), st.floats(0, 3))
def test_worst_case_never_beats_feasible_signal_grid(seed, eps):
    rng = np.random.default_rng(seed)
    x, theta, y = rng.standard_normal(4), rng.standard_normal(4), rng.choice([-1.0, 1.0])
    best = y * theta @ worst_case_point(x, y, theta, PerturbationSet("signal", eps))
    for beta in np.linspace(-eps, eps, 21):
        assert best <= y * theta @ (x + beta * np.eye(4)[0]) + 1e-12

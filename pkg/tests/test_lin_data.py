import numpy as np
import pytest
from scipy.stats import ortho_group

from advgap.lin_data import (DistributionSpec, LinDataset, make_rng, read_dataset_csv,
                             sample_dataset, write_dataset_csv)


class TestDistributionSpec:
    @pytest.mark.parametrize("r,sigma,d", [(0, 1, 2), (-1, 1, 2), (1, 0, 2), (1, 1, 1)])
    def test_rejects_invalid(self, r, sigma, d):
        with pytest.raises(ValueError):
            DistributionSpec(r, sigma, d)


class TestSampleDataset:
    def test_first_coordinate_is_signal(self):
        data = sample_dataset(DistributionSpec(12, 1, 1000), 50, seed=0)
        assert data.xs.shape == (50, 1000)
        assert np.array_equal(np.abs(data.xs[:, 0]), np.full(50, 6.0))
        assert np.array_equal(data.xs[:, 0], data.ys * 6.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_two_dim_label_matches_sign(self, seed):
        data = sample_dataset(DistributionSpec(2, 1, 2), 1, seed=seed)
        assert data.xs[0, 0] == data.ys[0]

    def test_moments(self):
        n = 10_000
        data = sample_dataset(DistributionSpec(6, 1, 100), n, seed=3)
        pos = data.xs[data.ys > 0, 0]
        assert abs(pos.mean() - 3) < 3 / np.sqrt(n)
        assert abs(data.stripped.std() - 1) < 0.05

    def test_label_balance(self):
        data = sample_dataset(DistributionSpec(6, 1, 2), 10_000, seed=11)
        assert abs(np.mean(data.ys > 0) - 0.5) < 0.02

    def test_noise_normality(self):
        sigma, n, d = 2.0, 500, 201
        g = sample_dataset(DistributionSpec(6, sigma, d), n, seed=5).stripped
        assert abs(g.mean()) < 4 * sigma / np.sqrt(n * (d - 1))
        assert abs(g.var() / sigma**2 - 1) < 0.1

    def test_deterministic(self):
        spec = DistributionSpec(4, 1.5, 30)
        a, b = sample_dataset(spec, 20, seed=7), sample_dataset(spec, 20, seed=7)
        assert np.array_equal(a.xs, b.xs) and np.array_equal(a.ys, b.ys)
        c = sample_dataset(spec, 20, seed=8)
        assert not np.array_equal(a.xs, c.xs)

    def test_frozen_values(self):
        # regression anchor for the Philox + ziggurat sampling pipeline
        data = sample_dataset(DistributionSpec(2, 1, 3), 2, seed=0)
        assert data.ys.tolist() == [-1.0, -1.0]
        assert data.xs.tolist() == [[-1.0, -0.12884495093462758, -0.28978987549091256],
                                    [-1.0, -1.271943284573895, -1.4064349008284343]]

    def test_rotation(self):
        spec = DistributionSpec(6, 1, 10)
        q = ortho_group.rvs(10, random_state=0)
        plain = sample_dataset(spec, 15, seed=2)
        rot = sample_dataset(spec, 15, seed=2, rotation=q)
        np.testing.assert_allclose(rot.xs, plain.xs @ q.T, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(rot.xs, axis=1),
                                   np.linalg.norm(plain.xs, axis=1), rtol=1e-12)

    def test_rotation_must_be_orthogonal(self):
        with pytest.raises(ValueError):
            sample_dataset(DistributionSpec(6, 1, 3), 2, 0, rotation=np.ones((3, 3)))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sample_dataset(DistributionSpec(6, 1, 3), 0, seed=0)

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_rejects_bad_seed(self, seed):
        with pytest.raises(ValueError):
            make_rng(seed)


class TestLinDataset:
    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            LinDataset(np.zeros((2, 3)), np.array([1.0, 0.0]), DistributionSpec(2, 1, 3))

    def test_rejects_inconsistent_signal(self):
        with pytest.raises(ValueError):
            LinDataset(np.zeros((1, 3)), np.array([1.0]), DistributionSpec(2, 1, 3))

    def test_csv_round_trip(self, tmp_path):
        spec = DistributionSpec(6, 1, 5)
        data = sample_dataset(spec, 8, seed=1)
        path = tmp_path / "d.csv"
        write_dataset_csv(data, path)
        text = path.read_text()
        assert text.splitlines()[0] == "y,x_0,x_1,x_2,x_3,x_4"
        assert "\r" not in text
        back = read_dataset_csv(path, spec)
        assert np.array_equal(back.xs, data.xs) and np.array_equal(back.ys, data.ys)

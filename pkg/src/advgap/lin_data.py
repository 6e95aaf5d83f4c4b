"""Synthetic signal-plus-Gaussian distribution and dataset sampling.

A sample is ``x = [y * r / 2, g]`` with ``y`` uniform on ``{+1, -1}`` and
``g ~ N(0, sigma^2 I_{d-1})``.  The ground-truth classifier is ``e_1``.

Sampling uses numpy's ``Philox`` counter-based bit generator and the
ziggurat normal transform of ``Generator.standard_normal``, so a seed fixes
the dataset bit for bit on every platform numpy supports.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class DistributionSpec:
    r: float
    sigma: float
    d: int

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d}")


@dataclass
class LinDataset:
    xs: np.ndarray
    ys: np.ndarray
    spec: DistributionSpec
    rotation: np.ndarray | None = None

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.float64)
        self.ys = np.asarray(self.ys, dtype=np.float64)
        if self.xs.ndim != 2 or self.xs.shape[0] < 1:
            raise ValueError("xs must be a non-empty n x d matrix")
        if self.xs.shape[1] != self.spec.d:
            raise ValueError(f"xs has {self.xs.shape[1]} columns, spec says d={self.spec.d}")
        if self.ys.shape != (self.xs.shape[0],):
            raise ValueError("ys must have one label per row of xs")
        if not np.all(np.abs(self.ys) == 1):
            raise ValueError("labels must be +1 or -1")
        if self.rotation is None and not np.array_equal(self.xs[:, 0], self.ys * (self.spec.r / 2)):
            raise ValueError("first coordinate must equal y * r / 2")

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def stripped(self) -> np.ndarray:
        """The non-signal coordinates ``x[1:]`` of every sample."""
        return self.xs[:, 1:]


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def sample_dataset(spec: DistributionSpec, n: int, seed: int,
                   rotation: np.ndarray | None = None) -> LinDataset:
    """Draw ``n`` i.i.d. samples.

    ``rotation`` is an optional orthogonal ``d x d`` matrix applied to every
    covariate afterwards (ground truth becomes ``rotation[:, 0]``).  The
    returned dataset then no longer has a deterministic first coordinate,
    so the closed-form routines in :mod:`advgap.maxmargin` do not apply to it.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    rng = make_rng(seed)
    ys = np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)
    noise = rng.standard_normal((n, spec.d - 1)) * spec.sigma
    xs = np.empty((n, spec.d))
    xs[:, 0] = ys * (spec.r / 2)
    xs[:, 1:] = noise
    if rotation is not None:
        rotation = np.asarray(rotation, dtype=np.float64)
        if rotation.shape != (spec.d, spec.d):
            raise ValueError("rotation must be d x d")
        if not np.allclose(rotation.T @ rotation, np.eye(spec.d), atol=1e-10):
            raise ValueError("rotation must be orthogonal")
        xs = xs @ rotation.T
    return LinDataset(xs, ys, spec, rotation)


def sample_points(spec: DistributionSpec, n: int, rng: np.random.Generator):
    """Raw ``(xs, ys)`` draw from an existing generator, for Monte Carlo loops."""
    ys = np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)
    xs = np.empty((n, spec.d))
    xs[:, 0] = ys * (spec.r / 2)
    xs[:, 1:] = rng.standard_normal((n, spec.d - 1)) * spec.sigma
    return xs, ys


def write_dataset_csv(data: LinDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["y"] + [f"x_{j}" for j in range(data.spec.d)])
        for x, y in zip(data.xs, data.ys):
            w.writerow([int(y)] + [repr(float(v)) for v in x])


def read_dataset_csv(path, spec: DistributionSpec) -> LinDataset:
    with Path(path).open(newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if header[0] != "y" or len(header) != spec.d + 1:
        raise ValueError(f"unexpected header in {path}")
    ys = np.array([float(row[0]) for row in body])
    xs = np.array([[float(v) for v in row[1:]] for row in body])
    return LinDataset(xs, ys, spec)

"""Logistic regression on flattened images with square-mask adversarial training.

The synthetic corpus stands in for a two-pose gesture dataset: class +1
shows a bright vertical bar, class -1 an L shape (the same bar with a foot),
both at jittered positions on a dim noisy background.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .adv_train import TrainConfig, TrainTrace, _log_logistic_loss
from .images.attacks import MaskSpec, apply_mask, as_image, mask_attack_exact
from .images.pnm import read_pnm, read_seg_mask, write_pnm, write_seg_mask
from .lin_data import make_rng

MODES = ("loss_exact", "paper_literal")


@dataclass
class ImageDataset:
    images: np.ndarray
    labels: np.ndarray
    segs: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.stack([as_image(im) for im in self.images])
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.shape != (len(self.images),):
            raise ValueError("one label per image required")
        if not np.all(np.abs(self.labels) == 1):
            raise ValueError("labels must be +1 or -1")
        if self.segs is not None:
            self.segs = np.asarray(self.segs, dtype=np.uint8)
            if self.segs.shape != self.images.shape[:3]:
                raise ValueError("segmentation masks must match the images")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def flat(self) -> np.ndarray:
        return self.images.reshape(self.n, -1)


@dataclass
class FlatLinearModel:
    theta: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if not (np.all(np.isfinite(self.theta)) and math.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")

    def score(self, img) -> float:
        return float(np.asarray(img, dtype=np.float64).ravel() @ self.theta + self.bias)

    def loss(self, img, label) -> float:
        return float(np.logaddexp(0.0, -label * self.score(img)))

    def predict(self, img) -> int:
        return 1 if self.score(img) >= 0 else -1


# -- corpus --------------------------------------------------------------------

def _motif(h, w, label, rng, jitter):
    # centred bar of 3/4 the height; the L adds a foot of 3/4 the width
    seg = np.zeros((h, w), dtype=np.uint8)
    bar_len, foot, thick = 3 * h // 4, 3 * w // 4, max(1, w // 16)
    top = (h - bar_len) // 2 + int(rng.integers(-jitter, jitter + 1))
    left = (w - foot) // 2 + int(rng.integers(-jitter, jitter + 1))
    seg[top:top + bar_len, left:left + thick] = 1
    if label < 0:
        seg[top + bar_len - thick:top + bar_len, left:left + foot] = 1
    return seg


def synth_corpus(n: int, h: int = 16, w: int = 16, seed: int = 0,
                 intensity: float = 0.9, background: float = 0.1,
                 noise: float = 0.1, jitter: int = 1) -> ImageDataset:
    """Balanced single-channel corpus of bars (+1) and L shapes (-1).

    Pixels are ``intensity`` on the motif and ``background`` elsewhere, plus
    Gaussian noise of scale ``noise``, clipped to [0, 1].  Motifs are centred
    and shifted by up to ``jitter`` pixels in each direction.
    """
    if h < 8 or w < 8:
        raise ValueError("images must be at least 8x8")
    if n < 2:
        raise ValueError("need at least one image per class")
    if not 0 <= jitter <= min(h, w) // 8:
        raise ValueError("jitter must lie in [0, min(h, w) // 8]")
    rng = make_rng(seed)
    labels = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)[rng.permutation(n)]
    images, segs = [], []
    for y in labels:
        seg = _motif(h, w, y, rng, jitter)
        base = np.where(seg == 1, intensity, background)
        img = np.clip(base + noise * rng.standard_normal((h, w)), 0.0, 1.0)
        images.append(img[:, :, None])
        segs.append(seg)
    return ImageDataset(np.stack(images), labels, np.stack(segs))


def write_corpus(directory, data: ImageDataset) -> None:
    """Images and masks as PGM/PPM files plus ``labels.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ext = "pgm" if data.shape[2] == 1 else "ppm"
    with (d / "labels.csv").open("w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["image", "label", "seg"])
        for i, (img, y) in enumerate(zip(data.images, data.labels)):
            name = f"img_{i:05d}.{ext}"
            write_pnm(d / name, img)
            seg_name = ""
            if data.segs is not None:
                seg_name = f"seg_{i:05d}.pgm"
                write_seg_mask(d / seg_name, data.segs[i])
            wr.writerow([name, int(y), seg_name])


def read_corpus(directory) -> ImageDataset:
    d = Path(directory)
    with (d / "labels.csv").open(newline="") as f:
        rows = list(csv.DictReader(f))
    images = [read_pnm(d / r["image"]) for r in rows]
    labels = [int(r["label"]) for r in rows]
    segs = None
    if rows and all(r["seg"] for r in rows):
        segs = np.stack([read_seg_mask(d / r["seg"]) for r in rows])
    return ImageDataset(np.stack(images), labels, segs)


# -- worst-case masks for linear models ----------------------------------------

def _window_sums(arr2d: np.ndarray, m: int) -> np.ndarray:
    return sliding_window_view(arr2d, (m, m)).sum(axis=(2, 3))


def optimal_mask_linear(model: FlatLinearModel, img, label, m: int,
                        mode: str = "loss_exact") -> MaskSpec:
    """Worst ``m x m`` black mask against a linear model, by window scoring.

    ``loss_exact`` maximizes ``y * sum(theta * x)`` over the window, which is
    exactly the window whose removal lowers the margin most.
    ``paper_literal`` maximizes the window sum of ``theta`` alone.  Ties go
    to the first window in row-major order.
    """
    img = as_image(img)
    h, w, c = img.shape
    if not 0 <= m <= min(h, w):
        raise ValueError(f"mask size {m} does not fit a {h}x{w} image")
    if m == 0:
        return MaskSpec(0, 0, 0)
    theta = model.theta.reshape(h, w, c)
    if mode == "loss_exact":
        per_pixel = label * (theta * img).sum(axis=2)
    elif mode == "paper_literal":
        per_pixel = theta.sum(axis=2)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    scores = _window_sums(per_pixel, m)
    k = int(np.argmax(scores))
    return MaskSpec(m, k // scores.shape[1], k % scores.shape[1])


def masked_batch(model: FlatLinearModel, data: ImageDataset, m: int,
                 mode: str = "loss_exact") -> np.ndarray:
    """Flattened training images with each one's worst mask applied."""
    if m == 0:
        return data.flat().copy()
    out = np.empty((data.n, int(np.prod(data.shape))))
    for i, (img, y) in enumerate(zip(data.images, data.labels)):
        spec = optimal_mask_linear(model, img, y, m, mode)
        out[i] = apply_mask(img, spec).ravel()
    return out


# -- training ------------------------------------------------------------------

def _loss_terms(theta, bias, xs, ys):
    margins = ys * (xs @ theta + bias)
    log_terms = _log_logistic_loss(margins)
    log_sum = np.logaddexp.reduce(log_terms)
    # sigma(-m_i) / sum_j l(m_j)
    weights = np.exp(-np.logaddexp(0.0, margins) - log_sum)
    return float(log_sum - math.log(len(ys))), weights


def adv_train_images(data: ImageDataset, m: int, cfg: TrainConfig | None = None,
                     mode: str = "loss_exact", fit_bias: bool = False):
    """Full-batch gradient descent on the mask-robust logistic loss from zero.

    Every step re-solves the worst window per image at the current iterate.
    ``m = 0`` is plain logistic regression.  Step sizes and stopping follow
    :func:`advgap.adv_train.adv_logistic_regression`.
    """
    cfg = cfg or TrainConfig()
    if m < 0:
        raise ValueError("mask size must be non-negative")
    ys = data.labels
    n = data.n
    model = FlatLinearModel(np.zeros(int(np.prod(data.shape))), 0.0)
    normalized = cfg.schedule == "normalized"
    trace = TrainTrace()
    prev, rises, window = math.inf, 0, None
    for epoch in range(1, cfg.max_epochs + 1):
        xs = masked_batch(model, data, m, mode)
        log_loss, weights = _loss_terms(model.theta, model.bias, xs, ys)
        # n * weights = sigma(-m_i) / L, so this is grad L / L; scaling by L gives grad L
        coef = -n * weights * ys
        if not normalized:
            coef = coef * math.exp(log_loss)
        grad = xs.T @ coef / n
        model.theta = model.theta - cfg.lr * grad
        if fit_bias:
            model.bias -= cfg.lr * float(coef.sum()) / n

        if not (math.isfinite(log_loss) and np.all(np.isfinite(model.theta))):
            trace.diverged, trace.stop_reason = True, "non-finite loss"
            break
        rises = rises + 1 if log_loss > prev + 1e-12 else 0
        prev = log_loss
        if rises >= 10:
            trace.diverged = True
            trace.stop_reason = "loss increased for 10 consecutive epochs"
            break
        if epoch % cfg.log_every == 0 or epoch == cfg.max_epochs:
            margins = ys * (xs @ model.theta + model.bias)
            norm = float(np.linalg.norm(model.theta)) or 1.0
            trace.record(epoch, math.exp(log_loss), float(margins.min()) / norm, math.nan)
        if epoch % 100 == 0:
            if window is not None and -math.expm1(log_loss - window) < cfg.stop_tol:
                trace.converged = True
                trace.stop_reason = "relative loss decrease below stop_tol"
                break
            window = log_loss
    if not trace.stop_reason:
        trace.stop_reason = "max_epochs reached"
    tail = trace.robust_loss[-2:]
    if len(tail) == 2 and tail[-1] >= math.log(2) and tail[0] - tail[1] < 1e-6 * tail[1]:
        trace.non_separable = True
    return model, trace


def weight_visualization(model: FlatLinearModel, shape) -> np.ndarray:
    """Min-max normalized weight map as an ``(H, W, 1)`` image; constant weights give 0.5."""
    h, w, c = shape
    theta = model.theta.reshape(h, w, c).mean(axis=2)
    lo, hi = float(theta.min()), float(theta.max())
    if hi == lo:
        return np.full((h, w, 1), 0.5)
    return ((theta - lo) / (hi - lo))[:, :, None]


# -- evaluation and sweep ------------------------------------------------------

@dataclass(frozen=True)
class ImageEval:
    std_err: float
    rob_err: float
    suscept: float


def evaluate_mask_robustness(model: FlatLinearModel, data: ImageDataset, m: int) -> ImageEval:
    """Errors under the exact grid-search mask attack of size ``m``.

    Susceptibility counts images whose prediction some mask can flip,
    whether or not the clean prediction was correct.
    """
    wrong = rob_wrong = flipped = 0
    for img, y in zip(data.images, data.labels):
        pred = model.predict(img)
        pred_adv = pred_flip = pred
        if m > 0:
            spec, _ = mask_attack_exact(img, y, model.loss, m)
            pred_adv = model.predict(apply_mask(img, spec))
            # flips are sought against the predicted class
            spec = spec if pred == y else mask_attack_exact(img, pred, model.loss, m)[0]
            pred_flip = model.predict(apply_mask(img, spec))
        wrong += pred != y
        rob_wrong += pred_adv != y
        flipped += pred_flip != pred
    n = data.n
    return ImageEval(wrong / n, rob_wrong / n, flipped / n)


@dataclass
class ImageRow:
    seed: int
    n: int
    h: int
    w: int
    m_tr: int
    m_te: int
    mode: str
    std_err: float = math.nan
    rob_err: float = math.nan
    suscept: float = math.nan
    train_rob_loss: float = math.nan
    epochs: int = 0
    status: str = "ok"
    experiment: str = "image_lab"
    wall_time: float = 0.0


@dataclass
class ImageLabConfig:
    n: int = 20
    h: int = 16
    w: int = 16
    m_grid: list[int] = field(default_factory=lambda: [0, 2, 4, 6])
    m_te: int = 2
    n_test: int = 200
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    mode: str = "loss_exact"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(max_epochs=2000))
    weights_dir: str | None = None


def run_image_point(cfg: ImageLabConfig, seed: int, m_tr: int) -> ImageRow:
    """Train at mask budget ``m_tr`` on one seeded corpus and evaluate at ``m_te``.

    The test corpus uses a seed derived from ``seed`` so it never overlaps
    the training images.
    """
    start = time.perf_counter()
    row = ImageRow(seed, cfg.n, cfg.h, cfg.w, m_tr, cfg.m_te, cfg.mode)
    try:
        train = synth_corpus(cfg.n, cfg.h, cfg.w, seed)
        test = synth_corpus(cfg.n_test, cfg.h, cfg.w, seed + 10**6)
        model, trace = adv_train_images(train, m_tr, cfg.train, cfg.mode)
        ev = evaluate_mask_robustness(model, test, cfg.m_te)
        row.std_err, row.rob_err, row.suscept = ev.std_err, ev.rob_err, ev.suscept
        if cfg.weights_dir is not None:
            Path(cfg.weights_dir).mkdir(parents=True, exist_ok=True)
            write_pnm(Path(cfg.weights_dir) / f"weights_seed{seed}_m{m_tr}.pgm",
                      weight_visualization(model, train.shape))
        row.train_rob_loss = trace.robust_loss[-1] if trace.robust_loss else math.nan
        row.epochs = trace.epochs[-1] if trace.epochs else 0
        if trace.diverged:
            row.status = f"error: {trace.stop_reason}"
    except ValueError as exc:
        row.status = f"error: {exc}"
    row.wall_time = time.perf_counter() - start
    return row

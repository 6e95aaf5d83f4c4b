"""Directed image attacks: square black masks, motion blur, illumination.

Images are ``(H, W, C)`` float arrays in ``[0, 1]`` and segmentation masks
``(H, W)`` arrays in ``{0, 1}``.  A *model* is any callable
``model(image, label) -> loss``; attacks return the perturbation that
maximizes it.  All searches use a fixed tie order so results are identical
across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LossFn = Callable[[np.ndarray, float], float]


def as_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected an H x W x C image with C in (1, 3), got {img.shape}")
    if img.size and (img.min() < 0 or img.max() > 1):
        raise ValueError("pixel values must lie in [0, 1]")
    return img


def as_seg(seg, img: np.ndarray) -> np.ndarray:
    seg = np.asarray(seg)
    if seg.shape != img.shape[:2]:
        raise ValueError(f"segmentation shape {seg.shape} does not match image {img.shape[:2]}")
    if not np.all((seg == 0) | (seg == 1)):
        raise ValueError("segmentation mask must be binary")
    return seg.astype(bool)


# -- square masks -------------------------------------------------------------

@dataclass(frozen=True)
class MaskSpec:
    size: int
    row: int
    col: int


def _check_mask(shape, spec: MaskSpec):
    h, w = shape[:2]
    if spec.size < 0 or spec.size > min(h, w):
        raise ValueError(f"mask size {spec.size} does not fit a {h}x{w} image")
    if not (0 <= spec.row <= h - spec.size and 0 <= spec.col <= w - spec.size):
        raise ValueError(f"mask at ({spec.row}, {spec.col}) is out of bounds")


def apply_mask(img, spec: MaskSpec) -> np.ndarray:
    img = as_image(img)
    _check_mask(img.shape, spec)
    out = img.copy()
    out[spec.row:spec.row + spec.size, spec.col:spec.col + spec.size, :] = 0.0
    return out


def mask_windows(h: int, w: int, m: int) -> list[MaskSpec]:
    """All ``m x m`` windows in row-major order of their upper-left corner."""
    if m < 0 or m > min(h, w):
        raise ValueError(f"mask size {m} does not fit a {h}x{w} image")
    return [MaskSpec(m, i, j) for i in range(h - m + 1) for j in range(w - m + 1)]


def mask_attack_exact(img, label, model: LossFn, m: int) -> tuple[MaskSpec, float]:
    """Full grid search over mask positions; first maximum in row-major order wins."""
    img = as_image(img)
    best, best_loss = None, -np.inf
    for spec in mask_windows(img.shape[0], img.shape[1], m):
        loss = float(model(apply_mask(img, spec), label))
        if loss > best_loss:
            best, best_loss = spec, loss
    return best, best_loss


def window_l1(arr, m: int) -> np.ndarray:
    """``(H-m+1, W-m+1)`` array of l1 norms of every ``m x m`` window (all channels)."""
    a = np.abs(np.asarray(arr, dtype=np.float64))
    if a.ndim == 2:
        a = a[:, :, None]
    per_pixel = a.sum(axis=2)
    if m == 0:
        return np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    # each window is summed in the same order, so equal windows tie exactly
    return sliding_window_view(per_pixel, (m, m)).sum(axis=(2, 3))


def mask_candidates_by_gradient(grad, m: int, K: int) -> list[MaskSpec]:
    """The ``K`` windows with the largest gradient l1 norm, descending.

    Ties keep row-major order; asking for more windows than exist returns
    all of them.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    scores = window_l1(grad, m)
    order = np.argsort(-scores.ravel(), kind="stable")[:K]
    ncols = scores.shape[1]
    return [MaskSpec(m, int(k // ncols), int(k % ncols)) for k in order]


def mask_attack_candidates(img, label, model: LossFn, grad, m: int,
                           K: int) -> tuple[MaskSpec, float]:
    """List search over the ``K`` gradient-selected windows."""
    img = as_image(img)
    best, best_loss = None, -np.inf
    for spec in mask_candidates_by_gradient(grad, m, K):
        loss = float(model(apply_mask(img, spec), label))
        if loss > best_loss:
            best, best_loss = spec, loss
    return best, best_loss


# -- motion blur ---------------------------------------------------------------

@dataclass(frozen=True)
class BlurKernel:
    m: int
    kernel: np.ndarray


def motion_blur_kernel(m: int, angle: int = 0) -> BlurKernel:
    """``m x m`` kernel whose row ``(m - 1) // 2`` holds ``1/m``.

    The weights are multiples of ``2**-50`` with the rounding residue on the
    last one, so the row sums to exactly 1 in any summation order; each
    weight is within ``m * 2**-50`` of ``1/m``.  ``angle=90`` gives the
    transposed (vertical) kernel.
    """
    if m < 1:
        raise ValueError("kernel size must be at least 1")
    if angle not in (0, 90):
        raise ValueError("angle must be 0 or 90")
    unit = 2 ** 50
    row = np.full(m, float(unit // m))
    row[-1] = unit - (m - 1) * (unit // m)
    k = np.zeros((m, m))
    k[(m - 1) // 2, :] = row / unit
    return BlurKernel(m, k.T.copy() if angle == 90 else k)


def correlate2d(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2D correlation with reflect-101 borders and the anchor at the kernel centre.

    Written as ``x + sum_k w_k (x_shifted_k - x)``, which equals the plain
    weighted sum for kernels summing to one but keeps constant images
    exactly fixed.
    """
    kh, kw = kernel.shape
    ay, ax = kh // 2, kw // 2
    h, w = x.shape
    xp = np.pad(x, ((ay, kh - 1 - ay), (ax, kw - 1 - ax)), mode="reflect")
    acc = np.zeros_like(x)
    for a, b in zip(*np.nonzero(kernel)):
        acc += kernel[a, b] * (xp[a:a + h, b:b + w] - x)
    return x + acc


def blur_image(img, kernel: BlurKernel) -> np.ndarray:
    img = as_image(img)
    out = np.stack([correlate2d(img[:, :, c], kernel.kernel) for c in range(img.shape[2])], axis=2)
    return np.clip(out, 0.0, 1.0)


def blur_object(img, seg, m: int, angle: int = 0) -> np.ndarray:
    """Motion-blur the segmented object and paste it back on the untouched background."""
    img = as_image(img)
    mask = as_seg(seg, img)
    blurred = blur_image(img, motion_blur_kernel(m, angle))
    return np.where(mask[:, :, None], blurred, img)


def blur_sizes(m_max: int, stride: int) -> list[int]:
    """Kernel sizes searched: all of ``1..m_max`` or the even sizes ``2, 4, ...``."""
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    if stride == 1:
        return list(range(1, m_max + 1))
    if stride == 2:
        return list(range(2, m_max + 1, 2)) or [1]
    raise ValueError("stride must be 1 or 2")


def blur_attack_exact(img, seg, label, model: LossFn, m_max: int,
                      stride: int = 1, angle: int = 0) -> tuple[int, np.ndarray, float]:
    """List search over blur sizes; ties go to the smallest size."""
    best = None
    for m in blur_sizes(m_max, stride):
        cand = blur_object(img, seg, m, angle)
        loss = float(model(cand, label))
        if best is None or loss > best[2]:
            best = (m, cand, loss)
    return best


# -- adversarial illumination -------------------------------------------------

def illumination_shifts(eps: float, k_max: int) -> list[float]:
    """``eps * K / k_max`` for ``K`` in ``[-k_max, k_max]``, ordered 0, -1, +1, -2, ...

    The order encodes the tie-break: smallest ``|a|`` first, negative before
    positive.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    ks = [0] + [s * k for k in range(1, k_max + 1) for s in (-1, 1)]
    return [eps * k / k_max for k in ks]


def illuminate(img, seg, a: float) -> np.ndarray:
    """Add ``a`` to the object pixels, clip them to [0, 1], keep the background."""
    img = as_image(img)
    mask = as_seg(seg, img)
    shifted = np.clip(img + a, 0.0, 1.0)
    return np.where(mask[:, :, None], shifted, img)


def illumination_attack(img, seg, label, model: LossFn, eps: float,
                        k_max: int) -> tuple[float, np.ndarray, float]:
    best = None
    for a in illumination_shifts(eps, k_max):
        cand = illuminate(img, seg, a)
        loss = float(model(cand, label))
        if best is None or loss > best[2]:
            best = (a, cand, loss)
    return best

"""PSNR and SSIM on real-valued images."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch, TooSmall

# Returned instead of +inf when the images are identical (MSE = 0).
PSNR_IDENTICAL = 300.0

SSIM_WINDOW = 7


def psnr(a, b, data_range: float) -> float:
    """10 * log10(data_range^2 / MSE); identical images return the sentinel."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"psnr shapes {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return float(10.0 * np.log10(data_range ** 2 / mse))


def _box_mean(a: np.ndarray, win: int) -> np.ndarray:
    return sliding_window_view(a, (win, win)).mean(axis=(-2, -1))


def ssim(a, b, data_range: float, win: int = SSIM_WINDOW) -> float:
    """Mean local SSIM with a uniform win x win window.

    Stabilizers are C1 = (0.01 * range)^2 and C2 = (0.03 * range)^2; local
    moments are plain (biased) box averages over the valid region.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"ssim shapes {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ShapeMismatch("ssim expects 2D images")
    if min(a.shape) < win:
        raise TooSmall(f"image {a.shape} smaller than {win}x{win} window")
    if data_range <= 0:
        raise ValueError("data_range must be positive")

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a = _box_mean(a, win)
    mu_b = _box_mean(b, win)
    var_a = _box_mean(a * a, win) - mu_a ** 2
    var_b = _box_mean(b * b, win) - mu_b ** 2
    cov = _box_mean(a * b, win) - mu_a * mu_b
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)
             / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return float(score.mean())

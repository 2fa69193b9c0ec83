"""Centered, unitary 2D Fourier operators.

Conventions: the DC component sits at index (H//2, W//2); both directions are
scaled by 1/sqrt(H*W) so the transform is unitary (Parseval holds exactly).
The forward center-shift rolls by floor(n/2), its inverse by ceil(n/2), so odd
dimensions round-trip exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


def center_shift(a: np.ndarray) -> np.ndarray:
    """Roll the last two axes by floor(n/2): DC index 0 -> center."""
    return np.fft.fftshift(a, axes=(-2, -1))


def center_unshift(a: np.ndarray) -> np.ndarray:
    """Inverse of center_shift (roll by ceil(n/2))."""
    return np.fft.ifftshift(a, axes=(-2, -1))


def fft2c(img) -> np.ndarray:
    """Centered unitary 2D FFT of a single (H, W) image."""
    a = np.asarray(img, dtype=np.complex128)
    if a.ndim != 2:
        raise ShapeMismatch(f"fft2c expects (H, W), got {a.shape}")
    return center_shift(np.fft.fft2(center_unshift(a), norm="ortho"))


def ifft2c(ksp) -> np.ndarray:
    """Exact inverse of fft2c."""
    a = np.asarray(ksp, dtype=np.complex128)
    if a.ndim != 2:
        raise ShapeMismatch(f"ifft2c expects (H, W), got {a.shape}")
    return center_shift(np.fft.ifft2(center_unshift(a), norm="ortho"))


def fft2c_multicoil(stack) -> np.ndarray:
    """fft2c applied independently to every coil of a (C, H, W) stack."""
    a = np.asarray(stack, dtype=np.complex128)
    if a.ndim != 3:
        raise ShapeMismatch(f"expected (coils, H, W), got {a.shape}")
    return center_shift(np.fft.fft2(center_unshift(a), axes=(-2, -1), norm="ortho"))


def ifft2c_multicoil(stack) -> np.ndarray:
    """ifft2c applied independently to every coil of a (C, H, W) stack."""
    a = np.asarray(stack, dtype=np.complex128)
    if a.ndim != 3:
        raise ShapeMismatch(f"expected (coils, H, W), got {a.shape}")
    return center_shift(np.fft.ifft2(center_unshift(a), axes=(-2, -1), norm="ortho"))


@dataclass(frozen=True)
class FftPlan:
    """Reusable descriptor binding a transform direction to one (H, W) shape."""

    height: int
    width: int
    direction: str  # "forward" | "inverse"

    def __post_init__(self):
        if self.direction not in ("forward", "inverse"):
            raise ValueError(f"unknown direction {self.direction!r}")

    def apply(self, a) -> np.ndarray:
        arr = np.asarray(a, dtype=np.complex128)
        if arr.shape[-2:] != (self.height, self.width):
            raise ShapeMismatch(
                f"plan is for {(self.height, self.width)}, got {arr.shape[-2:]}")
        if arr.ndim == 2:
            return fft2c(arr) if self.direction == "forward" else ifft2c(arr)
        if arr.ndim == 3:
            return (fft2c_multicoil(arr) if self.direction == "forward"
                    else ifft2c_multicoil(arr))
        raise ShapeMismatch(f"plan applies to 2D/3D arrays, got ndim={arr.ndim}")

"""Domain types, intensity normalization, and coil combination operators.

Complex images are numpy ``complex128`` arrays of shape (H, W); multi-coil
tensors are (C, H, W) with the coil axis first.  All operations are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstantImage, ShapeMismatch

# Guards the sens_combine denominator at pixels with (near-)zero sensitivity.
COMBINE_EPS = 1e-12

# Pixels whose pre-normalization RSS falls below this fraction of the maximum
# are treated as outside the coil support and forced to exactly zero.
SUPPORT_REL_THRESHOLD = 1e-3


def as_complex_image(a) -> np.ndarray:
    """Coerce to a finite 2D complex128 array."""
    arr = np.ascontiguousarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected 2D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN/Inf samples")
    return arr


def as_coil_stack(a) -> np.ndarray:
    """Coerce to a finite (C, H, W) complex128 array."""
    arr = np.ascontiguousarray(a, dtype=np.complex128)
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected (coils, H, W) stack, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coil stack contains NaN/Inf samples")
    return arr


@dataclass(frozen=True)
class NormScale:
    """Affine record (lo, hi) making min-max normalization invertible."""

    lo: float
    hi: float

    def invert(self, img: np.ndarray) -> np.ndarray:
        return img * (self.hi - self.lo) + self.lo


def normalize_unit_range(img) -> tuple[np.ndarray, NormScale]:
    """Map a real image affinely onto [0, 1].

    Returns the normalized image and the NormScale needed to undo it.
    Raises ConstantImage when max == min.
    """
    a = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("image contains NaN/Inf samples")
    lo = float(a.min())
    hi = float(a.max())
    if hi == lo:
        raise ConstantImage(f"image is constant (value {lo}); range is empty")
    return (a - lo) / (hi - lo), NormScale(lo, hi)


@dataclass(frozen=True)
class SensitivityMaps:
    """Per-coil complex spatial weights, unit-RSS normalized on support.

    data:    (C, H, W) complex128
    support: (H, W) bool; off-support entries of data are exactly zero
    """

    data: np.ndarray
    support: np.ndarray

    @property
    def coils(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def validate(self, atol: float = 1e-6) -> None:
        if self.data.ndim != 3:
            raise ShapeMismatch(f"maps must be (C, H, W), got {self.data.shape}")
        if self.support.shape != self.data.shape[1:]:
            raise ShapeMismatch("support shape does not match map shape")
        rss = np.sqrt((np.abs(self.data) ** 2).sum(axis=0))
        on = self.support.astype(bool)
        if on.any() and np.max(np.abs(rss[on] - 1.0)) > atol:
            raise ValueError("maps are not unit-RSS on support")
        if (~on).any() and np.any(self.data[:, ~on] != 0):
            raise ValueError("maps are nonzero outside support")


def unit_rss_maps(raw: np.ndarray,
                  rel_threshold: float = SUPPORT_REL_THRESHOLD) -> SensitivityMaps:
    """Normalize raw per-coil weights to unit RSS on their support.

    Support is the set of pixels whose raw RSS exceeds ``rel_threshold`` times
    the maximum raw RSS; everything else is zeroed.
    """
    raw = as_coil_stack(raw)
    rss = np.sqrt((np.abs(raw) ** 2).sum(axis=0))
    peak = rss.max()
    support = rss > rel_threshold * peak if peak > 0 else np.zeros(rss.shape, bool)
    safe = np.where(support, rss, 1.0)
    data = np.where(support[None], raw / safe[None], 0.0 + 0.0j)
    return SensitivityMaps(data=data, support=support)


def rss_combine(coil_imgs) -> np.ndarray:
    """Root-sum-of-squares coil combination: sqrt(sum_c |v_c|^2)."""
    stack = as_coil_stack(coil_imgs)
    return np.sqrt((np.abs(stack) ** 2).sum(axis=0))


def sens_expand(img, maps: SensitivityMaps) -> np.ndarray:
    """Project an image onto coils: per-coil product S_c * img."""
    x = as_complex_image(img)
    if x.shape != (maps.height, maps.width):
        raise ShapeMismatch(f"image {x.shape} vs maps {(maps.height, maps.width)}")
    return maps.data * x[None]


def sens_combine(coil_imgs, maps: SensitivityMaps) -> np.ndarray:
    """Normalized conjugate-weighted combine (left inverse of sens_expand).

    Per pixel: sum_c conj(S_c) v_c / max(sum_c |S_c|^2, eps), forced to zero
    outside the support.
    """
    stack = as_coil_stack(coil_imgs)
    if stack.shape != maps.data.shape:
        raise ShapeMismatch(f"stack {stack.shape} vs maps {maps.data.shape}")
    num = (np.conj(maps.data) * stack).sum(axis=0)
    den = (np.abs(maps.data) ** 2).sum(axis=0)
    return np.where(maps.support, num / np.maximum(den, COMBINE_EPS), 0.0 + 0.0j)


@dataclass(frozen=True)
class SamplingMask:
    """Binary k-space sampling pattern: uniform stride plus central ACS block.

    bits:  (H, W) uint8 in {0, 1}
    accel: stride R along the phase-encode (width) axis
    acs_h, acs_w: size of the fully sampled central block
    """

    bits: np.ndarray
    accel: int
    acs_h: int
    acs_w: int

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def sampled_count(self) -> int:
        return int(self.bits.sum())

    def effective_accel(self) -> float:
        return self.bits.size / self.sampled_count

    def as_bool(self) -> np.ndarray:
        return self.bits.astype(bool)


@dataclass(frozen=True)
class NoiseSpec:
    """Complex Gaussian measurement-noise description (std in k-space units)."""

    std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("noise std must be non-negative")

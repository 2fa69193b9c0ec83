"""Synthetic ground truth: phantoms, smooth coil profiles, masks, acquisition.

The forward acquisition is y_c = M * FFT(S_c * x) + M * n_c with i.i.d.
complex Gaussian noise of total std sigma (std/sqrt(2) per component), added
only at sampled locations.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .core import NoiseSpec, SamplingMask, SensitivityMaps
from .errors import BadDims, ShapeMismatch
from .transform import fft2c_multicoil, ifft2c_multicoil
from .core import sens_expand

PHANTOM_KINDS = ("shepp_logan", "disks", "checker")

# Ellipse table (intensity, semi-axis a, semi-axis b, x0, y0, angle in degrees)
# for the standard low-contrast head phantom; summed values stay in [0, 1].
_HEAD_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


@dataclass(frozen=True)
class PhantomSpec:
    kind: str
    height: int
    width: int
    contrast_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise BadDims(f"unknown phantom kind {self.kind!r}")
        if self.height < 16 or self.width < 16:
            raise BadDims("phantom dimensions must be at least 16")
        if not 0 < self.contrast_scale <= 1:
            raise BadDims("contrast_scale must be in (0, 1]")


@dataclass(frozen=True)
class CoilProfileSpec:
    coils: int
    falloff: float       # Gaussian width of each coil lobe, pixels
    ring_radius: float   # distance of coil centers from the image center, pixels
    seed: int = 0

    def __post_init__(self):
        if self.coils < 1:
            raise BadDims("need at least one coil")
        if self.falloff <= 0 or self.ring_radius <= 0:
            raise BadDims("falloff and ring_radius must be positive")


@dataclass
class AcquisitionRecord:
    """One simulated slice: measured k-space plus everything that made it."""

    kspace: np.ndarray            # (C, H, W) complex, zero off-mask
    mask: SamplingMask
    truth: np.ndarray             # (H, W) complex ground-truth image
    maps_true: SensitivityMaps
    noise: NoiseSpec
    slice_id: str = "s000"
    group_id: str = "g00"
    maps_est: SensitivityMaps | None = field(default=None, repr=False)


def _grid(h: int, w: int):
    ys = np.linspace(-1.0, 1.0, h)
    xs = np.linspace(-1.0, 1.0, w)
    return np.meshgrid(ys, xs, indexing="ij")


def _head_magnitude(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Head phantom with seeded per-slice anatomy jitter.

    The two outer ellipses are fixed so the rim value stays exactly 1 and the
    background exactly 0; the inner features get small seeded perturbations so
    different slices have genuinely different anatomy.
    """
    yy, xx = _grid(h, w)
    img = np.zeros((h, w))
    for i, (amp, a, b, x0, y0, deg) in enumerate(_HEAD_ELLIPSES):
        if i >= 2:
            x0 = x0 + rng.uniform(-0.03, 0.03)
            y0 = y0 + rng.uniform(-0.03, 0.03)
            a = a * rng.uniform(0.85, 1.15)
            b = b * rng.uniform(0.85, 1.15)
            deg = deg + rng.uniform(-10.0, 10.0)
            amp = amp * rng.uniform(0.8, 1.2)
        phi = math.radians(deg)
        xr = (xx - x0) * math.cos(phi) + (yy - y0) * math.sin(phi)
        yr = -(xx - x0) * math.sin(phi) + (yy - y0) * math.cos(phi)
        img += amp * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return np.clip(img, 0.0, 1.0)


def disk_layout(spec: PhantomSpec) -> list[tuple[float, float, float, float]]:
    """Seeded non-overlapping disk placement: (row, col, radius, amplitude).

    Exposed so tests can compare rasterized pixel counts against the analytic
    union area.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    n_target = int(rng.integers(4, 8))
    rmin, rmax = 0.07 * min(h, w), 0.15 * min(h, w)
    placed: list[tuple[float, float, float, float]] = []
    for attempt in range(300):
        if len(placed) == n_target:
            break
        cy = rng.uniform(0.2 * h, 0.8 * h)
        cx = rng.uniform(0.2 * w, 0.8 * w)
        r = rng.uniform(rmin, rmax)
        if all(math.hypot(cy - py, cx - px) > r + pr + 2.0
               for py, px, pr, _ in placed):
            amp = 1.0 if not placed else float(rng.uniform(0.3, 0.95))
            placed.append((cy, cx, r, amp))
    return placed


def _disks_magnitude(spec: PhantomSpec) -> np.ndarray:
    h, w = spec.height, spec.width
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    img = np.zeros((h, w))
    for cy, cx, r, amp in disk_layout(spec):
        img[(rows - cy) ** 2 + (cols - cx) ** 2 <= r * r] = amp
    return img


def _checker_magnitude(spec: PhantomSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    cell = max(4, min(h, w) // int(rng.integers(4, 9)))
    sh, sw = rng.integers(0, cell, size=2)
    rows = (np.arange(h)[:, None] + sh) // cell
    cols = (np.arange(w)[None, :] + sw) // cell
    return np.where((rows + cols) % 2 == 0, 1.0, 0.25)


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    """Deterministic complex phantom with magnitude in [0, 1].

    A seeded linear phase ramp is applied so the data is genuinely complex
    while |x| keeps the piecewise-constant structure.
    """
    if spec.kind == "shepp_logan":
        mag = _head_magnitude(spec.height, spec.width,
                              np.random.default_rng(spec.seed))
    elif spec.kind == "disks":
        mag = _disks_magnitude(spec)
    else:
        mag = _checker_magnitude(spec)
    mag = mag * spec.contrast_scale

    # Phase draws come after the layout draws so the magnitude only depends on
    # (kind, dims, seed); a fresh generator keeps the ramp reproducible.
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x9E3779B9]))
    sy, sx = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
    phi0 = rng.uniform(0, 2 * np.pi)
    yy, xx = _grid(spec.height, spec.width)
    return mag * np.exp(1j * (sy * yy + sx * xx + phi0))


def make_coil_maps(spec: CoilProfileSpec, h: int, w: int) -> SensitivityMaps:
    """Gaussian coil lobes on a ring around the FOV, unit-RSS on full support."""
    if h < 1 or w < 1:
        raise BadDims("image dimensions must be positive")
    rng = np.random.default_rng(spec.seed)
    offset = rng.uniform(0.0, 1.0)
    slopes = rng.uniform(0.25 * np.pi, 0.75 * np.pi, size=spec.coils)
    phases = rng.uniform(0.0, 2 * np.pi, size=spec.coils)

    thetas = 2 * np.pi * (np.arange(spec.coils) + offset) / spec.coils
    cy = (h - 1) / 2 + spec.ring_radius * np.sin(thetas)
    cx = (w - 1) / 2 + spec.ring_radius * np.cos(thetas)

    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    raw = np.empty((spec.coils, h, w), dtype=np.complex128)
    for c in range(spec.coils):
        d2 = (rows - cy[c]) ** 2 + (cols - cx[c]) ** 2
        mag = np.exp(-d2 / (2 * spec.falloff ** 2))
        radial = ((cols - (w - 1) / 2) * np.cos(thetas[c])
                  + (rows - (h - 1) / 2) * np.sin(thetas[c])) / max(h, w)
        raw[c] = mag * np.exp(1j * (slopes[c] * radial + phases[c]))

    rss = np.sqrt((np.abs(raw) ** 2).sum(axis=0))
    data = raw / rss[None]
    return SensitivityMaps(data=data, support=np.ones((h, w), dtype=bool))


def make_mask(h: int, w: int, accel: int, acs_h: int, acs_w: int) -> SamplingMask:
    """Uniform stride-R columns along the width axis plus a central ACS block."""
    if h < 1 or w < 1:
        raise BadDims("mask dimensions must be positive")
    if not 1 <= accel <= w:
        raise BadDims(f"acceleration {accel} out of range for width {w}")
    if not (0 <= acs_h <= h and 0 <= acs_w <= w):
        raise BadDims("ACS block exceeds mask dimensions")
    bits = np.zeros((h, w), dtype=np.uint8)
    bits[:, 0::accel] = 1
    r0 = h // 2 - acs_h // 2
    c0 = w // 2 - acs_w // 2
    bits[r0:r0 + acs_h, c0:c0 + acs_w] = 1
    return SamplingMask(bits=bits, accel=accel, acs_h=acs_h, acs_w=acs_w)


def acs_bounds(mask: SamplingMask) -> tuple[int, int, int, int]:
    """(row0, row1, col0, col1) half-open bounds of the central ACS block."""
    r0 = mask.height // 2 - mask.acs_h // 2
    c0 = mask.width // 2 - mask.acs_w // 2
    return r0, r0 + mask.acs_h, c0, c0 + mask.acs_w


def simulate_acquisition(truth, maps: SensitivityMaps, mask: SamplingMask,
                         noise: NoiseSpec | None = None,
                         slice_id: str = "s000",
                         group_id: str = "g00") -> AcquisitionRecord:
    """Acquire y_c = M * FFT(S_c x) + M * n_c for one slice."""
    noise = noise or NoiseSpec()
    truth = np.asarray(truth, dtype=np.complex128)
    if truth.shape != (maps.height, maps.width):
        raise ShapeMismatch(f"truth {truth.shape} vs maps {(maps.height, maps.width)}")
    if mask.bits.shape != truth.shape:
        raise ShapeMismatch(f"mask {mask.bits.shape} vs image {truth.shape}")
    k = fft2c_multicoil(sens_expand(truth, maps))
    if noise.std > 0:
        rng = np.random.default_rng(noise.seed)
        parts = rng.standard_normal((2,) + k.shape)
        k = k + (noise.std / np.sqrt(2.0)) * (parts[0] + 1j * parts[1])
    k = np.where(mask.as_bool()[None], k, 0.0 + 0.0j)
    return AcquisitionRecord(kspace=k, mask=mask, truth=truth, maps_true=maps,
                             noise=noise, slice_id=slice_id, group_id=group_id)


def simulate_from_reference(k_full, mask: SamplingMask) -> np.ndarray:
    """Retrospective undersampling: element-wise product with the mask."""
    k = np.asarray(k_full, dtype=np.complex128)
    if k.shape[-2:] != mask.bits.shape:
        raise ShapeMismatch(f"k-space {k.shape} vs mask {mask.bits.shape}")
    return np.where(mask.as_bool()[None] if k.ndim == 3 else mask.as_bool(),
                    k, 0.0 + 0.0j)


def forward_model(x, maps: SensitivityMaps, mask: SamplingMask) -> np.ndarray:
    """A(x) = M * FFT(S x): image -> masked multi-coil k-space."""
    return np.where(mask.as_bool()[None],
                    fft2c_multicoil(sens_expand(x, maps)), 0.0 + 0.0j)


def adjoint_model(y, maps: SensitivityMaps, mask: SamplingMask) -> np.ndarray:
    """A*(y) = sum_c conj(S_c) IFFT(M * y_c): plain conjugate sum, unnormalized."""
    y = np.asarray(y, dtype=np.complex128)
    imgs = ifft2c_multicoil(np.where(mask.as_bool()[None], y, 0.0 + 0.0j))
    return (np.conj(maps.data) * imgs).sum(axis=0)


def derive_slice_seed(seed: int, tag: str) -> int:
    """Stable per-slice seed: low 64 bits of sha256(seed, tag)."""
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")

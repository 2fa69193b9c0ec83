"""Classical coil-sensitivity estimation from the fully sampled ACS block.

Low-resolution coil images from the (apodized) central k-space window are
divided by their RSS; pixels with negligible signal are excluded so noise is
never divided by noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SamplingMask, SensitivityMaps, as_coil_stack
from .errors import AcsNotSampled, BadDims
from .transform import ifft2c_multicoil

SUPPORT_REL_THRESHOLD = 1e-3


@dataclass(frozen=True)
class AcsWindowSpec:
    acs_h: int
    acs_w: int
    apod: str = "hann"  # "hann" | "none"

    def __post_init__(self):
        if self.acs_h < 1 or self.acs_w < 1:
            raise BadDims("ACS window must be at least 1x1")
        if self.apod not in ("hann", "none"):
            raise BadDims(f"unknown apodization {self.apod!r}")


def _acs_window(h: int, w: int, spec: AcsWindowSpec) -> np.ndarray:
    if spec.acs_h > h or spec.acs_w > w:
        raise BadDims(f"ACS window {(spec.acs_h, spec.acs_w)} exceeds image {(h, w)}")
    if spec.apod == "hann":
        block = np.outer(np.hanning(spec.acs_h), np.hanning(spec.acs_w))
    else:
        block = np.ones((spec.acs_h, spec.acs_w))
    win = np.zeros((h, w))
    r0 = h // 2 - spec.acs_h // 2
    c0 = w // 2 - spec.acs_w // 2
    win[r0:r0 + spec.acs_h, c0:c0 + spec.acs_w] = block
    return win


def estimate_csm_acs(k, spec: AcsWindowSpec,
                     mask: SamplingMask | None = None) -> SensitivityMaps:
    """Estimate unit-RSS sensitivity maps from the central ACS region.

    When a mask is supplied, every entry of the ACS block must be sampled;
    otherwise AcsNotSampled is raised.
    """
    k = as_coil_stack(k)
    _, h, w = k.shape
    if mask is not None:
        r0 = h // 2 - spec.acs_h // 2
        c0 = w // 2 - spec.acs_w // 2
        if not mask.bits[r0:r0 + spec.acs_h, c0:c0 + spec.acs_w].all():
            raise AcsNotSampled(
                f"ACS block {(spec.acs_h, spec.acs_w)} not fully sampled")
    win = _acs_window(h, w, spec)
    lowres = ifft2c_multicoil(k * win[None])
    rss = np.sqrt((np.abs(lowres) ** 2).sum(axis=0))
    peak = rss.max()
    support = rss > SUPPORT_REL_THRESHOLD * peak if peak > 0 else np.zeros_like(rss, bool)
    safe = np.where(support, rss, 1.0)
    data = np.where(support[None], lowres / safe[None], 0.0 + 0.0j)
    return SensitivityMaps(data=data, support=support)

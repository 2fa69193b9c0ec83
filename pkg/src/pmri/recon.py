"""Non-learned reconstruction paths and the composite k-space operator.

zero_filled_recon and sense_reconstruct are the classical baselines;
compose_kspace fills unmeasured k-space entries with a weighted re-projection
and is also the data-consistency stage of the learned pipeline.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (SamplingMask, SensitivityMaps, as_coil_stack, rss_combine,
                   sens_combine, sens_expand)
from .errors import IllConditioned, ShapeMismatch
from .transform import fft2c_multicoil, ifft2c_multicoil

CONDITION_WARN_THRESHOLD = 1e6


@dataclass(frozen=True)
class SenseSolveReport:
    """Conditioning diagnostics of the per-pixel-group unfolding solves."""

    condition_numbers: np.ndarray  # (H, n_groups), 1.0 for empty groups
    max_condition: float
    pixels_unfolded: int


def zero_filled_recon(k, maps: SensitivityMaps | None = None) -> np.ndarray:
    """RSS combine of the per-coil inverse FFT; maps accepted only for symmetry."""
    return rss_combine(ifft2c_multicoil(as_coil_stack(k)))


def _fold_matrix(w: int, accel: int) -> np.ndarray:
    """Image-domain response T of stride-R column sampling, computed by
    pushing the identity through the exact centered/unitary transform chain.

    T[c, j] is the contribution of true column j to aliased column c.
    """
    eye = np.eye(w, dtype=np.complex128)
    spec = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(eye, axes=0),
                                      axis=0, norm="ortho"), axes=0)
    spec[np.arange(w) % accel != 0] = 0
    return np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(spec, axes=0),
                                       axis=0, norm="ortho"), axes=0)


def sense_reconstruct(k, maps: SensitivityMaps, mask: SamplingMask,
                      reg: float = 0.0) -> tuple[np.ndarray, SenseSolveReport]:
    """Unfold uniform stride-R aliasing by per-pixel-group least squares.

    Only the pure stride columns feed the unfolding model; extra ACS samples
    contribute through calibration alone.  Groups couple columns that are
    congruent modulo ceil(W/R); a trailing partial group simply has fewer
    unknowns.  Tikhonov weight ``reg`` stabilizes noisy data (0 = exact).
    """
    k = as_coil_stack(k)
    n_coils, h, w = k.shape
    if maps.data.shape != k.shape:
        raise ShapeMismatch(f"maps {maps.data.shape} vs k-space {k.shape}")
    if mask.bits.shape != (h, w):
        raise ShapeMismatch(f"mask {mask.bits.shape} vs k-space {(h, w)}")
    accel = mask.accel

    stride_cols = np.arange(w) % accel == 0
    z = ifft2c_multicoil(np.where(stride_cols[None, None, :], k, 0.0 + 0.0j))
    fold = _fold_matrix(w, accel)

    group_span = -(-w // accel)  # ceil(w / accel)
    out = np.zeros((h, w), dtype=np.complex128)
    conds = np.ones((h, group_span))
    unfolded = 0
    for c0 in range(group_span):
        cols = np.arange(c0, w, group_span)
        m = cols.size
        # A[r, coil, j] = T[c0, cols_j] * S[coil, r, cols_j]; b[r, coil] = z[coil, r, c0]
        a = fold[c0, cols][None, None, :] * maps.data[:, :, cols].transpose(1, 0, 2)
        b = z[:, :, c0].T

        sv = np.linalg.svd(a, compute_uv=False)
        nonzero = sv[:, 0] > 0
        conds[nonzero, c0] = sv[nonzero, 0] / np.maximum(sv[nonzero, -1],
                                                         np.finfo(float).tiny)
        unfolded += int(nonzero.sum()) * m

        if reg > 0:
            ah = a.conj().transpose(0, 2, 1)
            lhs = ah @ a + reg * np.eye(m)
            sol = np.linalg.solve(lhs, (ah @ b[..., None]))[..., 0]
        else:
            sol = (np.linalg.pinv(a) @ b[..., None])[..., 0]
        out[:, cols] = sol

    max_cond = float(conds.max())
    if max_cond > CONDITION_WARN_THRESHOLD:
        warnings.warn(f"unfolding max condition number {max_cond:.3g}",
                      IllConditioned)
    return out, SenseSolveReport(condition_numbers=conds,
                                 max_condition=max_cond,
                                 pixels_unfolded=unfolded)


def _reference_image(coil_imgs: np.ndarray, maps: SensitivityMaps,
                     combine_mode: str) -> np.ndarray:
    if combine_mode == "pinv":
        return sens_combine(coil_imgs, maps)
    if combine_mode == "rss_magnitude":
        # Literal root-sum-of-squares reading: RSS magnitude, phase borrowed
        # from the conjugate-weighted combine.
        combined = sens_combine(coil_imgs, maps)
        phase = np.where(np.abs(combined) > 0, combined / np.abs(np.where(
            np.abs(combined) > 0, combined, 1.0)), 0.0 + 0.0j)
        return rss_combine(coil_imgs) * phase
    raise ValueError(f"unknown combine_mode {combine_mode!r}")


def compose_kspace(k, mask: SamplingMask, maps: SensitivityMaps, lam: float,
                   refined=None, combine_mode: str = "pinv") -> np.ndarray:
    """Merge measured k-space with weighted re-projected estimates.

    Measured entries pass through bit-exactly; unmeasured entries become
    lam * FFT(S * r) where r is the supplied refined image or, by default,
    the combined zero-filled reconstruction of k itself.
    """
    k = as_coil_stack(k)
    if maps.data.shape != k.shape:
        raise ShapeMismatch(f"maps {maps.data.shape} vs k-space {k.shape}")
    if mask.bits.shape != k.shape[1:]:
        raise ShapeMismatch(f"mask {mask.bits.shape} vs k-space {k.shape}")
    if not np.isfinite(lam):
        raise ValueError("lambda must be finite")
    if refined is None:
        r = _reference_image(ifft2c_multicoil(k), maps, combine_mode)
    else:
        r = np.asarray(refined, dtype=np.complex128)
        if r.shape != k.shape[1:]:
            raise ShapeMismatch(f"refined image {r.shape} vs k-space {k.shape}")
    fill = fft2c_multicoil(sens_expand(r, maps))
    return np.where(mask.as_bool()[None], k, lam * fill)


def initial_recon(kplus, maps: SensitivityMaps) -> np.ndarray:
    """Combined image of the composite k-space: S+ applied to IFFT(k+)."""
    return sens_combine(ifft2c_multicoil(as_coil_stack(kplus)), maps)

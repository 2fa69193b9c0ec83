"""The two-module reconstruction pipeline and its dual-domain loss.

Stages: a map-estimation network turns the zero-filled coil images of the
measured k-space into unit-RSS sensitivity maps; the composite k-space fills
unmeasured entries with a weighted re-projection; the combined initial image
is refined by a residual denoiser network.  The loss mixes image-domain MSE
with a k-space MSE evaluated at the sampled locations only.

Every stage has a matching hand-written adjoint so the gradient of the total
loss with respect to every parameter (including the scalar consistency weight)
is exact.  Complex cotangents use the dL/dRe + i*dL/dIm packing, under which
the adjoint of the unitary FFT is the inverse FFT and the adjoint of
multiplication by b is multiplication by conj(b).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import COMBINE_EPS, SamplingMask, SensitivityMaps
from ..errors import ShapeMismatch
from ..transform import fft2c_multicoil, ifft2c_multicoil
from .params import NetSpec, ParamStore, net_specs_for_scale
from .unet import UNet

NET_SUPPORT_REL_THRESHOLD = 1e-3

LAMBDA_NAME = "lambda_dc"


def complex_to_channels(z: np.ndarray) -> np.ndarray:
    """(C, H, W) complex -> (2C, H, W) float, real/imag interleaved per coil."""
    c, h, w = z.shape
    out = np.empty((2 * c, h, w))
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def channels_to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of complex_to_channels (also its adjoint under the packing)."""
    return x[0::2] + 1j * x[1::2]


def _rss_normalize(raw: np.ndarray):
    """Unit-RSS projection of raw complex maps; returns (maps, support, rss)."""
    rss = np.sqrt((raw.real ** 2 + raw.imag ** 2).sum(axis=0))
    peak = rss.max()
    support = rss > NET_SUPPORT_REL_THRESHOLD * peak if peak > 0 else \
        np.zeros(rss.shape, bool)
    safe = np.where(support, rss, 1.0)
    maps = np.where(support[None], raw / safe[None], 0.0 + 0.0j)
    return maps, support, safe


def _rss_normalize_backward(cot_maps: np.ndarray, maps: np.ndarray,
                            support: np.ndarray, safe_rss: np.ndarray) -> np.ndarray:
    """Adjoint of v -> v/|v| (per-pixel L2 over the 2C real components)."""
    inner = (cot_maps.real * maps.real + cot_maps.imag * maps.imag).sum(axis=0)
    cot_raw = (cot_maps - maps * inner[None]) / safe_rss[None]
    return np.where(support[None], cot_raw, 0.0 + 0.0j)


def _combine_forward(stack: np.ndarray, maps: np.ndarray, support: np.ndarray):
    """sens_combine with cached intermediates for the backward pass."""
    num = (np.conj(maps) * stack).sum(axis=0)
    den = np.maximum((np.abs(maps) ** 2).sum(axis=0), COMBINE_EPS)
    out = np.where(support, num / den, 0.0 + 0.0j)
    return out, num, den


def _combine_backward(cot_out, num, den, support, stack, maps):
    """Returns (cot_stack, cot_maps) of the normalized conjugate combine."""
    cot_out = np.where(support, cot_out, 0.0 + 0.0j)
    cot_num = cot_out / den
    cot_stack = cot_num[None] * maps
    cot_maps = np.conj(cot_num)[None] * stack
    d_den = -np.real(cot_out * np.conj(num)) / den ** 2
    cot_maps = cot_maps + 2.0 * maps * d_den[None]
    return cot_stack, cot_maps


@dataclass
class PipelineCache:
    """Intermediates of one forward pass, consumed by the backward pass."""

    k: np.ndarray
    bits: np.ndarray
    imgs: np.ndarray
    raw_maps: np.ndarray | None
    maps: np.ndarray
    support: np.ndarray
    safe_rss: np.ndarray | None
    r0: np.ndarray
    r0_num: np.ndarray
    r0_den: np.ndarray
    fill: np.ndarray
    lam: float
    imgs2: np.ndarray
    x0: np.ndarray
    x0_num: np.ndarray
    x0_den: np.ndarray
    xhat: np.ndarray


class ReconPipeline:
    """Map-estimation net + composite k-space + residual denoiser."""

    def __init__(self, store: ParamStore, csm_spec: NetSpec, den_spec: NetSpec,
                 csm_input: str = "image"):
        if csm_input not in ("image", "kspace"):
            raise ValueError(f"unknown csm_input {csm_input!r}")
        self.store = store
        self.csm_spec = csm_spec
        self.den_spec = den_spec
        self.csm_input = csm_input
        self.csm_net = UNet(csm_spec, store, "csm")
        self.den_net = UNet(den_spec, store, "den")
        store.add(LAMBDA_NAME, (), init="one")

    # -- module forwards -------------------------------------------------

    def csm_forward(self, k: np.ndarray):
        """Estimate unit-RSS maps from measured k-space."""
        if k.shape[0] * 2 != self.csm_spec.in_channels:
            raise ShapeMismatch(
                f"{k.shape[0]} coils but net expects {self.csm_spec.in_channels // 2}")
        imgs = ifft2c_multicoil(k)
        net_in = complex_to_channels(imgs if self.csm_input == "image" else k)
        raw = channels_to_complex(self.csm_net.forward(net_in))
        maps, support, safe = _rss_normalize(raw)
        return maps, support, safe, raw, imgs

    def denoiser_forward(self, x0: np.ndarray) -> np.ndarray:
        """Residual refinement: x0 + net(x0)."""
        delta = channels_to_complex(
            self.den_net.forward(complex_to_channels(x0[None])))
        return x0 + delta[0]

    # -- full pipeline ----------------------------------------------------

    def forward(self, k: np.ndarray, mask: SamplingMask,
                maps_override: SensitivityMaps | None = None
                ) -> tuple[np.ndarray, SensitivityMaps, PipelineCache]:
        """Full reconstruction; maps_override freezes the map module (the
        estimation network is bypassed and receives no gradient)."""
        k = np.asarray(k, dtype=np.complex128)
        bits = mask.as_bool()
        lam = float(self.store.view(LAMBDA_NAME))

        if maps_override is not None:
            maps, support, safe, raw = (maps_override.data,
                                        maps_override.support, None, None)
            imgs = ifft2c_multicoil(k)
        else:
            maps, support, safe, raw, imgs = self.csm_forward(k)
        r0, r0_num, r0_den = _combine_forward(imgs, maps, support)
        fill = fft2c_multicoil(maps * r0[None])
        kplus = np.where(bits[None], k, lam * fill)
        imgs2 = ifft2c_multicoil(kplus)
        x0, x0_num, x0_den = _combine_forward(imgs2, maps, support)
        xhat = self.denoiser_forward(x0)

        cache = PipelineCache(k=k, bits=bits, imgs=imgs, raw_maps=raw,
                              maps=maps, support=support, safe_rss=safe,
                              r0=r0, r0_num=r0_num, r0_den=r0_den, fill=fill,
                              lam=lam, imgs2=imgs2, x0=x0, x0_num=x0_num,
                              x0_den=x0_den, xhat=xhat)
        return xhat, SensitivityMaps(data=maps, support=support), cache

    def backward(self, cache: PipelineCache, cot_xhat: np.ndarray,
                 cot_maps: np.ndarray) -> None:
        """Accumulate dL/d(params) given loss cotangents of xhat and maps."""
        # residual denoiser: xhat = x0 + net(x0)
        g_net_in = self.den_net.backward(complex_to_channels(cot_xhat[None]))
        cot_x0 = cot_xhat + channels_to_complex(g_net_in)[0]

        # x0 = combine(imgs2, maps)
        cot_imgs2, cm = _combine_backward(cot_x0, cache.x0_num, cache.x0_den,
                                          cache.support, cache.imgs2, cache.maps)
        cot_maps = cot_maps + cm

        # imgs2 = IFFT(kplus); kplus = where(bits, k, lam*fill)
        cot_kplus = fft2c_multicoil(cot_imgs2)
        unmeasured = ~cache.bits
        lam_grad = float(np.real(cot_kplus * np.conj(cache.fill))[:, unmeasured].sum())
        self.store.grad_view(LAMBDA_NAME)[...] += lam_grad
        cot_fill = np.where(unmeasured[None], cache.lam * cot_kplus, 0.0 + 0.0j)

        # fill = FFT(maps * r0)
        cot_u = ifft2c_multicoil(cot_fill)
        cot_r0 = (cot_u * np.conj(cache.maps)).sum(axis=0)
        cot_maps = cot_maps + cot_u * np.conj(cache.r0)[None]

        # r0 = combine(imgs, maps); imgs comes from data, no parameter path
        _, cm = _combine_backward(cot_r0, cache.r0_num, cache.r0_den,
                                  cache.support, cache.imgs, cache.maps)
        cot_maps = cot_maps + cm

        if cache.raw_maps is None:
            return  # maps were frozen; nothing flows into the estimation net

        # unit-RSS projection and the map network
        cot_raw = _rss_normalize_backward(cot_maps, cache.maps, cache.support,
                                          cache.safe_rss)
        self.csm_net.backward(complex_to_channels(cot_raw))


@dataclass(frozen=True)
class LossValues:
    total: float
    image: float
    kspace: float


@dataclass(frozen=True)
class LossWeights:
    w_img: float = 1.5
    w_ksp: float = 0.5


def loss_total(xhat, x_gt, maps: SensitivityMaps, y_gt, mask: SamplingMask,
               weights: LossWeights = LossWeights()):
    """Dual-domain loss and its cotangents with respect to xhat and the maps.

    image term: mean over pixels of |xhat - x_gt|^2.
    k-space term: mean over the sampled entries of |FFT(S xhat) - y|^2.
    total = w_img * image + w_ksp * kspace.

    Returns (LossValues, cot_xhat, cot_maps).
    """
    xhat = np.asarray(xhat, dtype=np.complex128)
    x_gt = np.asarray(x_gt, dtype=np.complex128)
    y_gt = np.asarray(y_gt, dtype=np.complex128)
    if xhat.shape != x_gt.shape:
        raise ShapeMismatch(f"xhat {xhat.shape} vs x_gt {x_gt.shape}")
    if y_gt.shape != maps.data.shape:
        raise ShapeMismatch(f"y_gt {y_gt.shape} vs maps {maps.data.shape}")
    if mask.bits.shape != xhat.shape:
        raise ShapeMismatch(f"mask {mask.bits.shape} vs image {xhat.shape}")

    n_img = xhat.size
    err = xhat - x_gt
    l_img = float((err.real ** 2 + err.imag ** 2).sum() / n_img)

    bits = mask.as_bool()
    pred = fft2c_multicoil(maps.data * xhat[None])
    diff = np.where(bits[None], pred - y_gt, 0.0 + 0.0j)
    n_ksp = int(bits.sum()) * maps.coils
    l_ksp = float((diff.real ** 2 + diff.imag ** 2).sum() / n_ksp)

    total = weights.w_img * l_img + weights.w_ksp * l_ksp

    cot_xhat = weights.w_img * 2.0 * err / n_img
    cot_pred = weights.w_ksp * 2.0 * diff / n_ksp
    cot_u = ifft2c_multicoil(cot_pred)
    cot_xhat = cot_xhat + (cot_u * np.conj(maps.data)).sum(axis=0)
    cot_maps = cot_u * np.conj(xhat)[None]

    return LossValues(total=total, image=l_img, kspace=l_ksp), cot_xhat, cot_maps


def pipeline_loss_and_grad(pipe: ReconPipeline, k, mask: SamplingMask,
                           x_gt, weights: LossWeights = LossWeights()):
    """One end-to-end forward/backward; gradients accumulate into the store."""
    xhat, maps, cache = pipe.forward(k, mask)
    values, cot_xhat, cot_maps = loss_total(xhat, x_gt, maps, cache.k, mask,
                                            weights)
    pipe.backward(cache, cot_xhat, cot_maps)
    return values, xhat


def build_pipeline(coils: int, scale: str = "desk", seed: int = 0,
                   csm_input: str = "image") -> ReconPipeline:
    """Fresh pipeline with Glorot-initialized weights and lambda = 1."""
    store = ParamStore()
    csm_spec, den_spec = net_specs_for_scale(coils, scale)
    pipe = ReconPipeline(store, csm_spec, den_spec, csm_input=csm_input)
    store.allocate(np.random.default_rng(seed))
    return pipe

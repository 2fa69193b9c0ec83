"""Encoder-decoder network with skip connections, built from explicit layers.

Per encoder level: 3x3 conv + ReLU, then 2x average pooling.  The bottleneck
is one conv + ReLU.  Per decoder level: nearest-neighbor upsampling, skip
concatenation (when enabled), 3x3 conv + ReLU.  A final 3x3 conv maps to the
output channels (optionally zero-initialized for residual-identity starts).
"""
from __future__ import annotations

import numpy as np

from .layers import (Conv3, avgpool2_backward, avgpool2_forward,
                     relu_backward, relu_forward, upsample2_backward,
                     upsample2_forward)
from .params import NetSpec, ParamStore


class UNet:
    def __init__(self, spec: NetSpec, store: ParamStore, prefix: str):
        self.spec = spec
        self.store = store
        self.prefix = prefix
        ch = spec.enc_channels
        self.enc = []
        c_prev = spec.in_channels
        for i, c in enumerate(ch):
            self.enc.append(Conv3(store, f"{prefix}.enc{i}", c_prev, c))
            c_prev = c
        self.bottleneck = Conv3(store, f"{prefix}.mid", ch[-1], ch[-1])
        self.dec = []
        c_below = ch[-1]
        for i in reversed(range(len(ch))):
            c_in = c_below + (ch[i] if spec.skip_connections else 0)
            c_out = ch[i - 1] if i > 0 else ch[0]
            self.dec.append(Conv3(store, f"{prefix}.dec{i}", c_in, c_out))
            c_below = c_out
        self.head = Conv3(store, f"{prefix}.head", ch[0], spec.out_channels,
                          zero_init=spec.zero_init_head)
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.spec.check_dims(*x.shape[1:])
        use_skips = self.spec.skip_connections
        skips, enc_masks = [], []
        h = x
        for conv in self.enc:
            h, mask = relu_forward(conv.forward(h))
            skips.append(h)
            enc_masks.append(mask)
            h = avgpool2_forward(h)
        h, mid_mask = relu_forward(self.bottleneck.forward(h))
        dec_masks, up_channels = [], []
        for conv, skip in zip(self.dec, reversed(skips)):
            h = upsample2_forward(h)
            up_channels.append(h.shape[0])
            if use_skips:
                h = np.concatenate([h, skip], axis=0)
            h, mask = relu_forward(conv.forward(h))
            dec_masks.append(mask)
        out = self.head.forward(h)
        self._cache = (enc_masks, mid_mask, dec_masks, up_channels)
        return out

    def backward(self, gy: np.ndarray) -> np.ndarray:
        """Accumulates parameter gradients and returns dL/d(input)."""
        enc_masks, mid_mask, dec_masks, up_channels = self._cache
        use_skips = self.spec.skip_connections
        g = self.head.backward(gy)
        skip_grads = []
        for conv, mask, c_up in zip(reversed(self.dec), reversed(dec_masks),
                                    reversed(up_channels)):
            g = conv.backward(relu_backward(g, mask))
            skip_grads.append(g[c_up:] if use_skips else None)
            g = upsample2_backward(g[:c_up])
        g = self.bottleneck.backward(relu_backward(g, mid_mask))
        # skip_grads was collected shallowest-first; the encoder unwinds
        # deepest-first, so walk it in reverse
        for conv, mask, gskip in zip(reversed(self.enc), reversed(enc_masks),
                                     reversed(skip_grads)):
            g = avgpool2_backward(g)
            if gskip is not None:
                g = g + gskip
            g = conv.backward(relu_backward(g, mask))
        self._cache = None
        return g

"""Network primitives with explicit forward/backward passes.

Tensors are (channels, H, W) float64.  Convolutions are 3x3, stride 1, zero
padded ('same'); the backward pass reuses the same im2col machinery with a
flipped, transposed kernel, so everything reduces to BLAS matmuls.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .params import ParamStore


def im2col3(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (H*W, C*9) patch matrix for a 3x3 same convolution."""
    c, h, w = x.shape
    padded = np.zeros((c, h + 2, w + 2))
    padded[:, 1:-1, 1:-1] = x
    win = sliding_window_view(padded, (3, 3), axis=(1, 2))  # (C, H, W, 3, 3)
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, c * 9)


def conv3_apply(x: np.ndarray, weight: np.ndarray, bias) -> tuple[np.ndarray, np.ndarray]:
    """Returns (output, patch matrix); the patches are reused by backward."""
    c_out = weight.shape[0]
    h, w = x.shape[1:]
    cols = im2col3(x)
    out = cols @ weight.reshape(c_out, -1).T
    if bias is not None:
        out += bias
    return out.T.reshape(c_out, h, w), cols


class Conv3:
    """3x3 same convolution with parameters registered in a ParamStore."""

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 zero_init: bool = False):
        self.store = store
        self.name = name
        self.c_in = c_in
        self.c_out = c_out
        store.add(f"{name}.w", (c_out, c_in, 3, 3),
                  init="zeros" if zero_init else "glorot")
        store.add(f"{name}.b", (c_out,), init="zeros")
        self._cols: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        w = self.store.view(f"{self.name}.w")
        b = self.store.view(f"{self.name}.b")
        out, self._cols = conv3_apply(x, w, b)
        return out

    def backward(self, gy: np.ndarray) -> np.ndarray:
        w = self.store.view(f"{self.name}.w")
        gy_mat = gy.reshape(self.c_out, -1).T                    # (H*W, C_out)
        self.store.grad_view(f"{self.name}.w")[...] += (
            gy_mat.T @ self._cols).reshape(w.shape)
        self.store.grad_view(f"{self.name}.b")[...] += gy_mat.sum(axis=0)
        # dL/dx is a same-conv of gy with the flipped kernel, channels swapped
        w_t = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        gx, _ = conv3_apply(gy, np.ascontiguousarray(w_t), None)
        self._cols = None
        return gx


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(gy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, gy, 0.0)


def avgpool2_forward(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def avgpool2_backward(gy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(gy, 2, axis=1), 2, axis=2) / 4.0


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(gy: np.ndarray) -> np.ndarray:
    c, h, w = gy.shape
    return gy.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))

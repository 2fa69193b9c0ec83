"""Flat parameter storage and the versioned checkpoint format.

All trainable quantities (both networks plus the scalar data-consistency
weight) live in one float64 vector with named views, so the optimizer,
finite-difference checks, and serialization all see a single array.

Checkpoint layout ``NPRM1\\0``: u32 meta length, canonical JSON meta (arch,
hashes), u64 count, float64 payload.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadFile, DimsNotDivisible

PARAMS_MAGIC = b"NPRM1\x00"


@dataclass(frozen=True)
class NetSpec:
    """Encoder-decoder shape description.

    enc_channels gives one entry per downsampling block; inputs must be
    divisible by 2**depth.  Only 3x3 kernels are implemented.
    """

    in_channels: int
    out_channels: int
    enc_channels: tuple
    kernel: int = 3
    skip_connections: bool = True
    zero_init_head: bool = False

    def __post_init__(self):
        if self.kernel != 3:
            raise ValueError("only 3x3 kernels are supported")
        if not self.enc_channels:
            raise ValueError("need at least one encoder block")

    @property
    def depth(self) -> int:
        return len(self.enc_channels)

    def check_dims(self, h: int, w: int) -> None:
        div = 2 ** self.depth
        if h % div or w % div:
            raise DimsNotDivisible(
                f"input {h}x{w} not divisible by 2**{self.depth}")

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels,
                "out_channels": self.out_channels,
                "enc_channels": list(self.enc_channels),
                "kernel": self.kernel,
                "skip_connections": self.skip_connections,
                "zero_init_head": self.zero_init_head}

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        return cls(in_channels=d["in_channels"], out_channels=d["out_channels"],
                   enc_channels=tuple(d["enc_channels"]), kernel=d["kernel"],
                   skip_connections=d.get("skip_connections", True),
                   zero_init_head=d["zero_init_head"])


DESK_CHANNELS = (16, 32, 64, 128)
PAPER_CSM_CHANNELS = (64, 128, 256, 512)
PAPER_DENOISER_CHANNELS = (32, 64, 128, 256)


def net_specs_for_scale(coils: int, scale: str) -> tuple[NetSpec, NetSpec]:
    """(csm_spec, denoiser_spec) for a coil count at 'desk' or 'paper' scale."""
    if scale == "desk":
        csm_ch, den_ch = DESK_CHANNELS, DESK_CHANNELS
    elif scale == "paper":
        csm_ch, den_ch = PAPER_CSM_CHANNELS, PAPER_DENOISER_CHANNELS
    else:
        raise ValueError(f"unknown scale {scale!r}")
    csm = NetSpec(in_channels=2 * coils, out_channels=2 * coils,
                  enc_channels=csm_ch)
    den = NetSpec(in_channels=2, out_channels=2, enc_channels=den_ch,
                  zero_init_head=True)
    return csm, den


class ParamStore:
    """Named float64 parameter blocks backed by one flat vector + gradient."""

    def __init__(self):
        self._entries: dict[str, tuple[int, tuple, str]] = {}
        self._total = 0
        self.data: np.ndarray | None = None
        self.grad: np.ndarray | None = None

    def add(self, name: str, shape: tuple, init: str = "glorot") -> None:
        if self.data is not None:
            raise RuntimeError("store already allocated")
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._entries[name] = (self._total, tuple(shape), init)
        self._total += int(np.prod(shape)) if shape else 1

    def allocate(self, rng: np.random.Generator) -> None:
        self.data = np.zeros(self._total)
        self.grad = np.zeros(self._total)
        for name, (off, shape, init) in self._entries.items():
            size = int(np.prod(shape)) if shape else 1
            if init == "glorot":
                # for conv weights (c_out, c_in, k, k) both fans include the
                # kernel extent; degenerates sensibly for other shapes
                fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else 1
                fan_out = shape[0] * (int(np.prod(shape[2:]))
                                      if len(shape) > 2 else 1)
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                self.data[off:off + size] = rng.uniform(-bound, bound, size)
            elif init == "zeros":
                pass
            elif init == "one":
                self.data[off:off + size] = 1.0
            else:
                raise ValueError(f"unknown init {init!r}")

    @property
    def size(self) -> int:
        return self._total

    @property
    def names(self) -> list[str]:
        return list(self._entries)

    def offset_of(self, name: str) -> tuple[int, int]:
        off, shape, _ = self._entries[name]
        return off, int(np.prod(shape)) if shape else 1

    def view(self, name: str) -> np.ndarray:
        off, shape, _ = self._entries[name]
        size = int(np.prod(shape)) if shape else 1
        return self.data[off:off + size].reshape(shape)

    def grad_view(self, name: str) -> np.ndarray:
        off, shape, _ = self._entries[name]
        size = int(np.prod(shape)) if shape else 1
        return self.grad[off:off + size].reshape(shape)

    def zero_grad(self) -> None:
        self.grad[:] = 0.0


def arch_hash(meta_arch: dict) -> str:
    return hashlib.sha256(
        json.dumps(meta_arch, sort_keys=True).encode()).hexdigest()


def save_params(path, store: ParamStore, meta: dict) -> Path:
    path = Path(path)
    meta = dict(meta)
    meta.setdefault("format_version", 1)
    if "arch" in meta:
        meta["arch_hash"] = arch_hash(meta["arch"])
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", store.data.size))
        fh.write(store.data.astype("<f8").tobytes())
    return path


def load_params(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:6] != PARAMS_MAGIC:
        raise BadFile(f"{path}: bad magic {blob[:6]!r}")
    (meta_len,) = struct.unpack_from("<I", blob, 6)
    meta = json.loads(blob[10:10 + meta_len].decode())
    (count,) = struct.unpack_from("<Q", blob, 10 + meta_len)
    offset = 10 + meta_len + 8
    if len(blob) != offset + 8 * count:
        raise BadFile(f"{path}: truncated parameter payload")
    if "arch" in meta and meta.get("arch_hash") != arch_hash(meta["arch"]):
        raise BadFile(f"{path}: architecture hash mismatch")
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return data.astype(np.float64), meta

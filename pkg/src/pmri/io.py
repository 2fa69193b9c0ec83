"""File formats: CPLX1 tensors, dataset directories with manifests, PNG export.

CPLX1 layout: magic ``CPLX1\\0``, little-endian u32 rank, u32 dims[rank], then
row-major float64 (re, im) interleaved payload.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .core import NoiseSpec, SamplingMask, SensitivityMaps, normalize_unit_range
from .errors import BadFile
from .sim import AcquisitionRecord

CPLX_MAGIC = b"CPLX1\x00"


def write_cplx(path, arr) -> Path:
    path = Path(path)
    a = np.ascontiguousarray(arr, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(CPLX_MAGIC)
        fh.write(struct.pack("<I", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
        fh.write(a.astype("<c16").tobytes(order="C"))
    return path


def read_cplx(path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:6] != CPLX_MAGIC:
        raise BadFile(f"{path}: bad magic {blob[:6]!r}")
    (rank,) = struct.unpack_from("<I", blob, 6)
    if rank == 0 or rank > 8:
        raise BadFile(f"{path}: implausible rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", blob, 10)
    offset = 10 + 4 * rank
    count = int(np.prod(dims))
    expected = offset + 16 * count
    if len(blob) != expected:
        raise BadFile(f"{path}: payload size {len(blob)} != expected {expected}")
    data = np.frombuffer(blob, dtype="<c16", count=count, offset=offset)
    return data.reshape(dims).astype(np.complex128)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def export_png(arr, path) -> Path:
    """8-bit grayscale PNG of the min-max normalized magnitude."""
    mag = np.abs(np.asarray(arr))
    if mag.ndim != 2:
        raise BadFile(f"PNG export needs a 2D tensor, got shape {mag.shape}")
    norm, _ = normalize_unit_range(mag)
    img = Image.fromarray(np.round(norm * 255).astype(np.uint8), mode="L")
    path = Path(path)
    img.save(path, format="PNG")
    return path


def _mask_to_tensor(mask: SamplingMask) -> np.ndarray:
    return mask.bits.astype(np.complex128)


def _mask_from_tensor(arr: np.ndarray, accel: int, acs_h: int, acs_w: int) -> SamplingMask:
    bits = np.round(arr.real).astype(np.uint8)
    return SamplingMask(bits=bits, accel=accel, acs_h=acs_h, acs_w=acs_w)


def _maps_from_tensor(arr: np.ndarray) -> SensitivityMaps:
    rss = np.sqrt((np.abs(arr) ** 2).sum(axis=0))
    return SensitivityMaps(data=arr, support=rss > 0)


def write_dataset(out_dir, records: list[AcquisitionRecord], config_hash: str,
                  extra: dict | None = None) -> Path:
    """Write slice tensors plus a deterministic manifest.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask = records[0].mask
    mask_file = write_cplx(out_dir / "mask.cplx", _mask_to_tensor(mask))

    slices = []
    for rec in records:
        files = {
            "truth": f"{rec.slice_id}_truth.cplx",
            "maps": f"{rec.slice_id}_maps.cplx",
            "kspace": f"{rec.slice_id}_kspace.cplx",
        }
        write_cplx(out_dir / files["truth"], rec.truth)
        write_cplx(out_dir / files["maps"], rec.maps_true.data)
        write_cplx(out_dir / files["kspace"], rec.kspace)
        slices.append({
            "slice_id": rec.slice_id,
            "group_id": rec.group_id,
            "noise_std": rec.noise.std,
            "noise_seed": rec.noise.seed,
            "files": files,
            "sha256": {key: sha256_file(out_dir / name)
                       for key, name in sorted(files.items())},
        })

    manifest = {
        "format": "pmri-dataset-v1",
        "tool_version": __version__,
        "config_hash": config_hash,
        "mask": {
            "accel": mask.accel, "acs_h": mask.acs_h, "acs_w": mask.acs_w,
            "height": mask.height, "width": mask.width,
            "file": "mask.cplx", "sha256": sha256_file(mask_file),
        },
        "slices": slices,
    }
    if extra:
        manifest.update(extra)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out_dir


def write_stage_manifest(out_dir, stage: str, config_hash: str,
                         extra: dict | None = None) -> Path:
    """Small deterministic manifest tying a stage output to its config."""
    manifest = {"format": "pmri-stage-v1", "stage": stage,
                "tool_version": __version__, "config_hash": config_hash}
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.is_file():
        raise BadFile(f"no manifest.json in {dataset_dir}")
    manifest = json.loads(path.read_text())
    if manifest.get("format") != "pmri-dataset-v1":
        raise BadFile(f"{path}: unknown dataset format {manifest.get('format')!r}")
    return manifest


def load_dataset(dataset_dir) -> tuple[list[AcquisitionRecord], dict]:
    """Load every slice of a dataset directory along with its manifest."""
    dataset_dir = Path(dataset_dir)
    manifest = read_manifest(dataset_dir)
    minfo = manifest["mask"]
    mask = _mask_from_tensor(read_cplx(dataset_dir / minfo["file"]),
                             minfo["accel"], minfo["acs_h"], minfo["acs_w"])
    records = []
    for entry in manifest["slices"]:
        files = entry["files"]
        records.append(AcquisitionRecord(
            kspace=read_cplx(dataset_dir / files["kspace"]),
            mask=mask,
            truth=read_cplx(dataset_dir / files["truth"]),
            maps_true=_maps_from_tensor(read_cplx(dataset_dir / files["maps"])),
            noise=NoiseSpec(std=entry["noise_std"], seed=entry["noise_seed"]),
            slice_id=entry["slice_id"],
            group_id=entry["group_id"],
        ))
    return records, manifest


def manifest_hash(dataset_dir) -> str:
    return sha256_file(Path(dataset_dir) / "manifest.json")

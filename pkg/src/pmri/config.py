"""Run configuration: one JSON document drives every pipeline stage.

The sha256 of the canonical serialization is recorded in every output
manifest so stages refuse to mix artifacts from different configurations.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import BadConfig
from .sim import PHANTOM_KINDS


@dataclass
class TrainSection:
    epochs: int = 50
    lr: float = 1e-3
    batch: int = 4
    w_img: float = 1.5
    w_ksp: float = 0.5
    seed: int = 7
    scale: str = "desk"
    checkpoint_every: int = 10


@dataclass
class EvalSection:
    methods: list = field(default_factory=lambda: ["zf", "sense", "learned"])
    maps_source: str = "est"
    shifted_acs_h: int = 12
    shifted_acs_w: int = 12
    reg: float = 0.0


@dataclass
class RunConfig:
    seed: int = 1234
    height: int = 64
    width: int = 64
    coils: int = 8
    coil_falloff: float = 28.0
    coil_ring_radius: float = 26.0
    phantom_kind: str = "shepp_logan"
    contrast_scale: float = 1.0
    accel: int = 4
    acs_h: int = 24
    acs_w: int = 24
    noise_std: float = 0.0
    groups: int = 4
    subseries_per_group: int = 2
    slices_per_series: int = 4
    holdout_group: str = "g03"
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        if self.phantom_kind not in PHANTOM_KINDS:
            raise BadConfig(f"unknown phantom kind {self.phantom_kind!r}")
        if self.groups < 1 or self.subseries_per_group < 1 \
                or self.slices_per_series < 1:
            raise BadConfig("dataset layout counts must be positive")
        if not 1 <= self.accel <= self.width:
            raise BadConfig("acceleration out of range")
        if self.train.scale not in ("desk", "paper"):
            raise BadConfig(f"unknown net scale {self.train.scale!r}")
        group_ids = [f"g{g:02d}" for g in range(self.groups)]
        if self.holdout_group not in group_ids:
            raise BadConfig(f"holdout group {self.holdout_group!r} not in "
                            f"{group_ids}")

    def to_canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        try:
            train = TrainSection(**d.pop("train", {}))
            ev = EvalSection(**d.pop("eval", {}))
            return cls(train=train, eval=ev, **d)
        except TypeError as exc:
            raise BadConfig(f"bad config fields: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise BadConfig(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise BadConfig(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    def slice_layout(self) -> list[tuple[str, str]]:
        """(group_id, slice_id) pairs covering groups x sub-series x slices."""
        layout = []
        for g in range(self.groups):
            gid = f"g{g:02d}"
            for e in range(self.subseries_per_group):
                for s in range(self.slices_per_series):
                    layout.append((gid, f"{gid}e{e:02d}s{s:02d}"))
        return layout

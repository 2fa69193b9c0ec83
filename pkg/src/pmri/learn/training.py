"""Mini-batch training loop for the two-module pipeline."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import Divergence
from ..sim import AcquisitionRecord
from .optim import AdamConfig, AdamState, adam_step
from .params import save_params
from .pipeline import (LAMBDA_NAME, LossWeights, ReconPipeline,
                       pipeline_loss_and_grad)


class NonDecreasingLoss(UserWarning):
    """The epoch-loss trend did not improve over the run."""


def check_loss_trend(logs: list["EpochLog"]) -> bool:
    """True when the final epoch improved on the first; warns otherwise."""
    if len(logs) >= 2 and logs[-1].loss_total > logs[0].loss_total:
        warnings.warn(
            f"loss rose from {logs[0].loss_total:.6g} to "
            f"{logs[-1].loss_total:.6g} over {len(logs)} epochs",
            NonDecreasingLoss)
        return False
    return True


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    batch: int = 4
    w_img: float = 1.5
    w_ksp: float = 0.5
    seed: int = 0
    scale: str = "desk"
    checkpoint_every: int = 10

    def __post_init__(self):
        if self.w_img <= 0 or self.w_ksp <= 0:
            raise ValueError("loss weights must be positive")
        if self.batch < 1 or self.epochs < 1:
            raise ValueError("batch and epochs must be positive")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss_image: float
    loss_kspace: float
    loss_total: float
    lam: float


def train(pipe: ReconPipeline, records: list[AcquisitionRecord],
          cfg: TrainConfig, out_dir: Path | None = None,
          meta: dict | None = None) -> list[EpochLog]:
    """Train on the given (already group-split) slices.

    Each epoch shuffles the slice order with the seeded generator and walks
    contiguous mini-batches; per-batch gradients are slice means accumulated
    in a fixed order.  Loss values are recorded before each update.  If the
    loss turns non-finite, the last finished-epoch checkpoint is kept and
    Divergence is raised.
    """
    if not records:
        raise ValueError("no training slices")
    store = pipe.store
    weights = LossWeights(w_img=cfg.w_img, w_ksp=cfg.w_ksp)
    adam_cfg = AdamConfig(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                          eps=cfg.eps_adam)
    state = AdamState.for_size(store.size)
    rng = np.random.default_rng(cfg.seed)
    logs: list[EpochLog] = []

    def checkpoint():
        if out_dir is not None:
            save_params(Path(out_dir) / "params.bin", store, meta or {})

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(records))
        img_sum = ksp_sum = tot_sum = 0.0
        for start in range(0, len(order), cfg.batch):
            batch = order[start:start + cfg.batch]
            store.zero_grad()
            for idx in batch:
                rec = records[idx]
                values, _ = pipeline_loss_and_grad(pipe, rec.kspace, rec.mask,
                                                   rec.truth, weights)
                if not np.isfinite(values.total):
                    checkpoint()
                    raise Divergence(
                        f"loss became non-finite at epoch {epoch}")
                img_sum += values.image
                ksp_sum += values.kspace
                tot_sum += values.total
            store.grad /= len(batch)
            adam_step(store.data, store.grad, state, adam_cfg)
        n = len(order)
        logs.append(EpochLog(epoch=epoch,
                             loss_image=img_sum / n,
                             loss_kspace=ksp_sum / n,
                             loss_total=tot_sum / n,
                             lam=float(store.view(LAMBDA_NAME))))
        if out_dir is not None and (epoch % cfg.checkpoint_every == 0
                                    or epoch == cfg.epochs):
            checkpoint()
    check_loss_trend(logs)
    if out_dir is not None:
        write_loss_log(Path(out_dir) / "loss_log.csv", logs)
    return logs


def write_loss_log(path: Path, logs: list[EpochLog]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss_image", "loss_kspace", "loss_total",
                         "lambda"])
        for log in logs:
            writer.writerow([log.epoch, f"{log.loss_image:.12g}",
                             f"{log.loss_kspace:.12g}",
                             f"{log.loss_total:.12g}", f"{log.lam:.12g}"])
    return path

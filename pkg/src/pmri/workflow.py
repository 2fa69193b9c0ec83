"""Config-driven experiment stages shared by the CLI and the test harness."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .calib import AcsWindowSpec, estimate_csm_acs
from .config import RunConfig
from .core import NoiseSpec
from .evaluate import (SummaryRow, acs_shift_experiment, evaluate_suite,
                        write_report_csv, write_summary_csv)
from .io import write_cplx, write_dataset, write_stage_manifest
from .learn.pipeline import ReconPipeline, build_pipeline
from .learn.training import EpochLog, TrainConfig, train
from .sim import (AcquisitionRecord, CoilProfileSpec, PhantomSpec,
                  derive_slice_seed, make_coil_maps, make_mask, make_phantom,
                  simulate_acquisition)


def simulate_records(cfg: RunConfig) -> list[AcquisitionRecord]:
    """Generate the grouped slice set described by the config.

    One receive array serves the whole dataset (anatomy varies per slice);
    per-slice seeds are stable hashes of the config seed and the slice id.
    """
    mask = make_mask(cfg.height, cfg.width, cfg.accel, cfg.acs_h, cfg.acs_w)
    maps = make_coil_maps(
        CoilProfileSpec(coils=cfg.coils, falloff=cfg.coil_falloff,
                        ring_radius=cfg.coil_ring_radius,
                        seed=derive_slice_seed(cfg.seed, "coils")),
        cfg.height, cfg.width)
    records = []
    for gid, sid in cfg.slice_layout():
        truth = make_phantom(PhantomSpec(
            kind=cfg.phantom_kind, height=cfg.height, width=cfg.width,
            contrast_scale=cfg.contrast_scale,
            seed=derive_slice_seed(cfg.seed, f"phantom:{sid}")))
        noise = NoiseSpec(std=cfg.noise_std,
                          seed=derive_slice_seed(cfg.seed, f"noise:{sid}"))
        records.append(simulate_acquisition(truth, maps, mask, noise,
                                            slice_id=sid, group_id=gid))
    return records


def split_records(records: list[AcquisitionRecord], holdout_group: str):
    train_recs = [r for r in records if r.group_id != holdout_group]
    test_recs = [r for r in records if r.group_id == holdout_group]
    return train_recs, test_recs


@dataclass
class PipelineResult:
    """Everything the end-to-end run produced, for callers and tests."""

    out: Path
    criteria: dict
    logs: list[EpochLog]
    pipe: ReconPipeline
    train_records: list[AcquisitionRecord]
    test_records: list[AcquisitionRecord]
    summary: list[SummaryRow]
    shift_deltas: dict
    train_minutes: float

    @property
    def passed(self) -> bool:
        return all(self.criteria.values())


def run_pipeline(cfg: RunConfig, out: Path, log=print) -> PipelineResult:
    """simulate -> calibrate -> train -> evaluate -> ACS-shift -> criteria.

    Writes every artifact under ``out`` and returns the collected results.
    Timings in the evaluation CSVs are zeroed so reruns are bit-identical.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    records = simulate_records(cfg)
    dataset_dir = write_dataset(
        out / "dataset", records, cfg.config_hash(),
        extra={"run_config": json.loads(cfg.to_canonical_json()),
               "holdout_group": cfg.holdout_group})
    log(f"[simulate] {len(records)} slices -> {dataset_dir}")

    spec = AcsWindowSpec(acs_h=cfg.acs_h, acs_w=cfg.acs_w)
    for rec in records:
        rec.maps_est = estimate_csm_acs(rec.kspace, spec, mask=rec.mask)
        write_cplx(dataset_dir / f"{rec.slice_id}_maps_est.cplx",
                   rec.maps_est.data)
    log(f"[calibrate] estimated maps for {len(records)} slices")

    train_records, test_records = split_records(records, cfg.holdout_group)
    pipe = build_pipeline(cfg.coils, scale=cfg.train.scale, seed=cfg.train.seed)
    tcfg = TrainConfig(epochs=cfg.train.epochs, lr=cfg.train.lr,
                       batch=cfg.train.batch, w_img=cfg.train.w_img,
                       w_ksp=cfg.train.w_ksp, seed=cfg.train.seed,
                       scale=cfg.train.scale,
                       checkpoint_every=cfg.train.checkpoint_every)
    train_dir = out / "train"
    train_dir.mkdir(exist_ok=True)
    meta = {"arch": {"csm": pipe.csm_spec.to_dict(),
                     "denoiser": pipe.den_spec.to_dict(),
                     "csm_input": pipe.csm_input},
            "coils": cfg.coils, "config_hash": cfg.config_hash(),
            "tool_version": __version__}
    t0 = time.perf_counter()
    logs = train(pipe, train_records, tcfg, out_dir=train_dir, meta=meta)
    train_minutes = (time.perf_counter() - t0) / 60
    write_stage_manifest(train_dir, "train", cfg.config_hash(),
                         extra={"seed": tcfg.seed, "epochs": tcfg.epochs,
                                "holdout_group": cfg.holdout_group})
    lam = logs[-1].lam
    log(f"[train] {tcfg.epochs} epochs on {len(train_records)} slices; "
        f"loss {logs[0].loss_total:.6g} -> {logs[-1].loss_total:.6g}, "
        f"lambda {lam:.4g}")

    eval_dir = out / "eval"
    eval_dir.mkdir(exist_ok=True)
    reports, summary = evaluate_suite(
        test_records, list(cfg.eval.methods), pipe=pipe,
        maps_source=cfg.eval.maps_source, reg=cfg.eval.reg,
        deterministic_timing=True)
    write_report_csv(eval_dir / "report.csv", reports)
    write_summary_csv(eval_dir / "summary.csv", summary)
    log(f"[evaluate] {len(reports)} rows -> {eval_dir / 'summary.csv'}")

    shift_reports, deltas = acs_shift_experiment(
        test_records, pipe, (cfg.eval.shifted_acs_h, cfg.eval.shifted_acs_w),
        deterministic_timing=True)
    write_report_csv(eval_dir / "acs_shift_report.csv", shift_reports)
    write_stage_manifest(eval_dir, "evaluate", cfg.config_hash(),
                         extra={"methods": list(cfg.eval.methods),
                                "group": cfg.holdout_group})
    log(f"[acs-shift] PSNR delta {deltas['psnr_delta_db']:+.3f} dB, "
        f"SSIM delta {deltas['ssim_delta']:+.4f}")

    by_method = {row.method: row for row in summary}
    criteria = {
        "loss_halved": logs[-1].loss_total <= 0.5 * logs[0].loss_total,
        "lambda_finite_positive": bool(np.isfinite(lam) and lam > 0),
        "learned_beats_zf_3db": by_method["learned"].psnr_mean
                                 >= by_method["zf"].psnr_mean + 3.0
                                 if "learned" in by_method else True,
        "sense_beats_zf_3db": by_method["sense"].psnr_mean
                               >= by_method["zf"].psnr_mean + 3.0
                               if "sense" in by_method else True,
        "matched_not_worse_than_shifted": deltas["psnr_delta_db"] >= 0.0,
    }
    (out / "criteria.json").write_text(
        json.dumps({"criteria": criteria, "deltas": deltas,
                    "config_hash": cfg.config_hash()},
                   indent=2, sort_keys=True) + "\n")
    return PipelineResult(out=out, criteria=criteria, logs=logs, pipe=pipe,
                          train_records=train_records,
                          test_records=test_records, summary=summary,
                          shift_deltas=deltas, train_minutes=train_minutes)

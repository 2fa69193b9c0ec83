"""Command line interface.

Subcommands: simulate, calibrate, reconstruct, train, evaluate, export,
pipeline.  Exit codes: 0 success, 2 validation failure, 3 pipeline criterion
failure, 4 I/O error.  Existing outputs are never overwritten without
--force.  PMRI_OUT sets the default output root.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calib import AcsWindowSpec, estimate_csm_acs
from .config import RunConfig
from .errors import (AcsNotSampled, BadConfig, BadDims, BadFile,
                     ConstantImage, MissingParams, PmriError, ShapeMismatch)
from .evaluate import evaluate_suite, write_report_csv, write_summary_csv
from .io import (export_png, load_dataset, read_cplx, write_cplx,
                 write_dataset, write_stage_manifest)
from .learn.params import NetSpec, ParamStore, load_params
from .learn.pipeline import ReconPipeline, build_pipeline
from .learn.training import TrainConfig, train
from .recon import compose_kspace, initial_recon, sense_reconstruct, zero_filled_recon
from .workflow import run_pipeline, simulate_records

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CRITERION = 3
EXIT_IO = 4

PIPELINE_STAGES = ("simulate", "calibrate", "train", "evaluate", "acs-shift",
                   "criteria")


def _resolve_out(arg_value, name: str) -> Path:
    if arg_value is not None:
        return Path(arg_value)
    root = os.environ.get("PMRI_OUT")
    if root is None:
        raise BadConfig(f"--out is required (or set PMRI_OUT); no default for {name}")
    return Path(root) / name


def _check_fresh(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise BadConfig(f"{path} already exists; pass --force to overwrite")


def _load_trained(params_path, manifest_hash: str | None):
    data, meta = load_params(params_path)
    if manifest_hash is not None and meta.get("config_hash") \
            and meta["config_hash"] != manifest_hash:
        raise BadConfig("checkpoint config hash does not match dataset; "
                        "refusing to mix artifacts from different runs")
    arch = meta["arch"]
    store = ParamStore()
    pipe = ReconPipeline(store,
                         NetSpec.from_dict(arch["csm"]),
                         NetSpec.from_dict(arch["denoiser"]),
                         csm_input=arch.get("csm_input", "image"))
    store.allocate(np.random.default_rng(0))
    if store.size != data.size:
        raise BadFile(f"{params_path}: parameter count {data.size} does not "
                      f"match architecture ({store.size})")
    store.data[:] = data
    return pipe, meta


def _slice_record(records, slice_id: str):
    by_id = {r.slice_id: r for r in records}
    if slice_id not in by_id:
        raise BadConfig(f"slice {slice_id!r} not in dataset "
                        f"(have {', '.join(sorted(by_id))})")
    return by_id[slice_id]


def cmd_simulate(args) -> int:
    cfg = RunConfig.from_file(args.config)
    out = _resolve_out(args.out, "dataset")
    _check_fresh(out / "manifest.json", args.force)
    records = simulate_records(cfg)
    write_dataset(out, records, cfg.config_hash(),
                  extra={"run_config": json.loads(cfg.to_canonical_json()),
                         "holdout_group": cfg.holdout_group})
    print(f"wrote {len(records)} slices to {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    records, _ = load_dataset(args.dataset)
    rec = _slice_record(records, args.slice)
    spec = AcsWindowSpec(acs_h=args.acs or rec.mask.acs_h,
                         acs_w=args.acs or rec.mask.acs_w, apod=args.apod)
    maps = estimate_csm_acs(rec.kspace, spec, mask=rec.mask)
    out = Path(args.out) if args.out else \
        Path(args.dataset) / f"{args.slice}_maps_est.cplx"
    _check_fresh(out, args.force)
    write_cplx(out, maps.data)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    records, manifest = load_dataset(args.dataset)
    rec = _slice_record(records, args.slice)

    maps = None
    if args.method in ("sense", "dc"):
        if args.maps == "true":
            maps = rec.maps_true
        elif args.maps == "est":
            minfo = manifest["mask"]
            maps = estimate_csm_acs(
                rec.kspace, AcsWindowSpec(minfo["acs_h"], minfo["acs_w"]),
                mask=rec.mask)
        else:
            from .io import _maps_from_tensor
            maps = _maps_from_tensor(read_cplx(args.maps))

    if args.method == "zf":
        img = zero_filled_recon(rec.kspace).astype(np.complex128)
    elif args.method == "sense":
        img, report = sense_reconstruct(rec.kspace, maps, rec.mask,
                                        reg=args.reg)
        print(f"max condition number {report.max_condition:.4g}")
    else:
        kplus = compose_kspace(rec.kspace, rec.mask, maps, args.lam)
        img = initial_recon(kplus, maps)

    out = Path(args.out) if args.out else \
        Path(args.dataset) / f"{args.slice}_recon_{args.method}.cplx"
    _check_fresh(out, args.force)
    write_cplx(out, img)
    png = out.with_suffix(".png")
    export_png(img, png)
    print(f"wrote {out} and {png}")
    return EXIT_OK


def cmd_train(args) -> int:
    records, manifest = load_dataset(args.dataset)
    holdout = args.holdout_group if args.holdout_group is not None \
        else manifest.get("holdout_group")
    train_records = [r for r in records if r.group_id != holdout]
    if not train_records:
        raise BadConfig("no training slices left after holdout exclusion")
    out = _resolve_out(args.out, "train")
    out.mkdir(parents=True, exist_ok=True)
    _check_fresh(out / "params.bin", args.force)

    coils = train_records[0].kspace.shape[0]
    pipe = build_pipeline(coils, scale=args.scale, seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, lr=args.lr, batch=args.batch,
                      seed=args.seed, scale=args.scale)
    meta = {
        "arch": {"csm": pipe.csm_spec.to_dict(),
                 "denoiser": pipe.den_spec.to_dict(),
                 "csm_input": pipe.csm_input},
        "coils": coils,
        "config_hash": manifest.get("config_hash", ""),
        "train": {"epochs": cfg.epochs, "lr": cfg.lr, "batch": cfg.batch,
                  "seed": cfg.seed, "scale": cfg.scale,
                  "holdout_group": holdout},
        "tool_version": __version__,
    }
    logs = train(pipe, train_records, cfg, out_dir=out, meta=meta)
    write_stage_manifest(out, "train", manifest.get("config_hash", ""),
                         extra={"seed": cfg.seed, "epochs": cfg.epochs,
                                "holdout_group": holdout})
    print(f"trained {cfg.epochs} epochs on {len(train_records)} slices; "
          f"final loss {logs[-1].loss_total:.6g}, lambda {logs[-1].lam:.4g}")
    print(f"wrote {out / 'params.bin'} and {out / 'loss_log.csv'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    records, manifest = load_dataset(args.dataset)
    holdout = args.groups or manifest.get("holdout_group")
    subset = [r for r in records if r.group_id == holdout] if holdout else records
    if not subset:
        raise BadConfig(f"no slices in evaluation group {holdout!r}")
    methods = args.methods.split(",")

    pipe = None
    if "learned" in methods:
        if not args.params:
            raise MissingParams("evaluate --methods learned needs --params")
        pipe, _ = _load_trained(args.params, manifest.get("config_hash"))

    kinds = ("matched_mask", "shifted_mask") if args.shifted_acs else \
        ("matched_mask",)
    shifted = (args.shifted_acs, args.shifted_acs) if args.shifted_acs else None
    reports, summary = evaluate_suite(
        subset, methods, pipe=pipe, maps_source=args.maps,
        input_kinds=kinds, shifted_acs=shifted, reg=args.reg,
        deterministic_timing=args.deterministic_timing)

    out = _resolve_out(args.out, "eval")
    out.mkdir(parents=True, exist_ok=True)
    _check_fresh(out / "report.csv", args.force)
    write_report_csv(out / "report.csv", reports)
    write_summary_csv(out / "summary.csv", summary)
    write_stage_manifest(out, "evaluate", manifest.get("config_hash", ""),
                         extra={"methods": methods, "group": holdout})
    for row in summary:
        print(f"{row.method:8s} {row.input_kind:13s} "
              f"PSNR {row.psnr_mean:.2f} +/- {row.psnr_std:.2f} dB   "
              f"SSIM {row.ssim_mean:.4f} +/- {row.ssim_std:.4f}")
    print(f"wrote {out / 'report.csv'} and {out / 'summary.csv'}")
    return EXIT_OK


def cmd_export(args) -> int:
    arr = read_cplx(args.input)
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".png")
    _check_fresh(out, args.force)
    export_png(arr, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = RunConfig.from_file(args.config)
    out = _resolve_out(args.out, "pipeline")
    if args.dry_run:
        print(f"pipeline plan for {out} (config hash {cfg.config_hash()[:12]}):")
        for stage in PIPELINE_STAGES:
            print(f"  {stage}")
        return EXIT_OK
    _check_fresh(out / "dataset" / "manifest.json", args.force)
    result = run_pipeline(cfg, out)
    failed = [name for name, ok in result.criteria.items() if not ok]
    if failed:
        print(f"[criteria] FAILED: {', '.join(failed)}")
        return EXIT_CRITERION
    print("[criteria] all passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmri",
        description="Parallel-MRI simulation, reconstruction, and training toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="estimate maps from one slice's ACS")
    p.add_argument("--dataset", required=True)
    p.add_argument("--slice", required=True)
    p.add_argument("--acs", type=int, help="square ACS window override")
    p.add_argument("--apod", choices=["hann", "none"], default="hann")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reconstruct", help="reconstruct one slice")
    p.add_argument("--dataset", required=True)
    p.add_argument("--slice", required=True)
    p.add_argument("--method", choices=["zf", "sense", "dc"], default="zf")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--reg", type=float, default=0.0)
    p.add_argument("--maps", default="est",
                   help="'true', 'est', or a path to a maps .cplx file")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="train the learned pipeline")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--scale", choices=["desk", "paper"], default="desk")
    p.add_argument("--holdout-group")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metric table on held-out slices")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--methods", default="zf,sense")
    p.add_argument("--params", help="checkpoint for the learned method")
    p.add_argument("--maps", choices=["est", "true"], default="est")
    p.add_argument("--groups", help="evaluation group (default: holdout)")
    p.add_argument("--reg", type=float, default=0.0)
    p.add_argument("--shifted-acs", type=int,
                   help="also evaluate under this square ACS size")
    p.add_argument("--deterministic-timing", action="store_true",
                   help="write runtime_ms = 0 for bit-reproducible CSVs")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="PNG of a tensor's magnitude")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("pipeline",
                       help="simulate -> calibrate -> train -> evaluate")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BadConfig, BadDims, ShapeMismatch, ConstantImage, AcsNotSampled,
            MissingParams) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BadFile, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PmriError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

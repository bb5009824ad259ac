"""Command-line pipeline driver.

One executable with subcommands covering the whole pipeline: simulate a
scene, build the solution bank, generate a corpus, derive drop-rate and
downsampled-HR views, run the bicubic baseline, evaluate predictions, and
dump per-term physics rasters. Every command is deterministic given its
flags; all randomness flows from the seed in the config (or --seed).

Exit codes: 0 success, 2 usage error, 1 runtime error. PLUMESR_THREADS caps
worker parallelism (0 = one worker per CPU).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import dataset as ds
from .core import read_container, write_container, canonical_json
from .metrics import evaluate, psnr_delta_to_rms_ratio
from .resample import bicubic_baseline
from .residual import residual_field
from .scene import SceneSpec
from .solver import integrate, pde_terms
from .wind import WindModel, wind_at


def workers_from_env() -> int:
    raw = os.environ.get("PLUMESR_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"PLUMESR_THREADS must be an integer, got {raw!r}")
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def _load_config(args) -> ds.DatasetConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            config = ds.DatasetConfig.from_dict(json.load(fh))
    else:
        config = ds.DatasetConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        overrides["n_samples"] = args.samples
    if overrides:
        from dataclasses import replace
        config = replace(config, **overrides)
    return config


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = _load_config(args)
    bank = None  # the scene is realized without composing, via direct solve
    wind = config.wind_model()
    lr_cfg, hr_cfg = config.solver_configs()
    solver_cfg = lr_cfg if args.resolution == "lr" else hr_cfg

    # realize the requested sample's scene deterministically
    from .core import Rng64, derive_seed
    sample_seed = ds.derive_seed(ds.derive_seed(config.master_seed, 3), args.sample_index)
    rng = Rng64(derive_seed(sample_seed, 0))
    t_indices = config.valid_t_indices()
    t_index = t_indices[rng.next_below(len(t_indices))]
    from .scene import sample_scene
    scene = sample_scene(rng, config.n_sources, config.max_flux, config.domain,
                         config.start_times_for(t_index), config.radius)

    every = int(round(config.dt_snap / solver_cfg.dt))
    n_steps = config.last_snapshot_index() * every
    snaps = integrate(solver_cfg, wind, scene, n_steps, every)
    meta = {
        "schema": "plumesr-simulation-v1",
        "resolution": args.resolution,
        "dt_snap": config.dt_snap,
        "dx": solver_cfg.dx,
        "kappa": config.kappa,
        "t_index": t_index,
        "wind": wind.to_meta(),
        "scene": scene.to_meta(),
    }
    arrays = [(f"snap_{k:05d}", f.values.astype(np.float32))
              for k, f in enumerate(snaps)]
    write_container(args.out, meta, arrays)
    print(f"wrote {len(snaps)} snapshots to {args.out}")
    return 0


def cmd_bank(args) -> int:
    config = _load_config(args)
    bank = ds.build_corpus_bank(config, workers=workers_from_env())
    meta = {
        "schema": "plumesr-bank-v1",
        "phases": list(bank.phases),
        "dt_snap": bank.dt_snap,
        "period": bank.period,
        "radius": bank.radius,
        "ref_cell": list(bank.ref_cell),
        "wind": config.wind_model().to_meta(),
    }
    arrays = []
    for j in range(bank.n_phases):
        arrays.append((f"lr_{j:02d}",
                       np.stack([f.values for f in bank.lr[j]]).astype(np.float32)))
    for j in range(bank.n_phases):
        arrays.append((f"hr_{j:02d}",
                       np.stack([f.values for f in bank.hr[j]]).astype(np.float32)))
    write_container(args.out, meta, arrays)
    print(f"wrote bank ({bank.n_phases} phases x {bank.n_snapshots} snapshots) to {args.out}")
    return 0


def cmd_dataset(args) -> int:
    config = _load_config(args)
    manifest = ds.generate_dataset(config, args.root, workers=workers_from_env())
    print(f"wrote {config.n_samples} samples; manifest at {manifest}")
    return 0


def cmd_drop(args) -> int:
    out_dir = args.out or f"drop_{args.rate:g}"
    manifest = ds.write_drop_view(args.root, out_dir, args.rate)
    print(f"wrote drop view at rate {args.rate} to {manifest}")
    return 0


def cmd_dwn_hr(args) -> int:
    manifest = ds.make_dwn_hr_inputs(args.root, args.out)
    print(f"wrote downsampled-HR input view to {manifest}")
    return 0


def cmd_prefill(args) -> int:
    out_dir = args.out or f"prefill_{args.rate:g}"
    manifest = ds.write_prefill_view(args.root, out_dir, args.rate)
    print(f"wrote bicubic-prefilled view at rate {args.rate} to {manifest}")
    return 0


def cmd_baseline(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    rows = [r for r in ds.read_manifest(args.root) if r["split"] == args.split]
    if not rows:
        raise RuntimeError(f"no samples in split {args.split!r}")
    n = 0
    for row in rows:
        sample = ds.load_sample(args.root, row["path"], rate=args.rate)
        sr = bicubic_baseline(sample.lr, sample.mask, sample.info.get("factor", 4))
        stem = os.path.splitext(os.path.basename(row["path"]))[0]
        meta = {
            "schema": "plumesr-pred-v1",
            "model": "bicubic",
            "drop_rate": args.rate,
            "sample": row["path"],
            "sample_id": stem,
        }
        write_container(os.path.join(args.out, f"{stem}.plm1"), meta, [
            ("sr", np.clip(sr.as_array(), 0.0, 1.0).astype(np.float32)),
        ])
        n += 1
    print(f"wrote {n} baseline predictions to {args.out}")
    return 0


def cmd_eval(args) -> int:
    pred_files = sorted(
        f for f in os.listdir(args.pred) if f.endswith(".plm1"))
    if not pred_files:
        raise RuntimeError(f"no predictions in {args.pred}")
    preds, truths, metas, models, rates, ids = [], [], [], [], [], []
    from .core import SnapshotStack
    for name in pred_files:
        meta, arrays = read_container(os.path.join(args.pred, name))
        sample = ds.load_sample(args.root, meta["sample"])
        sr = SnapshotStack.from_array(arrays["sr"].astype(np.float64),
                                      sample.hr.dx, sample.hr.dt_snap)
        preds.append(sr)
        truths.append(sample.hr)
        metas.append(sample.meta)
        models.append(meta.get("model", "model"))
        rates.append(float(meta.get("drop_rate", 0.0)))
        ids.append(meta.get("sample_id", name))
    report = evaluate(preds, truths, metas, models, rates, ids)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(canonical_json(report.to_jsonable()))
            fh.write("\n")
    print(report.text_table())
    return 0


def cmd_residual_terms(args) -> int:
    sample = ds.load_sample(args.root, args.path)
    meta = sample.meta
    mid = sample.hr.channels[1]
    s_raster = meta.scene.raster_at(meta.t_center, mid.width, mid.height, meta.dx)
    if s_raster is None:
        s_raster = np.zeros_like(mid.values)
    terms = pde_terms(mid, wind_at(meta.wind, meta.t_center),
                      s_raster / meta.norm, meta.kappa)
    resid = residual_field(sample.hr, meta)
    out_meta = {
        "schema": "plumesr-terms-v1",
        "sample": args.path,
        "t_center": meta.t_center,
        "dx": meta.dx,
    }
    write_container(args.out, out_meta, [
        ("advection", terms.advection.values.astype(np.float32)),
        ("diffusion", terms.diffusion.values.astype(np.float32)),
        ("source", terms.source.values.astype(np.float32)),
        ("dcdt", terms.dcdt.values.astype(np.float32)),
        ("residual", resid.values.astype(np.float32)),
    ])
    print(f"wrote 5 term rasters to {args.out}")
    return 0


def cmd_psnr_delta(args) -> int:
    ratio = psnr_delta_to_rms_ratio(args.delta_db)
    print(f"{ratio:.4f}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plumesr",
        description="Plume simulation, LR/HR SR dataset builder, and evaluator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one scene and write its snapshots")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="output container path")
    p.add_argument("--resolution", choices=("lr", "hr"), default="lr")
    p.add_argument("--seed", type=int, help="override the config master seed")
    p.add_argument("--sample-index", type=int, default=0,
                   help="which sample's scene to realize")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bank", help="build the single-source solution bank")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="output container path")
    p.add_argument("--seed", type=int, help="override the config master seed")
    p.set_defaults(func=cmd_bank)

    p = sub.add_parser("dataset", help="generate the paired LR/HR corpus")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--root", required=True, help="corpus output directory")
    p.add_argument("--seed", type=int, help="override the config master seed")
    p.add_argument("--samples", type=int, help="override the sample count")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("drop", help="materialize a drop-rate mask view")
    p.add_argument("--root", required=True, help="corpus directory")
    p.add_argument("--rate", type=float, required=True, help="drop rate in [0, 1]")
    p.add_argument("--out", help="view subdirectory (default drop_<rate>)")
    p.set_defaults(func=cmd_drop)

    p = sub.add_parser("dwn-hr", help="derive downsampled-HR inputs for every sample")
    p.add_argument("--root", required=True, help="corpus directory")
    p.add_argument("--out", default="dwn_hr", help="view subdirectory")
    p.set_defaults(func=cmd_dwn_hr)

    p = sub.add_parser("prefill",
                       help="derive bicubic-filled LR inputs at a drop rate")
    p.add_argument("--root", required=True, help="corpus directory")
    p.add_argument("--rate", type=float, required=True, help="drop rate in [0, 1]")
    p.add_argument("--out", help="view subdirectory (default prefill_<rate>)")
    p.set_defaults(func=cmd_prefill)

    p = sub.add_parser("baseline", help="run the bicubic baseline over a split")
    p.add_argument("--root", required=True, help="corpus directory")
    p.add_argument("--rate", type=float, required=True, help="drop rate in [0, 1]")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", required=True, help="prediction output directory")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="score a prediction directory against the corpus")
    p.add_argument("--pred", required=True, help="directory of prediction containers")
    p.add_argument("--root", required=True, help="corpus directory")
    p.add_argument("--out", help="report JSON output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("residual-terms",
                       help="write per-term physics rasters for one sample")
    p.add_argument("--root", required=True, help="corpus directory")
    p.add_argument("--path", required=True, help="sample path relative to the corpus")
    p.add_argument("--out", required=True, help="output container path")
    p.set_defaults(func=cmd_residual_terms)

    p = sub.add_parser("psnr-delta",
                       help="convert a PSNR gain (dB) to a fractional rms decrease")
    p.add_argument("--delta-db", type=float, required=True)
    p.set_defaults(func=cmd_psnr_delta)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime errors exit 1; argparse already exits 2
        print(f"plumesr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

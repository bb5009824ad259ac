"""The full comparison matrix: Std-SR and PINNSR per drop rate on native LR,
Dwn-HR models on downsampled inputs (evaluated on both input kinds), and the
bicubic-fill preprocessing rows that reuse the 0%-drop models.

Each row trains (or reuses) a model, writes predictions, and scores them by
invoking the simulation pipeline's `eval` command; the bundle directory holds
checkpoints, loss curves, prediction dirs, and one report JSON per row.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

from .data import Corpus, ensure_drop_view, ensure_dwn_view, pipeline_cli
from .infer import infer_corpus
from .network import NetworkConfig, build_network
from .train import TrainConfig, train


@dataclass(frozen=True)
class ExperimentRow:
    name: str           # report key, e.g. "pinnsr@0.2"
    model: str          # std_sr | pinnsr | dwn_hr | *_prefill
    drop_rate: float
    train_inputs: str   # native | downsampled
    test_inputs: str    # native | downsampled | prefilled


def experiment_rows(drop_rates=(0.0, 0.2, 0.4, 0.6)):
    """The matrix: 2 learned models per rate + Dwn-HR per rate (tested on its
    own inputs AND native LR) + per-rate prefill rows reusing 0% models."""
    rows = []
    for rate in drop_rates:
        rows.append(ExperimentRow(f"std_sr@{rate:g}", "std_sr", rate,
                                  "native", "native"))
        rows.append(ExperimentRow(f"pinnsr@{rate:g}", "pinnsr", rate,
                                  "native", "native"))
    for rate in drop_rates:
        rows.append(ExperimentRow(f"dwn_hr@{rate:g}", "dwn_hr", rate,
                                  "downsampled", "downsampled+native"))
    for rate in drop_rates:
        rows.append(ExperimentRow(f"prefill@{rate:g}", "prefill", rate,
                                  "native", "prefilled"))
    return rows


def _train_model(root, out_dir, eta, rate, net_cfg, train_cfg, manifest,
                 mask_manifest, progress=None):
    corpus = Corpus(root, manifest=manifest, split="train",
                    mask_manifest=mask_manifest)
    model = build_network(net_cfg)
    return train(model, corpus, replace(train_cfg, eta=eta), out_dir,
                 progress=progress)


def _evaluate(pred_dir, root, report_path):
    result = pipeline_cli(["eval", "--pred", pred_dir, "--root", root,
                           "--out", report_path])
    return result.stdout


def _prefill_corpus(root, rate: float, split: str) -> Corpus:
    """Test corpus whose LR inputs had holes filled by the pipeline's bicubic
    preprocessing (materialized per sample via the baseline machinery)."""
    from plumesr_trainer.prefill import ensure_prefill_view

    manifest = ensure_prefill_view(root, rate)
    return Corpus(root, manifest=manifest, split=split)


def run_experiment(root, out_root, drop_rates=(0.0, 0.2, 0.4, 0.6),
                   net_cfg: NetworkConfig | None = None,
                   train_cfg: TrainConfig | None = None,
                   split: str = "test", progress=None):
    """Train and score every matrix row; returns {row name: report path}."""
    net_cfg = net_cfg or NetworkConfig()
    train_cfg = train_cfg or TrainConfig()
    os.makedirs(out_root, exist_ok=True)
    reports = {}

    checkpoints = {}
    # learned models on native LR, one per (objective, rate)
    for rate in drop_rates:
        mask_manifest = ensure_drop_view(root, rate)
        for model_name, eta in (("std_sr", 0.0), ("pinnsr", train_cfg.eta or 100.0)):
            tag = f"{model_name}@{rate:g}"
            run_dir = os.path.join(out_root, tag)
            ckpt = _train_model(root, run_dir, eta, rate, net_cfg, train_cfg,
                                "manifest.jsonl", mask_manifest, progress)
            checkpoints[tag] = ckpt
            test = Corpus(root, manifest="manifest.jsonl", split=split,
                          mask_manifest=mask_manifest)
            pred_dir = os.path.join(run_dir, "preds")
            infer_corpus(ckpt, test, pred_dir, model_name, rate)
            report = os.path.join(run_dir, "report.json")
            _evaluate(pred_dir, root, report)
            reports[tag] = report

    # Dwn-HR models: trained on downsampled inputs, tested on both kinds
    dwn_manifest = ensure_dwn_view(root)
    for rate in drop_rates:
        mask_manifest = ensure_drop_view(root, rate)
        tag = f"dwn_hr@{rate:g}"
        run_dir = os.path.join(out_root, tag)
        ckpt = _train_model(root, run_dir, train_cfg.eta or 100.0, rate, net_cfg,
                            train_cfg, dwn_manifest, mask_manifest, progress)
        checkpoints[tag] = ckpt
        for kind, manifest in (("downsampled", dwn_manifest),
                               ("native", "manifest.jsonl")):
            test = Corpus(root, manifest=manifest, split=split,
                          mask_manifest=mask_manifest)
            pred_dir = os.path.join(run_dir, f"preds_{kind}")
            infer_corpus(ckpt, test, pred_dir, f"dwn_hr_{kind}", rate)
            report = os.path.join(run_dir, f"report_{kind}.json")
            _evaluate(pred_dir, root, report)
            reports[f"{tag}/{kind}"] = report

    # preprocessing rows: bicubic-fill the holes, then apply the 0%-drop models
    for model_name in ("std_sr", "pinnsr"):
        zero_ckpt = checkpoints.get(f"{model_name}@0")
        if zero_ckpt is None:
            continue
        for rate in drop_rates:
            if rate == 0.0:
                continue
            tag = f"{model_name}_prefill@{rate:g}"
            test = _prefill_corpus(root, rate, split)
            pred_dir = os.path.join(out_root, tag, "preds")
            infer_corpus(zero_ckpt, test, pred_dir, f"{model_name}_prefill", rate)
            report = os.path.join(out_root, tag, "report.json")
            os.makedirs(os.path.dirname(report), exist_ok=True)
            _evaluate(pred_dir, root, report)
            reports[tag] = report

    summary_path = os.path.join(out_root, "summary.json")
    summary = {}
    for tag, path in reports.items():
        with open(path) as fh:
            data = json.load(fh)
        summary[tag] = data["rows"][0] | {"per_sample": None}
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return reports

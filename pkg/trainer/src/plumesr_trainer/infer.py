"""Inference: run a checkpoint over LR stacks and emit prediction containers.

Outputs are clamped to [0, 1] and written in the prediction schema the
pipeline's `eval` command consumes: one container per sample with an `sr`
array and {model, drop_rate, sample, sample_id} metadata.
"""

from __future__ import annotations

import os

import numpy as np
import torch

from .data import Corpus
from .plm import write_plm
from .train import load_checkpoint


def super_resolve(model, lr_stack: np.ndarray) -> np.ndarray:
    """(3, h, w) -> (3, 4h, 4w), deterministic, clamped to [0, 1]."""
    model.eval()
    with torch.no_grad():
        sr = model(torch.from_numpy(lr_stack[None].astype(np.float32)))
    return np.clip(sr[0].numpy(), 0.0, 1.0)


def infer_corpus(checkpoint, corpus: Corpus, out_dir, model_name: str,
                 drop_rate: float) -> int:
    """Write predictions for every sample in the corpus; returns the count."""
    model, _, _ = load_checkpoint(checkpoint)
    os.makedirs(out_dir, exist_ok=True)
    n = 0
    for row, sample in zip(corpus.rows, corpus.samples):
        sr = super_resolve(model, sample.lr)
        stem = os.path.splitext(os.path.basename(row["path"]))[0]
        write_plm(os.path.join(out_dir, f"{stem}.plm1"), {
            "schema": "plumesr-pred-v1",
            "model": model_name,
            "drop_rate": drop_rate,
            "sample": sample.base_path,
            "sample_id": stem,
        }, [("sr", sr.astype(np.float32))])
        n += 1
    return n

import json
import os
import subprocess
import sys

import numpy as np
import pytest
import torch

from plumesr_trainer.data import Corpus, ensure_drop_view
from plumesr_trainer.infer import infer_corpus, super_resolve
from plumesr_trainer.network import NetworkConfig, build_network
from plumesr_trainer.plm import read_plm
from plumesr_trainer.train import TrainConfig, save_checkpoint, train

TINY_NET = NetworkConfig(n_rrdb_blocks=1, base_features=8)


@pytest.fixture(scope="module")
def tiny_checkpoint(corpus_root, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    corpus = Corpus(corpus_root, split="train")
    torch.manual_seed(0)
    model = build_network(TINY_NET)
    cfg = TrainConfig(eta=0.0, batch_size=2, cycle_iters=5, n_cycles=1,
                      lr_patch=8, seed=2)
    return train(model, corpus, cfg, out)


class TestSuperResolve:
    def test_shape_range_and_determinism(self, corpus_root, tiny_checkpoint):
        from plumesr_trainer.train import load_checkpoint

        model, _, _ = load_checkpoint(tiny_checkpoint)
        corpus = Corpus(corpus_root, split="test")
        lr = corpus.samples[0].lr
        out1 = super_resolve(model, lr)
        out2 = super_resolve(model, lr)
        assert out1.shape == (3, 4 * lr.shape[1], 4 * lr.shape[2])
        assert np.array_equal(out1, out2)
        assert out1.min() >= 0.0 and out1.max() <= 1.0


class TestInferCorpus:
    def test_predictions_readable_by_pipeline_eval(self, corpus_root,
                                                   tiny_checkpoint, tmp_path):
        rate = 0.2
        mask_manifest = ensure_drop_view(corpus_root, rate)
        corpus = Corpus(corpus_root, split="test", mask_manifest=mask_manifest)
        pred_dir = tmp_path / "preds"
        n = infer_corpus(tiny_checkpoint, corpus, pred_dir, "smoke", rate)
        assert n == len(corpus)

        meta, arrays = read_plm(pred_dir / sorted(os.listdir(pred_dir))[0])
        assert meta["schema"] == "plumesr-pred-v1"
        assert meta["model"] == "smoke"
        assert arrays["sr"].dtype == np.float32

        report_path = tmp_path / "report.json"
        result = subprocess.run(
            [sys.executable, "-m", "plumesr.cli", "eval",
             "--pred", str(pred_dir), "--root", str(corpus_root),
             "--out", str(report_path)],
            capture_output=True, text=True)
        assert result.returncode == 0, result.stderr
        report = json.loads(report_path.read_text())
        row = report["rows"][0]
        assert row["model"] == "smoke"
        assert row["drop_rate"] == rate
        assert row["n_samples"] == n
        assert row["l_phys"] >= 0.0

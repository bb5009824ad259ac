"""Corpus access: manifests, samples, drop views, and patch batches.

The trainer reads the simulation pipeline's corpus layout directly:
manifest.jsonl rows point at sample containers holding the clean LR stack,
the drop mask, the HR stack, and the physics metadata. Dropped pixels are set
to the sentinel 0.0 on load; the mask itself is never fed to the network.
Derived views (drop-rate masks, downsampled-HR inputs) are containers with a
"base" reference; masks for other rates are materialized with the pipeline's
`drop` command, never rederived here.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import sys
from dataclasses import dataclass

import numpy as np

from .plm import read_plm

DROP_SENTINEL = 0.0


def pipeline_cli(args, check=True):
    """Invoke the simulation pipeline's CLI in a child process."""
    cmd = [sys.executable, "-m", "plumesr.cli"] + [str(a) for a in args]
    return subprocess.run(cmd, check=check, capture_output=True, text=True)


def read_manifest(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def wind_velocity(wind_meta: dict, t: float):
    """Velocity (ux, uy) of the serialized wind model at time t."""
    w = 2.0 * math.pi / wind_meta["period"]
    ux = wind_meta["u0"]
    uy = 0.0
    for term in wind_meta["terms"]:
        ux += term["amp_x"] * math.cos(w * term["n_x"] * t + term["phase_x"])
        uy += term["amp_y"] * math.cos(w * term["n_y"] * t + term["phase_y"])
    return ux, uy


@dataclass
class Sample:
    lr: np.ndarray        # (3, h, w) float32, sentinel at dropped sites
    mask: np.ndarray      # (h, w) bool
    hr: np.ndarray        # (3, 4h, 4w) float32
    ux: float
    uy: float
    kappa: float
    dx_hr: float
    dt_snap: float
    factor: int
    norm: float
    meta: dict
    path: str
    base_path: str        # the underlying sample container (views resolve here)


def load_sample(root, rel_path: str, corrupt: bool = True) -> Sample:
    """Load one sample or view file, resolving base references."""
    meta, arrays = read_plm(os.path.join(root, rel_path))
    base_meta = meta
    if "base" in meta:
        base_meta, base_arrays = read_plm(os.path.join(root, meta["base"]))
        merged = dict(base_arrays)
        merged.update(arrays)
        arrays = merged
    lr = arrays["lr"].astype(np.float32)
    hr = arrays["hr"].astype(np.float32)
    mask = arrays["mask"].astype(bool)
    if corrupt and not meta.get("prefilled", False):
        lr = lr.copy()
        lr[:, ~mask] = DROP_SENTINEL
    ux, uy = wind_velocity(base_meta["wind"], base_meta["t_center"])
    return Sample(
        lr=lr, mask=mask, hr=hr, ux=ux, uy=uy,
        kappa=base_meta["kappa"], dx_hr=base_meta["dx_hr"],
        dt_snap=base_meta["dt_snap"], factor=base_meta["factor"],
        norm=base_meta["norm"], meta=base_meta, path=rel_path,
        base_path=meta.get("base", rel_path),
    )


class Corpus:
    """All samples of one split held in memory, with patch batch sampling.

    manifest picks the data view (base corpus or dwn-HR inputs);
    mask_manifest optionally overlays drop masks from another view, keyed by
    sample filename, so downsampled inputs can be corrupted at any rate.
    """

    def __init__(self, root, manifest: str = "manifest.jsonl", split: str = "train",
                 mask_manifest: str | None = None):
        self.root = str(root)
        rows = [r for r in read_manifest(os.path.join(self.root, manifest))
                if split is None or r["split"] == split]
        if not rows:
            raise ValueError(f"no samples in split {split!r} of {manifest}")
        self.rows = rows
        mask_paths = {}
        if mask_manifest is not None:
            for r in read_manifest(os.path.join(self.root, mask_manifest)):
                mask_paths[os.path.basename(r["path"])] = r["path"]
        self.samples = []
        for r in rows:
            sample = load_sample(self.root, r["path"],
                                 corrupt=mask_manifest is None)
            if mask_manifest is not None:
                view = mask_paths[os.path.basename(r["path"])]
                _, arrays = read_plm(os.path.join(self.root, view))
                mask = arrays["mask"].astype(bool)
                lr = sample.lr.copy()
                lr[:, ~mask] = DROP_SENTINEL
                sample.lr = lr
                sample.mask = mask
            self.samples.append(sample)

    def __len__(self):
        return len(self.samples)

    def patch_batch(self, rng: np.random.Generator, batch_size: int, lr_patch: int):
        """Random aligned (LR, HR) patch pairs plus per-sample physics scalars.

        Returns dict of numpy arrays: lr (B,3,p,p), hr (B,3,fp,fp), ux, uy,
        kappa, dx, dt (each (B,)).
        """
        lrs, hrs, uxs, uys, kaps, dxs, dts = [], [], [], [], [], [], []
        for _ in range(batch_size):
            s = self.samples[rng.integers(len(self.samples))]
            f = s.factor
            h, w = s.lr.shape[1:]
            ix = int(rng.integers(w - lr_patch + 1))
            iy = int(rng.integers(h - lr_patch + 1))
            hp = lr_patch * f
            lrs.append(s.lr[:, iy:iy + lr_patch, ix:ix + lr_patch])
            hrs.append(s.hr[:, f * iy:f * iy + hp, f * ix:f * ix + hp])
            uxs.append(s.ux)
            uys.append(s.uy)
            kaps.append(s.kappa)
            dxs.append(s.dx_hr)
            dts.append(s.dt_snap)
        return {
            "lr": np.stack(lrs).astype(np.float32),
            "hr": np.stack(hrs).astype(np.float32),
            "ux": np.asarray(uxs), "uy": np.asarray(uys),
            "kappa": np.asarray(kaps), "dx": np.asarray(dxs),
            "dt": np.asarray(dts),
        }


def ensure_drop_view(root, rate: float) -> str:
    """Materialize (via the pipeline CLI) and return the drop-view manifest."""
    name = f"drop_{rate:g}"
    manifest = os.path.join(str(root), name, "manifest.jsonl")
    if not os.path.exists(manifest):
        pipeline_cli(["drop", "--root", root, "--rate", rate, "--out", name])
    return os.path.join(name, "manifest.jsonl")


def ensure_dwn_view(root) -> str:
    """Materialize (via the pipeline CLI) and return the dwn-HR view manifest."""
    manifest = os.path.join(str(root), "dwn_hr", "manifest.jsonl")
    if not os.path.exists(manifest):
        pipeline_cli(["dwn-hr", "--root", root, "--out", "dwn_hr"])
    return os.path.join("dwn_hr", "manifest.jsonl")

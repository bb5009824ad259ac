"""End-to-end corpus builder and sample I/O.

A corpus is a directory: dataset.json (corpus-level config, wind, and the
normalization constant), samples/sample_*.plm1 (one container per sample),
and manifest.jsonl (one {path, seed, drop_rate, split} row per sample, in
index order). Regenerating with the same config is byte-identical.

Sample files store the clean LR stack, the presence mask for the sample's
assigned drop rate, and the HR stack; corruption (sentinel at dropped sites)
is applied when a sample is loaded, which is what lets one set of clean
stacks back any number of drop-rate views. Derived views (other drop rates,
downsampled-HR inputs) are small container files that reference the base
sample.

Every random draw flows from the master seed through fixed derive_seed
streams, so any sample, mask, or split can be reproduced in isolation.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (Field, Mask, Rng64, SnapshotStack, canonical_json,
                   derive_seed, read_container, write_container)
from .residual import PhysicsMeta
from .resample import apply_mask, bicubic_downsample, drop_pixels
from .scene import Domain, SceneSpec, SolutionBank, build_bank, compose, sample_scene
from .solver import SolverConfig
from .wind import WindModel, sample_wind

# Substream tags off the master seed (never reuse numbers).
_STREAM_WIND = 1
_STREAM_CALIB = 2
_STREAM_SAMPLE = 3
# Substream tags off a sample seed.
_SAMPLE_DRAWS = 0
_SAMPLE_SPLIT = 1
_SAMPLE_MASK = 2

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetConfig:
    """Everything that determines a corpus, with desk defaults.

    The physics values (kappa, wind, time steps, domain extents) are this
    pipeline's choices and are freely configurable; the spec of record for
    a given corpus is the dataset.json written next to it.
    """

    # domain
    domain: Domain = field(default_factory=Domain)
    # solver (dyadic steps keep accumulated step times exact in floats)
    kappa: float = 0.15
    dt_lr: float = 0.25
    dt_hr: float = 0.03125
    # wind
    u0: float = 0.5
    n_wind_terms: int = 3
    max_amp_ratio: float = 0.1
    period: float = 25.0
    # snapshots / bank
    dt_snap: float = 2.5
    duration: float = 75.0
    n_phases: int = 10
    # scene
    n_sources: int = 20
    max_flux: float = 1.0
    radius: float = 1.0
    max_burst: int = 3
    max_gap: int = 6
    # corpus
    n_samples: int = 2000
    drop_rates: tuple = (0.0, 0.2, 0.4, 0.6)
    split_fractions: tuple = (0.8, 0.1, 0.1)
    master_seed: int = 0
    obs_min_periods: float = 1.0
    obs_max_frac: float = 0.9
    norm_margin: float = 1.1
    n_calib_scenes: int = 16

    def __post_init__(self):
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if any(not 0.0 <= r <= 1.0 for r in self.drop_rates):
            raise ValueError("drop rates must lie in [0, 1]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        object.__setattr__(self, "drop_rates", tuple(float(r) for r in self.drop_rates))
        object.__setattr__(self, "split_fractions", tuple(float(f) for f in self.split_fractions))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = self.domain
        return {
            "domain": {"width_lr": d.width_lr, "height_lr": d.height_lr,
                       "dx_lr": d.dx_lr, "factor": d.factor},
            "solver": {"kappa": self.kappa, "dt_lr": self.dt_lr, "dt_hr": self.dt_hr},
            "wind": {"u0": self.u0, "n_terms": self.n_wind_terms,
                     "max_amp_ratio": self.max_amp_ratio, "period": self.period},
            "snapshots": {"dt_snap": self.dt_snap, "duration": self.duration,
                          "n_phases": self.n_phases},
            "scene": {"n_sources": self.n_sources, "max_flux": self.max_flux,
                      "radius": self.radius, "max_burst": self.max_burst,
                      "max_gap": self.max_gap},
            "dataset": {"n_samples": self.n_samples,
                        "drop_rates": list(self.drop_rates),
                        "split_fractions": {k: v for k, v in zip(SPLIT_NAMES, self.split_fractions)},
                        "master_seed": self.master_seed,
                        "obs_min_periods": self.obs_min_periods,
                        "obs_max_frac": self.obs_max_frac,
                        "norm_margin": self.norm_margin,
                        "n_calib_scenes": self.n_calib_scenes},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetConfig":
        base = cls()
        dom = data.get("domain", {})
        sol = data.get("solver", {})
        wnd = data.get("wind", {})
        snp = data.get("snapshots", {})
        scn = data.get("scene", {})
        dst = data.get("dataset", {})
        splits = dst.get("split_fractions")
        if isinstance(splits, dict):
            splits = tuple(splits[k] for k in SPLIT_NAMES)
        return cls(
            domain=Domain(
                width_lr=dom.get("width_lr", base.domain.width_lr),
                height_lr=dom.get("height_lr", base.domain.height_lr),
                dx_lr=dom.get("dx_lr", base.domain.dx_lr),
                factor=dom.get("factor", base.domain.factor)),
            kappa=sol.get("kappa", base.kappa),
            dt_lr=sol.get("dt_lr", base.dt_lr),
            dt_hr=sol.get("dt_hr", base.dt_hr),
            u0=wnd.get("u0", base.u0),
            n_wind_terms=wnd.get("n_terms", base.n_wind_terms),
            max_amp_ratio=wnd.get("max_amp_ratio", base.max_amp_ratio),
            period=wnd.get("period", base.period),
            dt_snap=snp.get("dt_snap", base.dt_snap),
            duration=snp.get("duration", base.duration),
            n_phases=snp.get("n_phases", base.n_phases),
            n_sources=scn.get("n_sources", base.n_sources),
            max_flux=scn.get("max_flux", base.max_flux),
            radius=scn.get("radius", base.radius),
            max_burst=scn.get("max_burst", base.max_burst),
            max_gap=scn.get("max_gap", base.max_gap),
            n_samples=dst.get("n_samples", base.n_samples),
            drop_rates=tuple(dst.get("drop_rates", base.drop_rates)),
            split_fractions=tuple(splits) if splits is not None else base.split_fractions,
            master_seed=dst.get("master_seed", base.master_seed),
            obs_min_periods=dst.get("obs_min_periods", base.obs_min_periods),
            obs_max_frac=dst.get("obs_max_frac", base.obs_max_frac),
            norm_margin=dst.get("norm_margin", base.norm_margin),
            n_calib_scenes=dst.get("n_calib_scenes", base.n_calib_scenes),
        )

    # -- derived pieces -----------------------------------------------------

    def solver_configs(self):
        d = self.domain
        lr = SolverConfig(d.width_lr, d.height_lr, d.dx_lr, self.dt_lr, self.kappa)
        hr = SolverConfig(d.width_hr, d.height_hr, d.dx_hr, self.dt_hr, self.kappa)
        return lr, hr

    def wind_model(self) -> WindModel:
        rng = Rng64(derive_seed(self.master_seed, _STREAM_WIND))
        return sample_wind(rng, self.u0, self.n_wind_terms, self.max_amp_ratio,
                           self.period)

    def snaps_per_period(self) -> int:
        return int(round(self.period / self.dt_snap))

    def last_snapshot_index(self) -> int:
        return int(round(self.duration / self.dt_snap))

    def valid_t_indices(self):
        lo = int(math.ceil(self.obs_min_periods * self.period / self.dt_snap))
        hi = min(int(math.floor(self.obs_max_frac * self.last_snapshot_index())),
                 self.last_snapshot_index() - 1)
        lo = max(lo, 1)
        if hi < lo:
            raise ValueError(
                "no valid observation snapshots: lengthen duration or relax the window")
        return list(range(lo, hi + 1))

    def start_times_for(self, t_index: int):
        spp = self.snaps_per_period()
        return [s * self.dt_snap for s in range(t_index + 1)
                if (s % spp) < self.n_phases]


def mask_seed(sample_seed: int, rate: float) -> int:
    """Seed of a sample's drop mask at a given rate; pure function of both."""
    rate_key = int(round(rate * 1e9))
    return derive_seed(derive_seed(sample_seed, _SAMPLE_MASK), rate_key)


def split_for(sample_seed: int, fractions) -> str:
    """Deterministic split assignment from the sample's seed."""
    u = Rng64(derive_seed(sample_seed, _SAMPLE_SPLIT)).next_f64()
    acc = 0.0
    for name, frac in zip(SPLIT_NAMES, fractions):
        acc += frac
        if u < acc:
            return name
    return SPLIT_NAMES[-1]


def build_corpus_bank(config: DatasetConfig, workers: int = 1) -> SolutionBank:
    lr, hr = config.solver_configs()
    return build_bank(lr, hr, config.wind_model(), config.n_phases, config.dt_snap,
                      config.duration, config.radius, config.domain, workers=workers)


def calibrate_norm(config: DatasetConfig, bank: SolutionBank) -> float:
    """Corpus normalization constant from a calibration run.

    Compositions are drawn with the same sampler as the corpus itself and the
    margin sits on top of the worst pixel seen, so stored data spans most of
    [0, 1] (the rare excursion beyond the margin is clamped at write time).
    """
    calib_base = derive_seed(config.master_seed, _STREAM_CALIB)
    t_indices = config.valid_t_indices()
    worst = 0.0
    for m in range(config.n_calib_scenes):
        rng = Rng64(derive_seed(calib_base, m))
        t_index = t_indices[rng.next_below(len(t_indices))]
        scene = sample_scene(rng, config.n_sources, config.max_flux, config.domain,
                             config.start_times_for(t_index), config.radius,
                             config.max_burst, config.max_gap)
        lr_stack, hr_stack = compose(scene, bank, t_index, norm=1.0)
        worst = max(worst, float(lr_stack.as_array().max()),
                    float(hr_stack.as_array().max()))
    if worst <= 0.0:
        raise ValueError("calibration produced an all-zero corpus; check max_flux")
    return config.norm_margin * worst


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplePair:
    """One loaded training/eval record: corrupted LR, mask, HR, physics meta."""

    lr: SnapshotStack
    mask: Mask
    hr: SnapshotStack
    meta: PhysicsMeta
    info: dict

    def __post_init__(self):
        f = self.info.get("factor", 4)
        if (self.hr.width, self.hr.height) != (self.lr.width * f, self.lr.height * f):
            raise ValueError("HR dims must be factor x LR dims")
        if (self.mask.width, self.mask.height) != (self.lr.width, self.lr.height):
            raise ValueError("mask dims must match LR")


def _sample_record(config: DatasetConfig, bank: SolutionBank, norm: float,
                   wind: WindModel, index: int):
    """Deterministically realize sample `index`: scene, stacks, mask, meta."""
    sample_seed = derive_seed(derive_seed(config.master_seed, _STREAM_SAMPLE), index)
    rng = Rng64(derive_seed(sample_seed, _SAMPLE_DRAWS))
    t_indices = config.valid_t_indices()
    t_index = t_indices[rng.next_below(len(t_indices))]
    scene = sample_scene(rng, config.n_sources, config.max_flux, config.domain,
                         config.start_times_for(t_index), config.radius,
                         config.max_burst, config.max_gap)
    lr_stack, hr_stack = compose(scene, bank, t_index, norm=norm)
    rate = config.drop_rates[index % len(config.drop_rates)]
    split = split_for(sample_seed, config.split_fractions)
    meta = {
        "schema": "plumesr-sample-v1",
        "index": index,
        "seed": sample_seed,
        "split": split,
        "drop_rate": rate,
        "t_index": t_index,
        "t_center": t_index * config.dt_snap,
        "dt_snap": config.dt_snap,
        "kappa": config.kappa,
        "dx_lr": config.domain.dx_lr,
        "dx_hr": config.domain.dx_hr,
        "factor": config.domain.factor,
        "norm": norm,
        "wind": wind.to_meta(),
        "scene": scene.to_meta(),
    }
    return lr_stack, hr_stack, rate, meta


def sample_filename(index: int) -> str:
    return f"samples/sample_{index:05d}.plm1"


_GEN_STATE = None


def _write_sample(index: int):
    config, bank, norm, wind, root = _GEN_STATE
    lr_stack, hr_stack, rate, meta = _sample_record(config, bank, norm, wind, index)
    _, mask = drop_pixels(lr_stack, rate, mask_seed(meta["seed"], rate))
    rel = sample_filename(index)
    write_container(os.path.join(root, rel), meta, [
        ("lr", np.clip(lr_stack.as_array(), 0.0, 1.0).astype(np.float32)),
        ("mask", mask.bits.astype(np.uint8)),
        ("hr", np.clip(hr_stack.as_array(), 0.0, 1.0).astype(np.float32)),
    ])
    return {"path": rel, "seed": meta["seed"], "drop_rate": rate, "split": meta["split"]}


def generate_dataset(config: DatasetConfig, root, workers: int = 1,
                     bank: SolutionBank | None = None) -> str:
    """Build the whole corpus under root; returns the manifest path.

    Per sample: derive the seed, sample the scene, compose the LR/HR pair
    from the bank, cut the drop mask at the sample's assigned rate, clamp to
    [0, 1], persist. The manifest and dataset.json are written last so a
    complete manifest implies a complete corpus.
    """
    global _GEN_STATE
    os.makedirs(os.path.join(root, "samples"), exist_ok=True)
    if bank is None:
        bank = build_corpus_bank(config, workers=workers)
    wind = config.wind_model()
    norm = calibrate_norm(config, bank)

    import multiprocessing

    _GEN_STATE = (config, bank, norm, wind, str(root))
    try:
        # workers share the bank through fork; spawn would re-pickle it per
        # task, so fall back to sequential generation there
        if workers > 1 and multiprocessing.get_start_method() == "fork":
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_write_sample, range(config.n_samples)))
        else:
            rows = [_write_sample(i) for i in range(config.n_samples)]
    finally:
        _GEN_STATE = None

    with open(os.path.join(root, "dataset.json"), "w") as fh:
        fh.write(canonical_json({
            "schema": "plumesr-dataset-v1",
            "config": config.to_dict(),
            "norm": norm,
            "wind": wind.to_meta(),
            "n_snapshots": config.last_snapshot_index() + 1,
        }))
        fh.write("\n")
    manifest_path = os.path.join(root, "manifest.jsonl")
    with open(manifest_path, "w") as fh:
        for row in rows:
            fh.write(canonical_json(row))
            fh.write("\n")
    return manifest_path


def read_manifest(root):
    import json

    rows = []
    with open(os.path.join(root, "manifest.jsonl")) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _meta_to_physics(meta: dict) -> PhysicsMeta:
    return PhysicsMeta(
        wind=WindModel.from_meta(meta["wind"]),
        scene=SceneSpec.from_meta(meta["scene"]),
        kappa=meta["kappa"],
        dx=meta["dx_hr"],
        dt_snap=meta["dt_snap"],
        t_center=meta["t_center"],
        norm=meta["norm"],
    )


def load_sample(root, rel_path: str, rate: float | None = None,
                corrupt: bool = True) -> SamplePair:
    """Load one sample (or derived view) and materialize its drop view.

    rate=None uses the mask stored with the sample; any other rate derives
    the view mask from the same seeding rule, so views never need to be
    materialized on disk. corrupt=False returns the clean LR (mask still
    attached) for consumers that need the uncorrupted pair.
    """
    meta, arrays = read_container(os.path.join(root, rel_path))

    base_meta = meta
    if "base" in meta:
        base_meta, base_arrays = read_container(os.path.join(root, meta["base"]))
        merged = dict(base_arrays)
        merged.update(arrays)
        arrays = merged

    dt_snap = base_meta["dt_snap"]
    lr = SnapshotStack.from_array(arrays["lr"].astype(np.float64),
                                  base_meta["dx_lr"], dt_snap)
    hr = SnapshotStack.from_array(arrays["hr"].astype(np.float64),
                                  base_meta["dx_hr"], dt_snap)
    for name, stack in (("lr", lr), ("hr", hr)):
        a = stack.as_array()
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError(f"{rel_path}: {name} values outside [0, 1]")

    if rate is None:
        mask = Mask(arrays["mask"].astype(bool))
        rate = float(meta.get("drop_rate", base_meta["drop_rate"]))
    else:
        _, mask = drop_pixels(lr, rate, mask_seed(base_meta["seed"], rate))

    info = dict(base_meta)
    info["drop_rate"] = rate
    if "base" in meta:
        info["view"] = meta.get("schema", "view")
    # prefilled views already replaced the holes; re-masking would undo that
    corrupt = corrupt and not meta.get("prefilled", False)
    return SamplePair(
        lr=apply_mask(lr, mask) if corrupt else lr,
        mask=mask,
        hr=hr,
        meta=_meta_to_physics(base_meta),
        info=info,
    )


# ---------------------------------------------------------------------------
# Patches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatchPair:
    lr: np.ndarray      # (3, p, p)
    mask: np.ndarray    # (p, p) bool
    hr: np.ndarray      # (3, factor*p, factor*p)
    origin: tuple       # (ix, iy) in LR cells


def extract_patches(sample: SamplePair, lr_patch: int = 16, rng: Rng64 | None = None,
                    n_patches: int = 1, origins=None):
    """Cut aligned (LR, HR) patch pairs; the HR origin is factor x the LR one.

    Random origins are uniform over valid positions and deterministic for a
    given rng; pass explicit origins (e.g. a full tiling) to override.
    """
    f = sample.info.get("factor", 4)
    w, h = sample.lr.width, sample.lr.height
    if lr_patch > w or lr_patch > h:
        raise ValueError(f"patch {lr_patch} larger than LR frame {w}x{h}")
    if origins is None:
        if rng is None:
            raise ValueError("need an rng when origins are not given")
        origins = [(rng.next_below(w - lr_patch + 1), rng.next_below(h - lr_patch + 1))
                   for _ in range(n_patches)]
    lr_arr = sample.lr.as_array()
    hr_arr = sample.hr.as_array()
    out = []
    for ix, iy in origins:
        if not (0 <= ix <= w - lr_patch and 0 <= iy <= h - lr_patch):
            raise ValueError(f"origin {(ix, iy)} does not fit a {lr_patch} patch")
        hp = lr_patch * f
        out.append(PatchPair(
            lr=lr_arr[:, iy:iy + lr_patch, ix:ix + lr_patch].copy(),
            mask=sample.mask.bits[iy:iy + lr_patch, ix:ix + lr_patch].copy(),
            hr=hr_arr[:, f * iy:f * iy + hp, f * ix:f * ix + hp].copy(),
            origin=(ix, iy),
        ))
    return out


# ---------------------------------------------------------------------------
# Derived views
# ---------------------------------------------------------------------------

def write_drop_view(root, out_dir: str, rate: float):
    """Materialize mask-only view files for every sample at a new drop rate."""
    rows = read_manifest(root)
    os.makedirs(os.path.join(root, out_dir, "samples"), exist_ok=True)
    out_rows = []
    for row in rows:
        meta, arrays = read_container(os.path.join(root, row["path"]))
        lr = SnapshotStack.from_array(arrays["lr"].astype(np.float64),
                                      meta["dx_lr"], meta["dt_snap"])
        _, mask = drop_pixels(lr, rate, mask_seed(meta["seed"], rate))
        rel = os.path.join(out_dir, row["path"])
        view_meta = {
            "schema": "plumesr-dropview-v1",
            "base": row["path"],
            "drop_rate": rate,
        }
        write_container(os.path.join(root, rel), view_meta,
                        [("mask", mask.bits.astype(np.uint8))])
        out_rows.append({"path": rel, "seed": row["seed"], "drop_rate": rate,
                         "split": row["split"]})
    manifest = os.path.join(root, out_dir, "manifest.jsonl")
    with open(manifest, "w") as fh:
        for row in out_rows:
            fh.write(canonical_json(row))
            fh.write("\n")
    return manifest


def write_prefill_view(root, out_dir: str, rate: float):
    """Materialize bicubic-filled LR inputs at a drop rate.

    The two-step evaluation protocol (fill the holes first, then apply a
    model trained without missing pixels) consumes these: each view file
    holds the corrupted-then-filled LR, flagged so loaders do not re-apply
    the mask.
    """
    from .resample import fill_missing

    rows = read_manifest(root)
    os.makedirs(os.path.join(root, out_dir, "samples"), exist_ok=True)
    out_rows = []
    for row in rows:
        meta, arrays = read_container(os.path.join(root, row["path"]))
        lr = SnapshotStack.from_array(arrays["lr"].astype(np.float64),
                                      meta["dx_lr"], meta["dt_snap"])
        _, mask = drop_pixels(lr, rate, mask_seed(meta["seed"], rate))
        filled = fill_missing(apply_mask(lr, mask), mask)
        rel = os.path.join(out_dir, row["path"])
        view_meta = {
            "schema": "plumesr-prefillview-v1",
            "base": row["path"],
            "drop_rate": rate,
            "prefilled": True,
        }
        write_container(os.path.join(root, rel), view_meta, [
            ("lr", np.clip(filled.as_array(), 0.0, 1.0).astype(np.float32)),
            ("mask", mask.bits.astype(np.uint8)),
        ])
        out_rows.append({"path": rel, "seed": row["seed"], "drop_rate": rate,
                         "split": row["split"]})
    manifest = os.path.join(root, out_dir, "manifest.jsonl")
    with open(manifest, "w") as fh:
        for row in out_rows:
            fh.write(canonical_json(row))
            fh.write("\n")
    return manifest


def make_dwn_hr_inputs(root, out_dir: str = "dwn_hr"):
    """Derived corpus whose LR inputs are bicubically downsampled HR.

    The drop masks are reused unchanged; the view is flagged so evaluation
    can distinguish downsampled-HR inputs from native-LR inputs.
    """
    rows = read_manifest(root)
    os.makedirs(os.path.join(root, out_dir, "samples"), exist_ok=True)
    out_rows = []
    for row in rows:
        meta, arrays = read_container(os.path.join(root, row["path"]))
        hr = SnapshotStack.from_array(arrays["hr"].astype(np.float64),
                                      meta["dx_hr"], meta["dt_snap"])
        dwn = bicubic_downsample(hr, meta["factor"])
        rel = os.path.join(out_dir, row["path"])
        view_meta = {
            "schema": "plumesr-dwnview-v1",
            "base": row["path"],
            "drop_rate": row["drop_rate"],
            "dwn_hr": True,
        }
        write_container(os.path.join(root, rel), view_meta, [
            ("lr", np.clip(dwn.as_array(), 0.0, 1.0).astype(np.float32)),
        ])
        out_rows.append({"path": rel, "seed": row["seed"],
                         "drop_rate": row["drop_rate"], "split": row["split"]})
    manifest = os.path.join(root, out_dir, "manifest.jsonl")
    with open(manifest, "w") as fh:
        for row in out_rows:
            fh.write(canonical_json(row))
            fh.write("\n")
    return manifest

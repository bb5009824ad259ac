"""PSNR, SSIM, the physics-consistency metric, and report assembly.

Scores are computed on [0, 1] data. PSNR is taken over all three channels of
a stack jointly (the sample unit is the 3-channel stack); a middle-channel
variant rides along in the per-sample breakdown for diagnosis. SSIM uses the
canonical 11x11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03; the window
configuration is recorded in the report metadata since the choice is not
universal across libraries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Field, SnapshotStack
from .residual import PhysicsMeta, physics_loss

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 1.0


def _as_channels(x) -> np.ndarray:
    """Accept a SnapshotStack, Field, or array; return (channels, h, w)."""
    if isinstance(x, SnapshotStack):
        return x.as_array()
    if isinstance(x, Field):
        return x.values[None, :, :]
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None, :, :]
    if arr.ndim == 3:
        return arr
    raise ValueError(f"expected 2D or 3D data, got shape {arr.shape}")


def _paired(a, b):
    aa, bb = _as_channels(a), _as_channels(b)
    if aa.shape != bb.shape:
        raise ValueError(f"shape mismatch: {aa.shape} vs {bb.shape}")
    return aa, bb


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB over all pixels and channels.

    Data range is taken as [0, 1]. Identical inputs return inf (serialized
    as the string "inf" in reports).
    """
    aa, bb = _paired(a, b)
    mse = float(np.mean((aa - bb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE ** 2 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    w = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def _valid_filter(img: np.ndarray, w1d: np.ndarray) -> np.ndarray:
    """Separable windowed mean over fully interior (valid) positions."""
    half = (len(w1d) - 1) // 2
    out = ndimage.correlate1d(img, w1d, axis=0, mode="constant")
    out = ndimage.correlate1d(out, w1d, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(a, b) -> float:
    """Structural similarity, mean over valid windows and channels."""
    aa, bb = _paired(a, b)
    if aa.shape[-1] < SSIM_WINDOW or aa.shape[-2] < SSIM_WINDOW:
        raise ValueError(
            f"image {aa.shape[-2:]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w1d = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2

    scores = []
    for x, y in zip(aa, bb):
        mu_x = _valid_filter(x, w1d)
        mu_y = _valid_filter(y, w1d)
        xx = _valid_filter(x * x, w1d) - mu_x * mu_x
        yy = _valid_filter(y * y, w1d) - mu_y * mu_y
        xy = _valid_filter(x * y, w1d) - mu_x * mu_y
        s = ((2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)) \
            / ((mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2))
        scores.append(np.mean(s))
    return float(np.mean(scores))


def physics_metric(sr: SnapshotStack, hr: SnapshotStack, meta: PhysicsMeta) -> float:
    """Physics consistency of a single pair; corpora are averaged by evaluate."""
    return physics_loss(sr, hr, meta)


def residual_map(sr: SnapshotStack, hr: SnapshotStack) -> Field:
    """Signed per-pixel difference of the middle channels, for plotting."""
    if (sr.width, sr.height) != (hr.width, hr.height):
        raise ValueError("stack dims differ")
    return Field(sr.channels[1].values - hr.channels[1].values, sr.dx)


def psnr_delta_to_rms_ratio(delta_db: float) -> float:
    """Fractional rms-error decrease implied by a PSNR gain of delta_db."""
    return 1.0 - 10.0 ** (-delta_db / 20.0)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleScores:
    sample_id: str
    psnr_db: float
    psnr_mid_db: float
    one_minus_ssim: float
    l_phys: float


@dataclass(frozen=True)
class ReportRow:
    model: str
    drop_rate: float
    psnr_db: float
    one_minus_ssim: float
    l_phys: float
    n_samples: int
    per_sample: tuple


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple

    def to_jsonable(self) -> dict:
        def num(x):
            return "inf" if math.isinf(x) else x

        return {
            "schema": "plumesr-report-v1",
            "ssim_window": {"size": SSIM_WINDOW, "sigma": SSIM_SIGMA,
                            "k1": SSIM_K1, "k2": SSIM_K2},
            "rows": [
                {
                    "model": r.model,
                    "drop_rate": r.drop_rate,
                    "psnr_db": num(r.psnr_db),
                    "one_minus_ssim": r.one_minus_ssim,
                    "l_phys": r.l_phys,
                    "n_samples": r.n_samples,
                    "per_sample": [
                        {"sample": s.sample_id, "psnr_db": num(s.psnr_db),
                         "psnr_mid_db": num(s.psnr_mid_db),
                         "one_minus_ssim": s.one_minus_ssim, "l_phys": s.l_phys}
                        for s in r.per_sample
                    ],
                }
                for r in self.rows
            ],
        }

    def text_table(self) -> str:
        header = f"{'model':<12} {'drop':>5} {'psnr_db':>9} {'1-ssim':>11} {'l_phys':>11} {'n':>5}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            psnr_s = "inf" if math.isinf(r.psnr_db) else f"{r.psnr_db:.2f}"
            lines.append(
                f"{r.model:<12} {r.drop_rate:>5.2f} {psnr_s:>9} "
                f"{r.one_minus_ssim:>11.3e} {r.l_phys:>11.3e} {r.n_samples:>5}")
        return "\n".join(lines)


def evaluate(predictions, truths, metas, models=None, drop_rates=None,
             sample_ids=None) -> MetricsReport:
    """Score aligned prediction/truth lists and aggregate per (model, rate).

    models and drop_rates may be scalars (one group) or aligned lists; rows
    come out in first-appearance order, per-row aggregates are the means of
    the per-sample breakdown.
    """
    n = len(predictions)
    if n == 0:
        raise ValueError("no predictions to evaluate")
    if len(truths) != n or len(metas) != n:
        raise ValueError("predictions, truths and metas must have equal length")
    if models is None or isinstance(models, str):
        models = [models or "model"] * n
    if drop_rates is None or isinstance(drop_rates, (int, float)):
        drop_rates = [float(drop_rates or 0.0)] * n
    if sample_ids is None:
        sample_ids = [f"{i:05d}" for i in range(n)]
    if not (len(models) == len(drop_rates) == len(sample_ids) == n):
        raise ValueError("label lists must align with predictions")

    groups: dict = {}
    order = []
    for pred, truth, meta, model, rate, sid in zip(
            predictions, truths, metas, models, drop_rates, sample_ids):
        scores = SampleScores(
            sample_id=str(sid),
            psnr_db=psnr(pred, truth),
            psnr_mid_db=psnr(pred.channels[1], truth.channels[1]),
            one_minus_ssim=1.0 - ssim(pred, truth),
            l_phys=physics_loss(pred, truth, meta),
        )
        key = (model, float(rate))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(scores)

    rows = []
    for model, rate in order:
        per = tuple(groups[(model, rate)])
        rows.append(ReportRow(
            model=model,
            drop_rate=rate,
            psnr_db=float(np.mean([s.psnr_db for s in per])),
            one_minus_ssim=float(np.mean([s.one_minus_ssim for s in per])),
            l_phys=float(np.mean([s.l_phys for s in per])),
            n_samples=len(per),
            per_sample=per,
        ))
    return MetricsReport(tuple(rows))

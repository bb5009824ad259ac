"""Physics residual of the governing transport equation and the losses on it.

The residual R(C) is the discretized left-minus-right side of the equation:
time derivative + flux divergence - diffusion - source. On an exact solution
it reduces to truncation error, so the physics consistency loss compares
residuals of a reconstruction and the ground truth rather than driving either
to zero.

Stencils here are deliberately coarser than the solver's: centered 2-point
first derivatives, 3-point second derivatives, and a centered difference of
the outer stack channels in time. The loss compares residuals of like
discretization, evaluated on the stack's own grid with periodic wraparound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Field, SnapshotStack
from .scene import SceneSpec
from .wind import WindModel, wind_at


@dataclass(frozen=True)
class PhysicsMeta:
    """Physics constants a sample carries so its residual can be evaluated.

    norm is the corpus normalization constant: stored concentrations are
    physical values divided by norm, so the source term is scaled the same
    way before it enters the residual.
    """

    wind: WindModel
    scene: SceneSpec | None
    kappa: float
    dx: float
    dt_snap: float
    t_center: float
    norm: float = 1.0

    def __post_init__(self):
        if not self.dx > 0 or not self.dt_snap > 0:
            raise ValueError("dx and dt_snap must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if not self.norm > 0:
            raise ValueError("norm must be positive")


@dataclass(frozen=True)
class LossWeights:
    """Total-loss weighting: pixel + eta * physics, averaged over a batch."""

    eta: float = 100.0
    batch_size: int = 1

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _check_dims(a: SnapshotStack, b: SnapshotStack) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"stack dims differ: {(a.width, a.height)} vs {(b.width, b.height)}")


def residual_field(stack: SnapshotStack, meta: PhysicsMeta) -> Field:
    """Pointwise physics residual of a 3-snapshot stack at its middle time.

    R = (C(t+1) - C(t-1)) / (2 dt_snap) + u(t_center) . grad C(t)
        - kappa * laplacian C(t) - S(t_center),
    with 2nd-order centered spatial stencils and periodic wraparound. The
    advective term is the flux divergence, which for the spatially constant
    wind equals u . grad C.
    """
    if stack.width < 3 or stack.height < 3:
        raise ValueError("residual stencils need at least 3 cells per axis")
    if abs(stack.dx - meta.dx) > 1e-12:
        raise ValueError(f"stack dx {stack.dx} does not match meta dx {meta.dx}")
    past, mid, future = (f.values for f in stack.channels)
    dx = meta.dx
    dt = stack.dt_snap

    ddt = (future - past) / (2.0 * dt)
    ux, uy = wind_at(meta.wind, meta.t_center)
    gx = (np.roll(mid, -1, axis=1) - np.roll(mid, 1, axis=1)) / (2.0 * dx)
    gy = (np.roll(mid, -1, axis=0) - np.roll(mid, 1, axis=0)) / (2.0 * dx)
    lap = (np.roll(mid, -1, axis=1) + np.roll(mid, 1, axis=1)
           + np.roll(mid, -1, axis=0) + np.roll(mid, 1, axis=0) - 4.0 * mid) / (dx * dx)

    r = ddt + ux * gx + uy * gy - meta.kappa * lap
    if meta.scene is not None:
        s = meta.scene.raster_at(meta.t_center, stack.width, stack.height, dx)
        if s is not None:
            r = r - s / meta.norm
    return Field(r, dx)


def physics_loss(sr: SnapshotStack, hr: SnapshotStack, meta: PhysicsMeta) -> float:
    """Mean absolute difference of the two stacks' physics residuals.

    The source term appears in both residuals and cancels in the difference,
    so the value is independent of the scene recorded in meta.
    """
    _check_dims(sr, hr)
    r_sr = residual_field(sr, meta)
    r_hr = residual_field(hr, meta)
    return float(np.mean(np.abs(r_sr.values - r_hr.values)))


def pixel_loss(sr: SnapshotStack, hr: SnapshotStack) -> float:
    """Mean absolute difference over all pixels and channels."""
    _check_dims(sr, hr)
    return float(np.mean(np.abs(sr.as_array() - hr.as_array())))


def total_loss(sr, hr, meta, weights: LossWeights) -> float:
    """Pixel loss plus eta times physics loss, averaged over the batch.

    Accepts a single (sr, hr, meta) triple or aligned sequences of them.
    With eta = 0 this is the plain pixel objective.
    """
    if isinstance(sr, SnapshotStack):
        sr, hr, meta = [sr], [hr], [meta]
    if not (len(sr) == len(hr) == len(meta)):
        raise ValueError("sr, hr and meta batches must have equal length")
    if len(sr) == 0:
        raise ValueError("empty batch")
    per_sample = [
        pixel_loss(s, h) + weights.eta * physics_loss(s, h, m)
        for s, h, m in zip(sr, hr, meta)
    ]
    return float(np.mean(per_sample))

"""Advection-diffusion integrator on a periodic 2D grid.

Spatial derivatives use 4th-order centered finite differences; time stepping
is classical RK4. The advective flux divergence for a spatially constant
wind factors as u . (centered gradient), which keeps the discrete operator
in conservative flux form: summed over the periodic grid every stencil
telescopes, so total mass is preserved to rounding for S = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a soft dependency
    numba = None

from .core import Field
from .wind import WindModel, wind_at

# Stability margins for explicit RK4 on the 4th-order stencils.
CFL_ADVECTION = 0.5    # dt <= CFL_ADVECTION * dx / u_max
CFL_DIFFUSION = 0.25   # dt <= CFL_DIFFUSION * dx^2 / kappa


class CflViolationError(ValueError):
    """Time step too large for the advective or diffusive stability bound."""


@dataclass(frozen=True)
class SolverConfig:
    """Grid and step sizes for one integration.

    The diffusive CFL bound is checked at construction; the advective bound
    needs the wind and is checked by check_cfl (step_rk4 re-checks it).
    """

    width: int
    height: int
    dx: float
    dt: float
    kappa: float
    t0: float = 0.0

    def __post_init__(self):
        if self.width < 5 or self.height < 5:
            raise ValueError("grid must be at least 5x5 for the 4th-order stencils")
        if not self.dx > 0 or not self.dt > 0:
            raise ValueError("dx and dt must be positive")
        if self.kappa < 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        if self.kappa > 0 and self.dt > CFL_DIFFUSION * self.dx ** 2 / self.kappa:
            raise CflViolationError(
                f"dt={self.dt} exceeds diffusive bound "
                f"{CFL_DIFFUSION * self.dx ** 2 / self.kappa:.6g} "
                f"(kappa={self.kappa}, dx={self.dx})")

    def check_cfl(self, wind: WindModel) -> None:
        u_max = wind.max_speed()
        if u_max > 0 and self.dt > CFL_ADVECTION * self.dx / u_max:
            raise CflViolationError(
                f"dt={self.dt} exceeds advective bound "
                f"{CFL_ADVECTION * self.dx / u_max:.6g} (u_max={u_max:.6g})")


@dataclass(frozen=True)
class PdeTerms:
    """Per-term decomposition of the right-hand side at one instant."""

    advection: Field   # -div(C u)
    diffusion: Field   # div(kappa grad C)
    source: Field      # S
    dcdt: Field        # their sum


def _shifts(c: np.ndarray, axis: int):
    """Periodic neighbours at offsets -2, -1, +1, +2 along an axis."""
    return (np.roll(c, 2, axis=axis), np.roll(c, 1, axis=axis),
            np.roll(c, -1, axis=axis), np.roll(c, -2, axis=axis))


def _rhs(c: np.ndarray, u, s: np.ndarray | None, dx: float, kappa: float):
    """dC/dt array for one evaluation: returns (advection, diffusion)."""
    ux, uy = u
    inv12dx = 1.0 / (12.0 * dx)
    inv12dx2 = 1.0 / (12.0 * dx * dx)

    xm2, xm1, xp1, xp2 = _shifts(c, axis=1)
    d1x = (xm2 - 8.0 * xm1 + 8.0 * xp1 - xp2) * inv12dx
    d2x = (-xm2 + 16.0 * xm1 - 30.0 * c + 16.0 * xp1 - xp2) * inv12dx2

    ym2, ym1, yp1, yp2 = _shifts(c, axis=0)
    d1y = (ym2 - 8.0 * ym1 + 8.0 * yp1 - yp2) * inv12dx
    d2y = (-ym2 + 16.0 * ym1 - 30.0 * c + 16.0 * yp1 - yp2) * inv12dx2

    advection = -(ux * d1x + uy * d1y)
    diffusion = kappa * (d2x + d2y)
    return advection, diffusion


if numba is not None:
    # Same expression per cell as _rhs, so the two paths agree bit for bit;
    # the compiled loop just skips the eight full-grid temporaries.
    @numba.njit(cache=True, fastmath=False)
    def _rhs_jit(c, ux, uy, kappa, dx, s, has_s, out):  # pragma: no cover - exercised via _eval_rhs
        h, w = c.shape
        inv12dx = 1.0 / (12.0 * dx)
        inv12dx2 = 1.0 / (12.0 * dx * dx)
        for j in range(h):
            jm2 = (j - 2) % h
            jm1 = (j - 1) % h
            jp1 = (j + 1) % h
            jp2 = (j + 2) % h
            for i in range(w):
                im2 = (i - 2) % w
                im1 = (i - 1) % w
                ip1 = (i + 1) % w
                ip2 = (i + 2) % w
                d1x = (c[j, im2] - 8.0 * c[j, im1] + 8.0 * c[j, ip1] - c[j, ip2]) * inv12dx
                d1y = (c[jm2, i] - 8.0 * c[jm1, i] + 8.0 * c[jp1, i] - c[jp2, i]) * inv12dx
                d2x = (-c[j, im2] + 16.0 * c[j, im1] - 30.0 * c[j, i]
                       + 16.0 * c[j, ip1] - c[j, ip2]) * inv12dx2
                d2y = (-c[jm2, i] + 16.0 * c[jm1, i] - 30.0 * c[j, i]
                       + 16.0 * c[jp1, i] - c[jp2, i]) * inv12dx2
                v = -(ux * d1x + uy * d1y) + kappa * (d2x + d2y)
                if has_s:
                    v += s[j, i]
                out[j, i] = v


_EMPTY = np.zeros((1, 1))


def _eval_rhs(c: np.ndarray, u, s: np.ndarray | None, dx: float, kappa: float) -> np.ndarray:
    """Full right-hand side (advection + diffusion + source) at one instant."""
    ux, uy = u
    if numba is not None:
        out = np.empty_like(c)
        if s is None:
            _rhs_jit(c, ux, uy, kappa, dx, _EMPTY, False, out)
        else:
            _rhs_jit(c, ux, uy, kappa, dx, s, True, out)
        return out
    adv, diff = _rhs(c, u, None, dx, kappa)
    return adv + diff if s is None else adv + diff + s


def _source_raster(scene, t: float, width: int, height: int, dx: float,
                   tol: float = 0.0) -> np.ndarray | None:
    if scene is None:
        return None
    return scene.raster_at(t, width, height, dx, tol)


def pde_terms(c: Field, wind_velocity, source, kappa: float) -> PdeTerms:
    """Evaluate each term of the governing equation on a field.

    wind_velocity is the (ux, uy) pair at the evaluation instant; source is
    the rasterized emission field at that instant (a Field, an array, or
    None for no sources). All stencils wrap periodically.
    """
    if c.width < 5 or c.height < 5:
        raise ValueError("pde_terms needs at least 5 cells per axis")
    adv, diff = _rhs(c.values, wind_velocity, None, c.dx, kappa)
    if source is None:
        s = np.zeros_like(c.values)
    elif isinstance(source, Field):
        s = source.values
    else:
        s = np.asarray(source, dtype=np.float64)
    if s.shape != c.values.shape:
        raise ValueError(f"source shape {s.shape} does not match field {c.values.shape}")
    dcdt = adv + diff + s
    return PdeTerms(Field(adv, c.dx), Field(diff, c.dx), Field(s.copy(), c.dx),
                    Field(dcdt, c.dx))


def _step_array(c: np.ndarray, t: float, config: SolverConfig, wind: WindModel,
                scene) -> np.ndarray:
    """One classical RK4 step on a raw array (no validation, hot path)."""
    dt = config.dt
    dx = config.dx
    kappa = config.kappa
    w, h = config.width, config.height
    # schedule boundaries are snapshot-aligned, many steps apart; a quarter
    # step absorbs rounding in the accumulated substep times
    tol = 0.25 * dt

    def rhs(ci, ti):
        s = _source_raster(scene, ti, w, h, dx, tol)
        return _eval_rhs(ci, wind_at(wind, ti), s, dx, kappa)

    k1 = rhs(c, t)
    k2 = rhs(c + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(c + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(c + dt * k3, t + dt)
    return c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_rk4(c: Field, t: float, config: SolverConfig, wind: WindModel,
             scene=None) -> Field:
    """Advance one step of size config.dt from time t.

    Wind and sources are evaluated at t, t + dt/2 and t + dt; boundaries are
    periodic. Raises CflViolationError if the step violates the advective
    stability bound for this wind.
    """
    if (c.height, c.width) != (config.height, config.width):
        raise ValueError("field dims do not match solver config")
    config.check_cfl(wind)
    return Field(_step_array(c.values, t, config, wind, scene), c.dx)


def integrate(config: SolverConfig, wind: WindModel, scene=None, n_steps: int = 0,
              snapshot_every: int = 1, initial: Field | None = None):
    """Integrate from t0 and collect snapshots.

    Returns the fields at steps 0, snapshot_every, 2*snapshot_every, ...,
    n_steps; snapshot k is at time t0 + k*snapshot_every*dt. The initial
    field defaults to all zeros (scenes start with an empty domain).
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    if n_steps % snapshot_every != 0:
        raise ValueError(
            f"snapshot_every={snapshot_every} must divide n_steps={n_steps}")
    config.check_cfl(wind)

    if initial is None:
        c = np.zeros((config.height, config.width))
    else:
        if (initial.height, initial.width) != (config.height, config.width):
            raise ValueError("initial field dims do not match solver config")
        c = initial.values.copy()

    snapshots = [Field(c.copy(), config.dx)]
    t = config.t0
    for step in range(1, n_steps + 1):
        c = _step_array(c, t, config, wind, scene)
        t = config.t0 + step * config.dt
        if step % snapshot_every == 0:
            snapshots.append(Field(c.copy(), config.dx))
    return snapshots

"""Random multi-source scenes and the superposition composer.

The governing equation is linear in the concentration and the wind is
spatially constant, so a multi-source solution is the sum of single-source
solutions translated to each source position. The wind repeats exactly every
period, so a source switched on at phase + k*period reuses the phase-run
solution shifted back k periods in time. build_bank runs the solver once per
start phase per resolution; compose assembles whole paired LR/HR samples
from the bank without touching the solver again.

Sources are hard discs: emission rate is constant inside the radius and zero
outside. Rasterization uses the exact covered-area fraction of each cell,
computed in source-local coordinates so that a whole-cell translation of the
source is exactly a roll of the raster.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Field, Rng64, SnapshotStack
from .solver import SolverConfig, integrate
from .wind import WindModel


class UnalignedCenterError(ValueError):
    """Source center does not sit on a low-resolution cell center."""


class MissingPhaseError(ValueError):
    """Schedule event does not map onto any bank start phase."""


# ---------------------------------------------------------------------------
# Exact disc coverage
# ---------------------------------------------------------------------------

def _circle_halfarea(x: float, r: float) -> float:
    """Integral of sqrt(r^2 - u^2) du from 0 to x (clamped to the circle)."""
    x = max(-r, min(r, x))
    return 0.5 * (x * math.sqrt(max(0.0, r * r - x * x)) + r * r * math.asin(x / r))


def _circle_rect_area(r: float, a: float, b: float, c: float, d: float) -> float:
    """Area of the disc x^2+y^2 <= r^2 intersected with [a,b] x [c,d].

    Integrates the vertical extent of the disc clipped to [c, d] across x,
    splitting at the abscissae where the circle crosses y = c or y = d so
    each piece has a fixed closed form.
    """
    nearest = math.hypot(min(max(a, 0.0), b), min(max(c, 0.0), d))
    if nearest >= r:
        return 0.0
    farthest = max(math.hypot(xx, yy) for xx in (a, b) for yy in (c, d))
    if farthest <= r:
        return (b - a) * (d - c)

    lo, hi = max(a, -r), min(b, r)
    if lo >= hi:
        return 0.0
    cuts = {lo, hi}
    for bound in (c, d):
        if abs(bound) < r:
            x_cross = math.sqrt(r * r - bound * bound)
            for x in (-x_cross, x_cross):
                if lo < x < hi:
                    cuts.add(x)
    xs = sorted(cuts)

    area = 0.0
    for p, q in zip(xs[:-1], xs[1:]):
        xm = 0.5 * (p + q)
        sm = math.sqrt(max(0.0, r * r - xm * xm))
        upper_const = d < sm     # else upper bound follows the circle
        lower_const = c > -sm    # else lower bound follows the circle
        if min(d, sm) <= max(c, -sm):
            continue
        if upper_const:
            area += d * (q - p)
        else:
            area += _circle_halfarea(q, r) - _circle_halfarea(p, r)
        if lower_const:
            area -= c * (q - p)
        else:
            area += _circle_halfarea(q, r) - _circle_halfarea(p, r)
    return area


_PATCH_CACHE: dict = {}


def disc_patch(radius: float, dx: float, frac_x: float, frac_y: float):
    """Coverage fractions of a disc on a cell lattice, in local coordinates.

    The disc center sits at fractional position (frac_x, frac_y) inside cell
    (0, 0), i.e. at (frac_x*dx, frac_y*dx) from that cell's corner. Returns
    (m_x, m_y, fractions) where fractions[j, i] is the covered-area fraction
    of the cell offset (m_x + i, m_y + j) from the center cell. Cached: the
    geometry only depends on (radius, dx, frac), never on absolute position.
    """
    key = (radius, dx, frac_x, frac_y)
    hit = _PATCH_CACHE.get(key)
    if hit is not None:
        return hit
    reach = int(math.ceil(radius / dx)) + 1
    m_x, m_y = -reach, -reach
    n = 2 * reach + 1
    frac = np.zeros((n, n))
    inv_cell = 1.0 / (dx * dx)
    for j in range(n):
        yc0 = (m_y + j - frac_y) * dx
        for i in range(n):
            xc0 = (m_x + i - frac_x) * dx
            frac[j, i] = _circle_rect_area(radius, xc0, xc0 + dx, yc0, yc0 + dx) * inv_cell
    _PATCH_CACHE[key] = (m_x, m_y, frac)
    return m_x, m_y, frac


# ---------------------------------------------------------------------------
# Scene types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    """One emitting disc: center/radius in physical units, flux in
    concentration per unit time, schedule as ordered disjoint (t_on, t_off]
    intervals (t_off may be inf), quantized to snapshot boundaries.

    Intervals are open on the left: the source contributes nothing at the
    switch-on instant itself. This makes a run started at t_on + k*period an
    exact time shift of the phase run started at t_on, because no RK4 stage
    evaluated exactly at the switch time injects emission."""

    center: tuple
    radius: float
    flux: float
    schedule: tuple

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.flux < 0:
            raise ValueError("flux must be non-negative")
        sched = tuple((float(a), float(b)) for a, b in self.schedule)
        prev_end = -math.inf
        for t_on, t_off in sched:
            if not t_on < t_off:
                raise ValueError(f"empty schedule interval ({t_on}, {t_off})")
            if t_on < prev_end:
                raise ValueError("schedule intervals must be disjoint and ordered")
            prev_end = t_off
        object.__setattr__(self, "schedule", sched)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def active_at(self, t: float, tol: float = 0.0) -> bool:
        """Whether the source emits at time t.

        tol guards the comparison against rounding in accumulated step
        times: a t within tol of a boundary is treated as exactly at it.
        Schedule boundaries sit on snapshot times, which are many steps
        apart, so any tol well below half a solver step is safe.
        """
        return any(t_on + tol < t <= t_off + tol for t_on, t_off in self.schedule)


@dataclass(frozen=True)
class SceneSpec:
    """A set of sources plus the seed that generated them."""

    sources: tuple
    scene_seed: int = 0
    _raster_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(self.sources) == 0:
            raise ValueError("scene must contain at least one source")
        object.__setattr__(self, "sources", tuple(self.sources))

    def raster_at(self, t: float, width: int, height: int, dx: float,
                  tol: float = 0.0):
        """Rasterized emission field S at time t on a (height, width) grid.

        Returns None when no source is active (the solver skips the add).
        Cached per active-source set: the raster only changes at schedule
        boundaries.
        """
        active = tuple(i for i, s in enumerate(self.sources) if s.active_at(t, tol))
        key = (active, width, height, dx)
        hit = self._raster_cache.get(key)
        if hit is not None or key in self._raster_cache:
            return hit
        if not active:
            self._raster_cache[key] = None
            return None
        out = np.zeros((height, width))
        for i in active:
            src = self.sources[i]
            _add_source(out, src.center, src.radius, src.flux, dx)
        self._raster_cache[key] = out
        return out

    def to_meta(self) -> dict:
        return {
            "scene_seed": self.scene_seed,
            "sources": [
                {"cx": s.center[0], "cy": s.center[1], "r": s.radius, "flux": s.flux,
                 "schedule": [[a, None if math.isinf(b) else b] for a, b in s.schedule]}
                for s in self.sources
            ],
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "SceneSpec":
        sources = tuple(
            SourceSpec((d["cx"], d["cy"]), d["r"], d["flux"],
                       tuple((a, math.inf if b is None else b) for a, b in d["schedule"]))
            for d in meta["sources"]
        )
        return cls(sources, int(meta["scene_seed"]))


def _add_source(out: np.ndarray, center, radius: float, flux: float, dx: float) -> None:
    """Accumulate one disc onto a periodic grid, cell value = flux * coverage."""
    height, width = out.shape
    gx = center[0] / dx
    gy = center[1] / dx
    i0 = int(math.floor(gx))
    j0 = int(math.floor(gy))
    m_x, m_y, frac = disc_patch(radius, dx, gx - i0, gy - j0)
    rows = (j0 + m_y + np.arange(frac.shape[0])) % height
    cols = (i0 + m_x + np.arange(frac.shape[1])) % width
    np.add.at(out, np.ix_(rows, cols), flux * frac)


# ---------------------------------------------------------------------------
# Scene sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """The physical domain and its two native grids (HR is factor x finer)."""

    width_lr: int = 100
    height_lr: int = 50
    dx_lr: float = 1.0
    factor: int = 4

    @property
    def width_hr(self) -> int:
        return self.width_lr * self.factor

    @property
    def height_hr(self) -> int:
        return self.height_lr * self.factor

    @property
    def dx_hr(self) -> float:
        return self.dx_lr / self.factor

    def cell_center(self, ci: int, cj: int):
        return ((ci + 0.5) * self.dx_lr, (cj + 0.5) * self.dx_lr)


def _sample_schedule(rng: Rng64, event_times, max_gap: int, max_burst: int):
    """Intermittent on/off schedule walking the allowed event-time lattice.

    Starts at a uniform position, then alternates on/off with random strides,
    so every switch lands on a bank-representable time. The last burst may
    stay on (t_off = inf).
    """
    idx = rng.next_below(len(event_times))
    intervals = []
    while idx < len(event_times):
        t_on = event_times[idx]
        idx += 1 + rng.next_below(max_burst)
        if idx >= len(event_times):
            intervals.append((t_on, math.inf))
            break
        intervals.append((t_on, event_times[idx]))
        idx += 1 + rng.next_below(max_gap)
    return tuple(intervals)


def sample_scene(rng: Rng64, n_sources: int, max_flux: float, domain: Domain,
                 start_times, radius: float = 2.0, max_burst: int = 3,
                 max_gap: int = 6) -> SceneSpec:
    """Draw a random scene: centers uniform over LR cell centers, fluxes
    uniform in [0, max_flux], and intermittent schedules whose switch times
    are uniform over the allowed snapshot-aligned offsets. Each source emits
    in bursts of 1..max_burst intervals separated by gaps of 1..max_gap, the
    piecewise on/off behaviour of real emitters.

    Draw order per source is (cell_x, cell_y, flux, schedule walk), fixed
    for reproducibility.
    """
    if n_sources < 1:
        raise ValueError("n_sources must be >= 1")
    start_times = list(start_times)
    if not start_times:
        raise ValueError("start_times must be non-empty")
    sources = []
    for _ in range(n_sources):
        ci = rng.next_below(domain.width_lr)
        cj = rng.next_below(domain.height_lr)
        flux = rng.next_f64() * max_flux
        schedule = _sample_schedule(rng, start_times, max_gap, max_burst)
        sources.append(SourceSpec(domain.cell_center(ci, cj), radius, flux, schedule))
    return SceneSpec(tuple(sources), scene_seed=rng.state)


# ---------------------------------------------------------------------------
# Solution bank
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolutionBank:
    """Single-source snapshot sequences for every start phase, both grids.

    lr[j][k] / hr[j][k] is the unit-flux solution that switched on at
    phases[j], sampled at time k*dt_snap. Both resolutions share the wind,
    the schedule, and the snapshot times.
    """

    phases: tuple
    lr: tuple
    hr: tuple
    dt_snap: float
    period: float
    radius: float
    ref_cell: tuple
    domain: Domain

    @property
    def snaps_per_period(self) -> int:
        return int(round(self.period / self.dt_snap))

    @property
    def n_snapshots(self) -> int:
        return len(self.lr[0])

    @property
    def n_phases(self) -> int:
        return len(self.phases)


def _phase_task(args):
    config, wind, scene, n_steps, every = args
    snaps = integrate(config, wind, scene, n_steps, every)
    return [f.values for f in snaps]


def build_bank(config_lr: SolverConfig, config_hr: SolverConfig, wind: WindModel,
               n_phases: int, dt_snap: float, duration: float,
               radius: float = 2.0, domain: Domain | None = None,
               workers: int = 1) -> SolutionBank:
    """Run the reference source once per start phase per resolution.

    The reference source has unit flux and sits at the central LR cell.
    Phase j switches on at j*dt_snap and stays on. Snapshot times are
    identical across resolutions; duration must cover the latest observation
    plus one snapshot interval.
    """
    if domain is None:
        domain = Domain(config_lr.width, config_lr.height, config_lr.dx)
    if abs(config_hr.dx - config_lr.dx / domain.factor) > 1e-12:
        raise ValueError("HR grid must be factor x finer than LR")
    if (config_hr.width, config_hr.height) != (domain.width_hr, domain.height_hr):
        raise ValueError("HR config dims do not match the domain")
    if config_lr.t0 != 0.0 or config_hr.t0 != 0.0:
        raise ValueError("bank runs must start at t0 = 0")
    spp = wind.period / dt_snap
    if abs(spp - round(spp)) > 1e-9:
        raise ValueError("wind period must be an integer number of snapshot intervals")
    if n_phases < 1 or n_phases > round(spp):
        raise ValueError(f"n_phases must be in [1, {int(round(spp))}]")
    n_snaps = duration / dt_snap
    if abs(n_snaps - round(n_snaps)) > 1e-9:
        raise ValueError("duration must be a whole number of snapshot intervals")
    n_snaps = int(round(n_snaps))

    ref_cell = (domain.width_lr // 2, domain.height_lr // 2)
    ref_center = domain.cell_center(*ref_cell)
    phases = tuple(j * dt_snap for j in range(n_phases))

    tasks = []
    for config in (config_lr, config_hr):
        every = dt_snap / config.dt
        if abs(every - round(every)) > 1e-9:
            raise ValueError(f"dt={config.dt} must divide dt_snap={dt_snap}")
        every = int(round(every))
        for phase in phases:
            scene = SceneSpec(
                (SourceSpec(ref_center, radius, 1.0, ((phase, math.inf),)),))
            tasks.append((config, wind, scene, n_snaps * every, every))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_phase_task, tasks))
    else:
        results = [_phase_task(t) for t in tasks]

    lr_runs = tuple(
        tuple(Field(v, config_lr.dx) for v in results[j]) for j in range(n_phases))
    hr_runs = tuple(
        tuple(Field(v, config_hr.dx) for v in results[n_phases + j])
        for j in range(n_phases))
    return SolutionBank(phases, lr_runs, hr_runs, dt_snap, wind.period, radius,
                        ref_cell, domain)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------

def _source_cell(src: SourceSpec, domain: Domain):
    ci = int(round(src.center[0] / domain.dx_lr - 0.5))
    cj = int(round(src.center[1] / domain.dx_lr - 0.5))
    snapped = domain.cell_center(ci, cj)
    if (abs(snapped[0] - src.center[0]) > 1e-9 * domain.dx_lr
            or abs(snapped[1] - src.center[1]) > 1e-9 * domain.dx_lr):
        raise UnalignedCenterError(
            f"source center {src.center} is not on an LR cell center")
    return ci, cj


def _event_phase(t_event: float, bank: SolutionBank):
    """Map an event time onto (phase index, whole periods shifted)."""
    steps = t_event / bank.dt_snap
    if abs(steps - round(steps)) > 1e-9:
        raise MissingPhaseError(f"event time {t_event} is not snapshot-aligned")
    steps = int(round(steps))
    if steps < 0:
        raise MissingPhaseError(f"event time {t_event} is negative")
    spp = bank.snaps_per_period
    j = steps % spp
    if j >= bank.n_phases:
        raise MissingPhaseError(
            f"event time {t_event} needs phase {j}, bank holds {bank.n_phases}")
    return j, steps // spp


def compose(scene: SceneSpec, bank: SolutionBank, t_index: int,
            norm: float = 1.0):
    """Assemble the paired (LR, HR) stacks for a scene at snapshot t_index.

    Each source contributes flux x (bank run for its start phase, rolled by
    its whole-cell offset from the reference, shifted back a whole number of
    wind periods). A finite off time subtracts the run that starts at the
    off event: switching off is the difference of two always-on sources.
    The result is divided by norm (the corpus normalization constant).
    """
    if not 1 <= t_index < bank.n_snapshots - 1:
        raise ValueError(
            f"t_index must be in [1, {bank.n_snapshots - 2}] to support a 3-stack")
    domain = bank.domain
    factor = domain.factor
    spp = bank.snaps_per_period

    lr_acc = np.zeros((3, domain.height_lr, domain.width_lr))
    hr_acc = np.zeros((3, domain.height_hr, domain.width_hr))
    for src in scene.sources:
        if abs(src.radius - bank.radius) > 1e-12:
            raise ValueError(
                f"source radius {src.radius} differs from bank radius {bank.radius}")
        ci, cj = _source_cell(src, domain)
        di = ci - bank.ref_cell[0]
        dj = cj - bank.ref_cell[1]
        events = []
        for t_on, t_off in src.schedule:
            events.append((t_on, src.flux))
            if math.isfinite(t_off):
                events.append((t_off, -src.flux))
        for t_event, signed_flux in events:
            if signed_flux == 0.0:
                continue
            j, k = _event_phase(t_event, bank)
            for c, offset in enumerate((-1, 0, 1)):
                idx = t_index + offset - k * spp
                if idx < 0:
                    continue  # event is in this channel's future
                if idx >= bank.n_snapshots:
                    raise ValueError(
                        f"bank too short: need snapshot {idx}, have {bank.n_snapshots}")
                lr_acc[c] += signed_flux * np.roll(
                    bank.lr[j][idx].values, (dj, di), axis=(0, 1))
                hr_acc[c] += signed_flux * np.roll(
                    bank.hr[j][idx].values, (factor * dj, factor * di), axis=(0, 1))

    lr_acc /= norm
    hr_acc /= norm
    return (SnapshotStack.from_array(lr_acc, domain.dx_lr, bank.dt_snap),
            SnapshotStack.from_array(hr_acc, domain.dx_hr, bank.dt_snap))


def direct_stacks(scene: SceneSpec, config_lr: SolverConfig, config_hr: SolverConfig,
                  wind: WindModel, dt_snap: float, t_index: int, norm: float = 1.0):
    """Oracle path: simulate the full multi-source scene directly at both
    resolutions and cut out the 3-snapshot stacks around t_index."""
    stacks = []
    for config in (config_lr, config_hr):
        every = int(round(dt_snap / config.dt))
        snaps = integrate(config, wind, scene, (t_index + 1) * every, every)
        arr = np.stack([snaps[t_index - 1].values, snaps[t_index].values,
                        snaps[t_index + 1].values]) / norm
        stacks.append(SnapshotStack.from_array(arr, config.dx, dt_snap))
    return stacks[0], stacks[1]

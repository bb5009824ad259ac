"""Time-dependent, spatially constant wind.

The velocity is a mean x-drift u0 plus a small sum of harmonic fluctuations
in both components. Angular frequencies are integer multiples of 2*pi/period,
so the wind repeats exactly every period: that exact periodicity is what lets
the scene composer reuse single-source solutions shifted by whole periods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Rng64

# Fluctuation amplitudes are kept well under the mean drift.
MAX_AMP_RATIO = 0.2


@dataclass(frozen=True)
class WindTerm:
    amp_x: float
    amp_y: float
    n_x: int        # harmonic index: angular frequency = 2*pi*n/period
    n_y: int
    phase_x: float
    phase_y: float


@dataclass(frozen=True)
class WindModel:
    u0: float
    period: float
    terms: tuple

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        bound = MAX_AMP_RATIO * self.u0
        for t in self.terms:
            if max(abs(t.amp_x), abs(t.amp_y)) > bound + 1e-12:
                raise ValueError(
                    f"fluctuation amplitude {max(abs(t.amp_x), abs(t.amp_y))} exceeds "
                    f"{MAX_AMP_RATIO} * u0 = {bound}")
            if t.n_x < 1 or t.n_y < 1:
                raise ValueError("harmonic indices must be >= 1 integers")
        object.__setattr__(self, "terms", tuple(self.terms))

    def max_speed(self) -> float:
        """Upper bound on |u(t)|, used for the advective CFL check."""
        ux = self.u0 + sum(abs(t.amp_x) for t in self.terms)
        uy = sum(abs(t.amp_y) for t in self.terms)
        return math.hypot(ux, uy)

    def to_meta(self) -> dict:
        return {
            "u0": self.u0,
            "period": self.period,
            "terms": [
                {"amp_x": t.amp_x, "amp_y": t.amp_y, "n_x": t.n_x, "n_y": t.n_y,
                 "phase_x": t.phase_x, "phase_y": t.phase_y}
                for t in self.terms
            ],
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "WindModel":
        terms = tuple(
            WindTerm(d["amp_x"], d["amp_y"], int(d["n_x"]), int(d["n_y"]),
                     d["phase_x"], d["phase_y"])
            for d in meta["terms"]
        )
        return cls(meta["u0"], meta["period"], terms)


def wind_at(model: WindModel, t: float):
    """Velocity (ux, uy) at time t."""
    w = 2.0 * math.pi / model.period
    ux = model.u0
    uy = 0.0
    for term in model.terms:
        ux += term.amp_x * math.cos(w * term.n_x * t + term.phase_x)
        uy += term.amp_y * math.cos(w * term.n_y * t + term.phase_y)
    return ux, uy


def sample_wind(rng: Rng64, u0: float = 0.5, n_terms: int = 3,
                max_amp_ratio: float = 0.1, period: float = 200.0) -> WindModel:
    """Draw a random wind model.

    Amplitudes are uniform in [0, max_amp_ratio*u0], phases uniform in
    [0, 2*pi), harmonic indices uniform integers in [1, 4]. Draw order per
    term is (amp_x, amp_y, n_x, n_y, phase_x, phase_y), fixed so the stream
    is reproducible.
    """
    if max_amp_ratio > MAX_AMP_RATIO:
        raise ValueError(f"max_amp_ratio must be <= {MAX_AMP_RATIO}")
    amp_hi = max_amp_ratio * u0
    terms = []
    for _ in range(n_terms):
        amp_x = rng.next_f64() * amp_hi
        amp_y = rng.next_f64() * amp_hi
        n_x = 1 + rng.next_below(4)
        n_y = 1 + rng.next_below(4)
        phase_x = rng.next_f64() * 2.0 * math.pi
        phase_y = rng.next_f64() * 2.0 * math.pi
        terms.append(WindTerm(amp_x, amp_y, n_x, n_y, phase_x, phase_y))
    return WindModel(u0, period, tuple(terms))


def displacement(model: WindModel, t: float):
    """Integral of the wind from 0 to t: closed form, used by analytic oracles."""
    w = 2.0 * math.pi / model.period
    dx = model.u0 * t
    dy = 0.0
    for term in model.terms:
        kx = w * term.n_x
        ky = w * term.n_y
        dx += term.amp_x / kx * (math.sin(kx * t + term.phase_x) - math.sin(term.phase_x))
        dy += term.amp_y / ky * (math.sin(ky * t + term.phase_y) - math.sin(term.phase_y))
    return dx, dy

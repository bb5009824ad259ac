import math

import numpy as np
import pytest
from scipy import integrate, stats

from plumesr.core import Rng64
from plumesr.wind import WindModel, WindTerm, displacement, sample_wind, wind_at


class TestWindAt:
    def test_no_terms_gives_pure_drift(self):
        model = WindModel(0.7, 50.0, ())
        for t in (0.0, 1.3, 99.0, -4.0):
            assert wind_at(model, t) == (0.7, 0.0)

    def test_exact_periodicity(self, rng):
        model = sample_wind(rng, u0=0.5, n_terms=3, max_amp_ratio=0.1, period=40.0)
        for t in np.linspace(0.0, 80.0, 37):
            u1 = wind_at(model, t)
            u2 = wind_at(model, t + 40.0)
            assert abs(u1[0] - u2[0]) < 1e-12
            assert abs(u1[1] - u2[1]) < 1e-12

    def test_single_term_at_zero_phase(self):
        model = WindModel(0.5, 30.0, (WindTerm(0.08, 0.05, 2, 1, 0.0, 0.0),))
        ux, uy = wind_at(model, 0.0)
        assert ux == pytest.approx(0.58, abs=1e-15)
        assert uy == pytest.approx(0.05, abs=1e-15)

    def test_fluctuation_integrates_to_zero_over_period(self, rng):
        model = sample_wind(rng, u0=0.5, n_terms=3, max_amp_ratio=0.1, period=25.0)
        fx, err_x = integrate.quad(lambda t: wind_at(model, t)[0] - model.u0,
                                   0.0, model.period, limit=200)
        fy, err_y = integrate.quad(lambda t: wind_at(model, t)[1],
                                   0.0, model.period, limit=200)
        assert abs(fx) < 1e-9
        assert abs(fy) < 1e-9

    def test_displacement_matches_quadrature(self, rng):
        model = sample_wind(rng, u0=0.6, n_terms=2, max_amp_ratio=0.1, period=15.0)
        t_end = 12.34
        dx, dy = displacement(model, t_end)
        qx, _ = integrate.quad(lambda t: wind_at(model, t)[0], 0.0, t_end, limit=200)
        qy, _ = integrate.quad(lambda t: wind_at(model, t)[1], 0.0, t_end, limit=200)
        assert dx == pytest.approx(qx, abs=1e-9)
        assert dy == pytest.approx(qy, abs=1e-9)


class TestValidation:
    def test_amplitude_bound_enforced(self):
        with pytest.raises(ValueError):
            WindModel(0.5, 10.0, (WindTerm(0.2, 0.0, 1, 1, 0.0, 0.0),))

    def test_harmonic_indices_positive(self):
        with pytest.raises(ValueError):
            WindModel(0.5, 10.0, (WindTerm(0.01, 0.01, 0, 1, 0.0, 0.0),))

    def test_max_speed_bounds_samples(self, rng):
        model = sample_wind(rng, u0=0.5, n_terms=3, max_amp_ratio=0.1, period=20.0)
        cap = model.max_speed()
        for t in np.linspace(0, 20, 501):
            ux, uy = wind_at(model, t)
            assert math.hypot(ux, uy) <= cap + 1e-12


class TestSampling:
    def test_zero_ratio_gives_constant_wind(self, rng):
        model = sample_wind(rng, u0=0.5, n_terms=3, max_amp_ratio=0.0, period=20.0)
        for t in (0.0, 3.7, 11.0):
            ux, uy = wind_at(model, t)
            assert ux == pytest.approx(0.5, abs=1e-15)
            assert uy == pytest.approx(0.0, abs=1e-15)

    def test_same_seed_same_model(self):
        m1 = sample_wind(Rng64(77), u0=0.5, n_terms=3, max_amp_ratio=0.1, period=20.0)
        m2 = sample_wind(Rng64(77), u0=0.5, n_terms=3, max_amp_ratio=0.1, period=20.0)
        assert m1 == m2

    def test_ratio_above_bound_rejected(self, rng):
        with pytest.raises(ValueError):
            sample_wind(rng, u0=0.5, n_terms=1, max_amp_ratio=0.25, period=20.0)

    def test_sampled_distributions(self):
        rng = Rng64(31337)
        amps, phases, harmonics = [], [], []
        for _ in range(10_000):
            m = sample_wind(rng, u0=0.5, n_terms=1, max_amp_ratio=0.1, period=20.0)
            t = m.terms[0]
            amps.extend([t.amp_x, t.amp_y])
            phases.extend([t.phase_x, t.phase_y])
            harmonics.extend([t.n_x, t.n_y])
        amps = np.array(amps)
        bound = 0.1 * 0.5
        assert amps.max() <= bound
        assert amps.min() >= 0.0

        threshold = stats.chi2.ppf(0.999, 19)
        counts, _ = np.histogram(amps, bins=20, range=(0.0, bound))
        expected = len(amps) / 20.0
        assert ((counts - expected) ** 2 / expected).sum() < threshold
        counts, _ = np.histogram(phases, bins=20, range=(0.0, 2 * math.pi))
        assert ((counts - expected) ** 2 / expected).sum() < threshold

        values, counts = np.unique(harmonics, return_counts=True)
        assert set(values) == {1, 2, 3, 4}
        expected = len(harmonics) / 4.0
        assert ((counts - expected) ** 2 / expected).sum() < stats.chi2.ppf(0.999, 3)

    def test_meta_round_trip(self, rng):
        model = sample_wind(rng, u0=0.4, n_terms=2, max_amp_ratio=0.05, period=35.0)
        assert WindModel.from_meta(model.to_meta()) == model

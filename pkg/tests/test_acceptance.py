"""Acceptance gate: one test per release criterion, at its stated tolerance.

Run with -s to see one line per criterion. The corpus-level criteria share a
session-scoped 50-sample corpus generated at the paper's grid sizes.
"""

import math
import time

import numpy as np
import pytest

from plumesr.cli import main
from plumesr.core import Field, Rng64, SnapshotStack, read_container
from plumesr.dataset import (DatasetConfig, build_corpus_bank, calibrate_norm,
                             _sample_record, generate_dataset, load_sample,
                             mask_seed, read_manifest)
from plumesr.metrics import psnr, psnr_delta_to_rms_ratio, ssim
from plumesr.resample import bicubic_baseline, drop_pixels
from plumesr.residual import PhysicsMeta, physics_loss, residual_field
from plumesr.scene import Domain, SceneSpec, SourceSpec, compose, direct_stacks
from plumesr.solver import SolverConfig, step_rk4
from plumesr.wind import WindModel, WindTerm, sample_wind

from conftest import tiny_dataset_config


def report(name, detail):
    print(f"\n[PASS] {name}: {detail}")


def gaussian_grid(n, dx, x0, y0, sigma2, amp=1.0):
    x = (np.arange(n) + 0.5) * dx
    X, Y = np.meshgrid(x, x)
    return amp * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2.0 * sigma2))


def drifted_gaussian(n, dx, x0, y0, sigma0_sq, kappa, ux, uy, t):
    s2 = sigma0_sq + 2.0 * kappa * t
    return gaussian_grid(n, dx, x0 + ux * t, y0 + uy * t, s2, amp=sigma0_sq / s2)


@pytest.fixture(scope="session")
def acceptance_corpus(tmp_path_factory):
    """50-sample test split at the paper's grid sizes (100x50 -> 400x200)."""
    config = DatasetConfig(
        domain=Domain(100, 50, 1.0, 4),
        period=25.0, dt_snap=2.5, duration=50.0, n_phases=10,
        n_samples=50, n_sources=20,
        drop_rates=(0.0,),
        split_fractions=(0.0, 0.0, 1.0),
        master_seed=1234,
    )
    root = tmp_path_factory.mktemp("acceptance_corpus")
    bank = build_corpus_bank(config)
    generate_dataset(config, root, bank=bank)
    return config, bank, root


class TestSolverOrder:
    def test_richardson_study_order_and_runtime(self, const_wind):
        start = time.monotonic()
        kappa, sigma0_sq, L, t_end = 0.05, 0.25, 8.0, 0.5
        errors = []
        for n in (64, 128, 256):
            dx = L / n
            # dt ~ dx^2 keeps the diffusive bound satisfied on every grid
            steps = int(round(t_end / (0.2 * dx * dx / kappa)))
            dt = t_end / steps
            config = SolverConfig(n, n, dx, dt, kappa)
            field = Field(gaussian_grid(n, dx, L / 2, L / 2, sigma0_sq), dx)
            for k in range(steps):
                field = step_rk4(field, k * dt, config, const_wind)
            exact = drifted_gaussian(n, dx, L / 2, L / 2, sigma0_sq, kappa,
                                     0.5, 0.0, t_end)
            errors.append(np.sqrt(np.mean((field.values - exact) ** 2)))
        elapsed = time.monotonic() - start
        orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
        assert min(orders) >= 3.5
        assert elapsed < 60.0
        report("solver order", f"observed orders {orders[0]:.2f}, {orders[1]:.2f} "
                               f"in {elapsed:.1f}s")


class TestConservation:
    def test_mass_drift_over_1000_steps(self):
        wind = WindModel(0.5, 10.0, (WindTerm(0.05, 0.04, 1, 2, 0.3, 1.1),))
        config = SolverConfig(64, 64, 1.0, 0.25, 0.4)
        field = Field(np.random.default_rng(0).random((64, 64)), 1.0)
        m0 = field.values.sum()
        for k in range(1000):
            field = step_rk4(field, k * config.dt, config, wind)
        drift = abs(field.values.sum() - m0) / m0
        assert drift < 1e-10
        report("conservation", f"relative mass drift {drift:.2e} over 1000 steps")


class TestAnalyticOracle:
    def test_gaussian_at_variance_doubling_time(self, const_wind):
        n, dx, kappa, sigma0_sq = 96, 0.125, 0.05, 0.36
        config = SolverConfig(n, n, dx, 0.0625, kappa)
        x0 = y0 = n * dx / 2
        field = Field(gaussian_grid(n, dx, x0, y0, sigma0_sq), dx)
        t_end = sigma0_sq / (2 * kappa)
        steps = int(round(t_end / config.dt))
        for k in range(steps):
            field = step_rk4(field, k * config.dt, config, const_wind)
        exact = drifted_gaussian(n, dx, x0, y0, sigma0_sq, kappa, 0.5, 0.0,
                                 steps * config.dt)
        rms = np.sqrt(np.mean((field.values - exact) ** 2))
        ratio = rms / exact.max()
        assert ratio < 1e-3
        report("analytic oracle", f"rms error {ratio:.2e} of peak at variance doubling")


class TestSuperposition:
    def test_three_source_compose_equals_direct(self, tiny_config, tiny_wind,
                                                tiny_bank):
        dom = tiny_config.domain
        scene = SceneSpec((
            SourceSpec(dom.cell_center(8, 5), tiny_config.radius, 0.9, ((0.0, 12.5),)),
            SourceSpec(dom.cell_center(25, 12), tiny_config.radius, 0.5,
                       ((2.5, math.inf),)),
            SourceSpec(dom.cell_center(18, 8), tiny_config.radius, 0.7,
                       ((10.0, math.inf),)),
        ))
        lr_cfg, hr_cfg = tiny_config.solver_configs()
        t_index = 6
        lr_c, hr_c = compose(scene, tiny_bank, t_index, norm=1.0)
        lr_d, hr_d = direct_stacks(scene, lr_cfg, hr_cfg, tiny_wind,
                                   tiny_config.dt_snap, t_index, norm=1.0)
        devs = []
        for comp, direct in ((lr_c, lr_d), (hr_c, hr_d)):
            peak = np.abs(direct.as_array()).max()
            dev = np.abs(comp.as_array() - direct.as_array()).max() / peak
            assert dev < 1e-9
            devs.append(dev)
        report("superposition", f"LR dev {devs[0]:.2e}, HR dev {devs[1]:.2e} "
                                f"(tolerance 1e-9)")


class TestResidualCalculus:
    def _analytic_stack(self, n, dx, dt_snap, t_mid, kappa, ux, span=8.0):
        # exact periodic solution: decaying sine drifting with the wind
        kx = 2.0 * math.pi / span
        ky = 4.0 * math.pi / span
        x = (np.arange(n) + 0.5) * dx
        X, Y = np.meshgrid(x, x)
        frames = []
        for t in (t_mid - dt_snap, t_mid, t_mid + dt_snap):
            decay = math.exp(-kappa * (kx ** 2 + ky ** 2) * t)
            frames.append(decay * np.sin(kx * (X - ux * t)) * np.sin(ky * Y))
        return SnapshotStack.from_array(np.stack(frames), dx, dt_snap)

    def _meta(self, kappa, dx, dt_snap, scene=None, u0=0.5):
        return PhysicsMeta(wind=WindModel(u0, 10.0, ()), scene=scene, kappa=kappa,
                           dx=dx, dt_snap=dt_snap, t_center=2.0)

    def test_refinement_ratio(self):
        kappa, ux = 0.05, 0.5
        means = []
        for n, dx, dt in ((32, 0.25, 0.5), (64, 0.125, 0.25), (128, 0.0625, 0.125)):
            stack = self._analytic_stack(n, dx, dt, 2.0, kappa, ux)
            means.append(np.abs(residual_field(
                stack, self._meta(kappa, dx, dt)).values).mean())
        ratios = [means[0] / means[1], means[1] / means[2]]
        for ratio in ratios:
            assert 3.0 <= ratio <= 5.0
        report("residual refinement", f"mean-|R| ratios {ratios[0]:.2f}, "
                                      f"{ratios[1]:.2f} (window [3, 5])")

    def test_source_invariance(self):
        gen = np.random.default_rng(1)
        sr = SnapshotStack.from_array(gen.random((3, 12, 16)), 0.25, 2.5)
        hr = SnapshotStack.from_array(gen.random((3, 12, 16)), 0.25, 2.5)
        scene_a = SceneSpec((SourceSpec((1.5, 1.5), 0.5, 1.0, ((0.0, math.inf),)),))
        scene_b = SceneSpec((SourceSpec((2.5, 0.5), 0.8, 0.4, ((0.0, math.inf),)),))
        la = physics_loss(sr, hr, self._meta(0.1, 0.25, 2.5, scene=scene_a))
        lb = physics_loss(sr, hr, self._meta(0.1, 0.25, 2.5, scene=scene_b))
        assert abs(la - lb) < 1e-12
        report("residual source invariance", f"|delta| = {abs(la - lb):.2e}")

    def test_constant_offset_blindness_exact(self):
        gen = np.random.default_rng(2)
        base = gen.integers(0, 1025, size=(3, 12, 16)) / 1024.0
        hr = SnapshotStack.from_array(base, 0.25, 2.5)
        sr = SnapshotStack.from_array(base + 0.125, 0.25, 2.5)
        loss = physics_loss(sr, hr, self._meta(0.1, 0.25, 2.5))
        assert loss == 0.0
        report("constant-offset blindness", "physics loss exactly 0.0")


class TestMetricOracles:
    def test_psnr_offset(self):
        a = np.random.default_rng(3).random((3, 24, 24)) * 0.8
        value = psnr(a, a + 0.1)
        assert value == pytest.approx(20.0, abs=0.01)
        report("psnr oracle", f"+0.1 offset -> {value:.4f} dB")

    def test_ssim_identity(self):
        a = np.random.default_rng(4).random((3, 24, 24))
        assert ssim(a, a) == 1.0
        report("ssim identity", "score exactly 1.0")

    def test_ssim_zero_variance(self):
        value = ssim(np.full((24, 24), 0.5), np.full((24, 24), 0.6))
        assert value == pytest.approx(0.98361, abs=1e-5)
        report("ssim zero-variance", f"constant images -> {value:.6f}")

    def test_psnr_delta_conversion(self):
        value = psnr_delta_to_rms_ratio(0.93)
        assert value == pytest.approx(0.1016, abs=1e-4)
        report("psnr-delta", f"0.93 dB -> {value:.5f} rms decrease "
                             "(prose rounds to 11%)")


class TestBaselineBand:
    def test_bicubic_band_and_monotonicity(self, acceptance_corpus):
        config, bank, root = acceptance_corpus
        rows = read_manifest(root)
        assert len(rows) == 50
        rates = (0.0, 0.2, 0.4, 0.6)
        means = {}
        for rate in rates:
            scores = []
            for row in rows:
                sample = load_sample(root, row["path"], rate=rate)
                sr = bicubic_baseline(sample.lr, sample.mask, 4)
                scores.append(psnr(np.clip(sr.as_array(), 0.0, 1.0),
                                   sample.hr.as_array()))
            means[rate] = float(np.mean(scores))
        assert 40.0 <= means[0.0] <= 52.0
        assert means[0.0] > means[0.2] > means[0.4] > means[0.6]
        report("baseline band",
               " ".join(f"{r:.0%}:{means[r]:.2f}dB" for r in rates)
               + " (0% within [40, 52], decreasing)")


class TestDeterminism:
    def test_cli_dataset_runs_byte_identical(self, tmp_path):
        import json as _json

        cfg = tiny_dataset_config(n_samples=2, n_sources=3)
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(_json.dumps(cfg.to_dict()))
        roots = [tmp_path / "run_a", tmp_path / "run_b"]
        for root in roots:
            assert main(["dataset", "--config", str(cfg_path), "--root", str(root),
                         "--seed", "7"]) == 0
        rel_a = sorted(str(p.relative_to(roots[0]))
                       for p in roots[0].rglob("*") if p.is_file())
        rel_b = sorted(str(p.relative_to(roots[1]))
                       for p in roots[1].rglob("*") if p.is_file())
        assert rel_a == rel_b
        n_bytes = 0
        for rel in rel_a:
            a = (roots[0] / rel).read_bytes()
            b = (roots[1] / rel).read_bytes()
            assert a == b, f"{rel} differs between runs"
            n_bytes += len(a)
        report("determinism", f"two seed-7 corpora byte-identical "
                              f"({len(rel_a)} files, {n_bytes} bytes)")

    def test_container_round_trip_bit_exact(self, tmp_path):
        gen = np.random.default_rng(5)
        arrays = [("lr", gen.random((3, 50, 100)).astype(np.float32)),
                  ("mask", (gen.random((50, 100)) > 0.4).astype(np.uint8)),
                  ("hr", gen.random((3, 200, 400)).astype(np.float32))]
        path = tmp_path / "sample.plm1"
        from plumesr.core import write_container
        write_container(path, {"check": True}, arrays)
        _, loaded = read_container(path)
        for name, arr in arrays:
            assert loaded[name].tobytes() == arr.tobytes()
        report("container round-trip", "bit-exact for f32 stacks and u8 masks")

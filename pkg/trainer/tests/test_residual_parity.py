"""Cross-package contract: the differentiable residual must track the
simulation pipeline's reference residual to <= 1e-6 mean absolute deviation.
"""

import os
from dataclasses import replace

import numpy as np
import pytest
import torch

import plumesr
from plumesr.wind import WindTerm
from plumesr_trainer.data import load_sample, read_manifest
from plumesr_trainer.residual import (interior_mask, physics_consistency,
                                      pixel_l1, residual_stack, total_loss)


def random_case(gen):
    """A random stack plus physics constants expressible as a wind model
    evaluated at t = 0 (amp_y bounded well under the mean drift)."""
    ux = gen.uniform(0.3, 1.0)
    uy = ux * gen.uniform(-0.15, 0.15)
    kappa = gen.uniform(0.0, 0.4)
    arr = gen.random((3, 16, 24))
    wind = plumesr.WindModel(ux, 1000.0, (WindTerm(0.0, uy, 1, 1, 0.0, 0.0),))
    meta = plumesr.PhysicsMeta(wind=wind, scene=None, kappa=kappa, dx=0.25,
                               dt_snap=2.5, t_center=0.0)
    return arr, ux, uy, kappa, meta


class TestParity:
    def test_fifty_stacks_within_tolerance(self, corpus_root):
        """8 real corpus stacks + 42 random stacks, all <= 1e-6 MAD."""
        cases = []
        rows = read_manifest(os.path.join(corpus_root, "manifest.jsonl"))
        for row in rows:
            s = load_sample(corpus_root, row["path"])
            pair = plumesr.load_sample(str(corpus_root), row["path"])
            meta = replace(pair.meta, scene=None)  # loss path carries no S
            cases.append((s.hr.astype(np.float64), s.ux, s.uy, s.kappa,
                          s.dx_hr, s.dt_snap, meta))
        gen = np.random.default_rng(7)
        for _ in range(50 - len(cases)):
            arr, ux, uy, kappa, meta = random_case(gen)
            cases.append((arr, ux, uy, kappa, 0.25, 2.5, meta))

        worst = 0.0
        for arr, ux, uy, kappa, dx, dt, meta in cases:
            ours = residual_stack(torch.from_numpy(arr[None]), ux, uy, kappa,
                                  dx, dt, periodic=True)[0].numpy()
            stack = plumesr.SnapshotStack.from_array(arr, dx, dt)
            ref = plumesr.residual_field(stack, meta).values
            mad = np.abs(ours - ref).mean()
            worst = max(worst, mad)
            assert mad <= 1e-6
        print(f"\nresidual parity worst MAD over {len(cases)} stacks: {worst:.2e}")

    def test_parity_including_source_term(self, corpus_root):
        """Full-equation parity on a real sample, source term included."""
        row = read_manifest(os.path.join(corpus_root, "manifest.jsonl"))[0]
        sample = load_sample(corpus_root, row["path"])
        pair = plumesr.load_sample(str(corpus_root), row["path"])
        meta = pair.meta
        arr = sample.hr.astype(np.float64)
        s_raster = meta.scene.raster_at(meta.t_center, arr.shape[2], arr.shape[1],
                                        meta.dx)
        if s_raster is None:
            s_raster = np.zeros(arr.shape[1:])
        source = torch.from_numpy(s_raster / meta.norm)[None]
        ours = residual_stack(torch.from_numpy(arr[None]), sample.ux, sample.uy,
                              sample.kappa, sample.dx_hr, sample.dt_snap,
                              periodic=True, source=source)[0].numpy()
        ref = plumesr.residual_field(pair.hr, meta).values
        assert np.abs(ours - ref).mean() <= 1e-6


class TestLossProperties:
    def _lattice_pair(self, shape=(1, 3, 12, 16)):
        gen = np.random.default_rng(11)
        hr = gen.integers(0, 1025, size=shape) / 1024.0
        return (torch.tensor(hr + 0.125, dtype=torch.float64),
                torch.tensor(hr, dtype=torch.float64))

    def test_constant_offset_total_gradient_equals_pixel_gradient(self):
        sr, hr = self._lattice_pair()
        sr_a = sr.clone().requires_grad_(True)
        l_tot, _, l_phys = total_loss(sr_a, hr, 100.0, 0.5, 0.0, 0.1, 0.25, 2.5)
        assert float(l_phys.detach()) == 0.0
        l_tot.backward()
        grad_total = sr_a.grad.clone()
        sr_b = sr.clone().requires_grad_(True)
        pixel_l1(sr_b, hr).backward()
        assert torch.equal(grad_total, sr_b.grad)

    def test_gradient_matches_finite_differences(self):
        gen = np.random.default_rng(12)
        hr = torch.tensor(gen.random((1, 3, 12, 12)), dtype=torch.float64)
        sr = torch.tensor(gen.random((1, 3, 12, 12)), dtype=torch.float64,
                          requires_grad=True)
        direction = torch.tensor(gen.standard_normal((1, 3, 12, 12)),
                                 dtype=torch.float64)
        direction /= direction.norm()

        def f(x):
            l_tot, _, _ = total_loss(x, hr, 100.0, 0.6, -0.1, 0.2, 0.25, 2.5)
            return l_tot

        loss = f(sr)
        loss.backward()
        analytic = float((sr.grad * direction).sum())
        eps = 1e-6
        plus = float(f(sr.detach() + eps * direction))
        minus = float(f(sr.detach() - eps * direction))
        numeric = (plus - minus) / (2 * eps)
        assert analytic == pytest.approx(numeric, rel=1e-4)

    def test_eta_zero_total_is_pixel(self):
        gen = np.random.default_rng(13)
        sr = torch.tensor(gen.random((2, 3, 8, 8)))
        hr = torch.tensor(gen.random((2, 3, 8, 8)))
        l_tot, l_pix, l_phys = total_loss(sr, hr, 0.0, 0.5, 0.0, 0.1, 0.25, 2.5)
        assert torch.equal(l_tot, l_pix)
        assert float(l_phys) == 0.0

    def test_interior_mask_excludes_border_ring(self):
        m = interior_mask((6, 8))
        assert not m[0].any() and not m[-1].any()
        assert not m[:, 0].any() and not m[:, -1].any()
        assert m[1:-1, 1:-1].all()

    def test_patch_mode_ignores_wrapped_border(self):
        # corrupting the border ring of both stacks identically must not move
        # the patch loss: ring residuals are excluded and interior stencils
        # see the same perturbation on both sides
        gen = np.random.default_rng(14)
        sr = torch.tensor(gen.random((1, 3, 10, 10)), dtype=torch.float64)
        hr = torch.tensor(gen.random((1, 3, 10, 10)), dtype=torch.float64)
        base = physics_consistency(sr, hr, 0.5, 0.0, 0.1, 0.25, 2.5,
                                   periodic=False)
        sr2 = sr.clone()
        sr2[:, :, 0, :] += 100.0
        hr2 = hr.clone()
        hr2[:, :, 0, :] += 100.0
        moved = physics_consistency(sr2, hr2, 0.5, 0.0, 0.1, 0.25, 2.5,
                                    periodic=False)
        assert float(base) == pytest.approx(float(moved), abs=1e-9)

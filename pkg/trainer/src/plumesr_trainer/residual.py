"""Differentiable physics residual and the training losses.

Mirrors the simulation pipeline's residual definition exactly: centered
difference of the outer channels in time, centered 2-point first derivatives
and the 5-point Laplacian on the middle channel. Two boundary modes:

- periodic=True wraps, matching the reference residual on full frames (the
  cross-package parity contract is <= 1e-6 mean absolute deviation, so the
  arithmetic here runs in float64);
- periodic=False is the training mode for patches, which are not periodic: a
  one-cell border ring is excluded from the loss instead of inventing
  wraparound neighbours.

The source term cancels between R(sr) and R(hr) in the consistency loss, so
the loss path never rasterizes it; pass `source` explicitly when the residual
itself is wanted.
"""

from __future__ import annotations

import torch


def _shift(x: torch.Tensor, step: int, dim: int) -> torch.Tensor:
    return torch.roll(x, shifts=step, dims=dim)


def residual_stack(stack: torch.Tensor, ux, uy, kappa, dx, dt_snap,
                   periodic: bool = True, source: torch.Tensor | None = None):
    """Physics residual of a (B, 3, H, W) stack at its middle time.

    ux, uy, kappa, dx, dt_snap are scalars or (B,) tensors. Returns
    (B, H, W); with periodic=False the border ring is fictitious and the
    caller masks it (interior_mask helps).
    """
    if stack.dim() != 4 or stack.shape[1] != 3:
        raise ValueError(f"expected (B, 3, H, W) stack, got {tuple(stack.shape)}")

    def col(v):
        t = torch.as_tensor(v, dtype=stack.dtype, device=stack.device)
        return t.reshape(-1, 1, 1) if t.dim() else t.reshape(1, 1, 1)

    past, mid, future = stack[:, 0], stack[:, 1], stack[:, 2]
    dx_c, dt_c = col(dx), col(dt_snap)

    ddt = (future - past) / (2.0 * dt_c)
    gx = (_shift(mid, -1, 2) - _shift(mid, 1, 2)) / (2.0 * dx_c)
    gy = (_shift(mid, -1, 1) - _shift(mid, 1, 1)) / (2.0 * dx_c)
    lap = (_shift(mid, -1, 2) + _shift(mid, 1, 2)
           + _shift(mid, -1, 1) + _shift(mid, 1, 1) - 4.0 * mid) / (dx_c * dx_c)

    r = ddt + col(ux) * gx + col(uy) * gy - col(kappa) * lap
    if source is not None:
        r = r - source
    return r


def interior_mask(shape, device=None) -> torch.Tensor:
    """(H, W) mask that is False on the one-cell border ring."""
    h, w = shape[-2], shape[-1]
    m = torch.zeros(h, w, dtype=torch.bool, device=device)
    m[1:-1, 1:-1] = True
    return m


def physics_consistency(sr: torch.Tensor, hr: torch.Tensor, ux, uy, kappa, dx,
                        dt_snap, periodic: bool = False) -> torch.Tensor:
    """Mean |R(sr) - R(hr)|, per batch mean; float64 internally.

    With periodic=False the border ring is excluded from the mean, since
    patch edges have no physical neighbours.
    """
    sr64, hr64 = sr.double(), hr.double()
    r_sr = residual_stack(sr64, ux, uy, kappa, dx, dt_snap, periodic=periodic)
    r_hr = residual_stack(hr64, ux, uy, kappa, dx, dt_snap, periodic=periodic)
    diff = (r_sr - r_hr).abs()
    if periodic:
        return diff.mean()
    m = interior_mask(diff.shape, device=diff.device)
    return diff[:, m].mean()


def pixel_l1(sr: torch.Tensor, hr: torch.Tensor) -> torch.Tensor:
    return (sr - hr).abs().mean()


def total_loss(sr: torch.Tensor, hr: torch.Tensor, eta: float, ux, uy, kappa,
               dx, dt_snap):
    """(L_tot, L_pix, L_phys) for one batch; L_tot = L_pix + eta * L_phys."""
    l_pix = pixel_l1(sr, hr)
    if eta == 0.0:
        zero = torch.zeros((), dtype=sr.dtype, device=sr.device)
        return l_pix, l_pix, zero
    l_phys = physics_consistency(sr, hr, ux, uy, kappa, dx, dt_snap,
                                 periodic=False)
    l_tot = l_pix + eta * l_phys.to(l_pix.dtype)
    return l_tot, l_pix, l_phys

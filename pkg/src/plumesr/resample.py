"""Bicubic resampling, pixel dropping, and missing-pixel fill.

Everything in here is the non-learned half of the baselines. "Bicubic" is
pinned down exactly because libraries disagree: the Keys kernel with a = -0.5,
an align-centers grid mapping (output center x maps to (i + 0.5)/factor - 0.5
in input index space), and periodic edge extension to match the physics
domain. Any cross-component comparison must use this same kernel.
"""

from __future__ import annotations

import math

import numpy as np

from .core import DROP_SENTINEL, Field, Mask, Rng64, SnapshotStack

_KEYS_A = -0.5


class AllPixelsMissingError(ValueError):
    """fill_missing needs at least one present pixel."""


def keys_kernel(t):
    """Keys cubic interpolation kernel with a = -0.5 (vectorized)."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    a = _KEYS_A
    out = np.zeros_like(t)
    inner = t <= 1.0
    outer = (t > 1.0) & (t < 2.0)
    ti = t[inner]
    to = t[outer]
    out[inner] = (a + 2.0) * ti ** 3 - (a + 3.0) * ti ** 2 + 1.0
    out[outer] = a * to ** 3 - 5.0 * a * to ** 2 + 8.0 * a * to - 4.0 * a
    return out


def _gather_axis(arr: np.ndarray, idx: np.ndarray, weights: np.ndarray,
                 axis: int) -> np.ndarray:
    """Weighted gather along one axis: out[..., o, ...] = sum_k w[o,k] * arr[..., idx[o,k], ...]."""
    moved = np.moveaxis(arr, axis, -1)
    gathered = moved[..., idx]              # (..., n_out, n_taps)
    out = np.einsum("...ok,ok->...o", gathered, weights)
    return np.moveaxis(out, -1, axis)


def _upsample_taps(n_in: int, factor: int):
    x = (np.arange(n_in * factor) + 0.5) / factor - 0.5
    base = np.floor(x).astype(int)
    offsets = np.arange(-1, 3)
    taps = base[:, None] + offsets[None, :]
    weights = keys_kernel(x[:, None] - taps)
    return taps % n_in, weights


def _downsample_taps(n_in: int, factor: int):
    # Output center i maps to x = (i + 0.5)*factor - 0.5; the kernel is
    # stretched by the factor for anti-aliasing, and the tap offsets are the
    # same for every output cell, so one weight row serves all of them.
    x_off = (factor - 1) / 2.0
    lo = int(math.floor(x_off - 2.0 * factor)) + 1
    hi = int(math.ceil(x_off + 2.0 * factor))
    offsets = np.arange(lo, hi)
    w = keys_kernel((offsets - x_off) / factor) / factor
    w = w / w.sum()
    anchors = np.arange(n_in // factor) * factor
    taps = (anchors[:, None] + offsets[None, :]) % n_in
    weights = np.broadcast_to(w, (len(anchors), len(w)))
    return taps, weights


def _apply_separable(values: np.ndarray, tap_fn, factor: int) -> np.ndarray:
    out = values
    for axis in (-2, -1):
        n_in = out.shape[axis]
        taps, weights = tap_fn(n_in, factor)
        out = _gather_axis(out, taps, weights, axis)
    return out


def _map_kind(f, factor: int, values_fn, dx_scale: float):
    """Apply an array transform to a Field or a SnapshotStack, fixing up dx."""
    if isinstance(f, Field):
        return Field(values_fn(f.values), f.dx * dx_scale)
    if isinstance(f, SnapshotStack):
        arr = values_fn(f.as_array())
        return SnapshotStack.from_array(arr, f.dx * dx_scale, f.dt_snap)
    raise TypeError(f"expected Field or SnapshotStack, got {type(f).__name__}")


def bicubic_upsample(f, factor: int):
    """Interpolate a Field or SnapshotStack up by an integer factor."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    return _map_kind(f, factor, lambda v: _apply_separable(v, _upsample_taps, factor),
                     1.0 / factor)


def bicubic_downsample(f, factor: int):
    """Anti-aliased bicubic reduction by an integer factor.

    Both dims must be divisible by the factor.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    shape = f.values.shape if isinstance(f, Field) else (f.height, f.width)
    if shape[-1] % factor or shape[-2] % factor:
        raise ValueError(f"dims {shape} not divisible by factor {factor}")
    return _map_kind(f, factor, lambda v: _apply_separable(v, _downsample_taps, factor),
                     float(factor))


def drop_pixels(stack: SnapshotStack, rate: float, seed: int):
    """Zero out a random set of pixel sites, the same sites in all channels.

    Exactly round(rate * width * height) distinct sites are chosen by a
    seeded Fisher-Yates partial shuffle, so the draw is bit-reproducible.
    Returns (corrupted stack, presence mask).
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    w, h = stack.width, stack.height
    n_sites = w * h
    n_drop = int(rate * n_sites + 0.5)

    rng = Rng64(seed)
    sites = list(range(n_sites))
    for i in range(n_drop):
        j = i + rng.next_below(n_sites - i)
        sites[i], sites[j] = sites[j], sites[i]
    dropped = np.asarray(sites[:n_drop], dtype=np.int64)

    bits = np.ones(n_sites, dtype=bool)
    bits[dropped] = False
    mask = Mask(bits.reshape(h, w))
    return apply_mask(stack, mask), mask


def apply_mask(stack: SnapshotStack, mask: Mask) -> SnapshotStack:
    """Set dropped sites to the sentinel value in every channel."""
    if (mask.height, mask.width) != (stack.height, stack.width):
        raise ValueError("mask dims do not match stack")
    arr = stack.as_array().copy()
    arr[:, ~mask.bits] = DROP_SENTINEL
    return SnapshotStack.from_array(arr, stack.dx, stack.dt_snap)


def _circular_convolve(field: np.ndarray, kernel_1d: np.ndarray,
                       offsets: np.ndarray) -> np.ndarray:
    """Periodic 2D convolution with a separable kernel given as 1D taps."""
    h, w = field.shape
    kpad_r = np.zeros(h)
    np.add.at(kpad_r, offsets % h, kernel_1d)
    kpad_c = np.zeros(w)
    np.add.at(kpad_c, offsets % w, kernel_1d)
    out = np.fft.irfft(np.fft.rfft(field, axis=0) * np.fft.rfft(kpad_r)[:, None],
                       n=h, axis=0)
    out = np.fft.irfft(np.fft.rfft(out, axis=1) * np.fft.rfft(kpad_c)[None, :],
                       n=w, axis=1)
    return out


def fill_missing(stack: SnapshotStack, mask: Mask) -> SnapshotStack:
    """Fill dropped pixels by normalized convolution with the Keys window.

    Numerator = (values * mask) convolved with the kernel footprint,
    denominator = mask convolved likewise; holes whose denominator is still
    negligible wait for the next pass, where the footprint doubles. Present
    pixels pass through unchanged. The scale-1 window samples the Keys kernel
    at integers, which is the identity stencil, so the first productive pass
    is scale 2.
    """
    if (mask.height, mask.width) != (stack.height, stack.width):
        raise ValueError("mask dims do not match stack")
    present = mask.bits
    if not present.any():
        raise AllPixelsMissingError("cannot fill a stack with no present pixels")

    arr = stack.as_array().copy()
    missing = ~present
    if not missing.any():
        return SnapshotStack.from_array(arr, stack.dx, stack.dt_snap)

    m = present.astype(np.float64)
    masked = arr * m[None, :, :]
    scale = 1
    limit = 4 * max(stack.width, stack.height)
    while missing.any():
        if scale > limit:
            raise RuntimeError("fill_missing failed to cover every hole")
        offsets = np.arange(-(2 * scale - 1), 2 * scale)
        kernel = keys_kernel(offsets / scale)
        den = _circular_convolve(m, kernel, offsets)
        fillable = missing & (den > 1e-8)
        if fillable.any():
            for c in range(3):
                num = _circular_convolve(masked[c], kernel, offsets)
                arr[c][fillable] = num[fillable] / den[fillable]
            missing &= ~fillable
        scale *= 2
    return SnapshotStack.from_array(arr, stack.dx, stack.dt_snap)


def bicubic_baseline(lr_stack: SnapshotStack, mask: Mask, factor: int = 4) -> SnapshotStack:
    """The non-learned reference: fill the holes, then upsample 4x."""
    return bicubic_upsample(fill_missing(lr_stack, mask), factor)

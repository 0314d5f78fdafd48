"""Gaussian blurring of fixation points or raw fixation densities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FixationDensity,
    FixationInput,
    FixationPoints,
    InputError,
    ParameterError,
    RawDensity,
)


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """Normalized ``size x size`` Gaussian window.

    The anchor sits at index ``size // 2`` on both axes, so an even window
    covers offsets ``-size/2 .. size/2 - 1``.
    """

    size: int
    sigma: float
    weights: np.ndarray
    profile: np.ndarray  # normalized 1-D factor; weights == outer(profile, profile) up to rounding

    @property
    def anchor(self) -> int:
        return self.size // 2

    def offsets(self) -> np.ndarray:
        return np.arange(self.size) - self.anchor


def gaussian_kernel(sigma: float, mu: int) -> GaussianKernel:
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    if int(mu) != mu or mu < 1:
        raise ParameterError(f"mu must be an integer >= 1, got {mu}")
    mu = int(mu)
    d = (np.arange(mu) - mu // 2).astype(np.float64)
    r2 = d[:, None] ** 2 + d[None, :] ** 2
    w = np.exp(-r2 / (2.0 * sigma * sigma))
    w /= w.sum()
    g = np.exp(-(d ** 2) / (2.0 * sigma * sigma))
    g /= g.sum()
    w.setflags(write=False)
    g.setflags(write=False)
    return GaussianKernel(size=mu, sigma=float(sigma), weights=w, profile=g)


def _stamp(out: np.ndarray, kernel: GaussianKernel, x: int, y: int, weight: float = 1.0) -> None:
    h, w = out.shape
    a, k = kernel.anchor, kernel.size
    y0, x0 = y - a, x - a
    ys, ye = max(y0, 0), min(y0 + k, h)
    xs, xe = max(x0, 0), min(x0 + k, w)
    if ys >= ye or xs >= xe:
        return
    out[ys:ye, xs:xe] += weight * kernel.weights[ys - y0:ye - y0, xs - x0:xe - x0]


def _correlate_axis(img: np.ndarray, taps: np.ndarray, anchor: int, axis: int) -> np.ndarray:
    """out[i] = sum_j taps[j] * img[i - (j - anchor)] with zero padding."""
    out = np.zeros_like(img)
    n = img.shape[axis]
    for j, t in enumerate(taps):
        s = j - anchor
        if abs(s) >= n:
            continue
        src = [slice(None)] * img.ndim
        dst = [slice(None)] * img.ndim
        if s >= 0:
            dst[axis], src[axis] = slice(s, n), slice(0, n - s)
        else:
            dst[axis], src[axis] = slice(0, n + s), slice(-s, n)
        out[tuple(dst)] += t * img[tuple(src)]
    return out


def convolve_density(grid: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Zero-padded 2-D convolution of a density with the kernel (separable form).

    Each input pixel spreads its value exactly like a stamped point would.
    """
    grid = np.asarray(grid, dtype=np.float64)
    tmp = _correlate_axis(grid, kernel.profile, kernel.anchor, axis=0)
    return _correlate_axis(tmp, kernel.profile, kernel.anchor, axis=1)


def convolve_density_direct(grid: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Reference implementation: stamp the full 2-D kernel at every nonzero pixel."""
    grid = np.asarray(grid, dtype=np.float64)
    out = np.zeros_like(grid)
    for y, x in np.argwhere(grid != 0):
        _stamp(out, kernel, int(x), int(y), grid[y, x])
    return out


def blur_fixations(fix: FixationInput, kernel: GaussianKernel, shape: tuple[int, int]) -> FixationDensity:
    """Blur fixations into a density map of ``shape`` (height, width)."""
    h, w = shape
    if isinstance(fix, FixationPoints):
        fix.check_bounds(shape)
        out = np.zeros((h, w), dtype=np.float64)
        for x, y in fix.points:
            _stamp(out, kernel, x, y)
        return FixationDensity(out)
    if isinstance(fix, RawDensity):
        if fix.grid.shape != (h, w):
            raise InputError(
                f"density is {fix.grid.shape[1]}x{fix.grid.shape[0]}, expected {w}x{h}"
            )
        return FixationDensity(convolve_density(fix.grid, kernel))
    raise InputError(f"unsupported fixation input {type(fix).__name__}")

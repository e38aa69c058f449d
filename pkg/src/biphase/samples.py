"""Synthetic test samples and sample-file import.

Edges are rounded with a Gaussian of width ``edge_sigma`` (default one pixel),
standing in for the finite resolution of the relay optics. A perfectly sharp
one-pixel phase jump would be seen by any finite-difference method as
``sin(step)`` instead of ``step``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.special import erf

from .biphoton import SampleTransmittance
from .field import DomainError, Grid2D
from .fileformats import field_io_read, field_io_write


def thin_sample_phase(depth: float, refractive_index: float, wavelength: float) -> float:
    """Phase ``2 pi (n - 1) d / lambda`` of a thin step of height ``depth``."""
    return 2 * np.pi * (refractive_index - 1) * depth / wavelength


def _edge_profile(u: np.ndarray, lo: float, hi: float, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return ((u >= lo) & (u < hi)).astype(float)
    s = np.sqrt(2) * sigma
    return 0.5 * (erf((u - lo) / s) - erf((u - hi) / s))


def soft_rectangle(grid: Grid2D, center, size, edge_sigma: float | None = None) -> np.ndarray:
    """Indicator of an axis-aligned rectangle (meters, origin at the grid center)."""
    if edge_sigma is None:
        edge_sigma = grid.pitch
    x, y = grid.coords()
    cx, cy = center
    wx, wy = size
    return _edge_profile(x, cx - wx / 2, cx + wx / 2, edge_sigma) * _edge_profile(
        y, cy - wy / 2, cy + wy / 2, edge_sigma
    )


def phase_step_square(
    grid: Grid2D,
    side: float,
    alpha: float,
    center=(0.0, 0.0),
    edge_sigma: float | None = None,
) -> SampleTransmittance:
    mask = soft_rectangle(grid, center, (side, side), edge_sigma)
    return SampleTransmittance(grid, np.ones(grid.shape), alpha * mask)


def amplitude_square(
    grid: Grid2D,
    side: float,
    T: float,
    center=(0.0, 0.0),
    edge_sigma: float | None = None,
    alpha: float = 0.0,
) -> SampleTransmittance:
    """Square of power transmittance ``T`` (and optional phase) on a clear background."""
    if not 0 <= T <= 1:
        raise DomainError(f"transmittance {T} outside [0, 1]")
    mask = soft_rectangle(grid, center, (side, side), edge_sigma)
    return SampleTransmittance(grid, 1 - (1 - T) * mask, alpha * mask)


def three_bar_mask(grid: Grid2D, bar_width: float, center=(0.0, 0.0), edge_sigma=None) -> np.ndarray:
    """Resolution-target element: three vertical bars, length 5x width, gaps equal to width."""
    cx, cy = center
    return sum(
        soft_rectangle(grid, (cx + k * bar_width, cy), (bar_width, 5 * bar_width), edge_sigma)
        for k in (-2, 0, 2)
    )


def three_bar_target(
    grid: Grid2D,
    depth: float = 127e-9,
    refractive_index: float = 1.47,
    bar_width: float = 440e-6,
    wavelength: float = 810e-9,
    center=(0.0, 0.0),
    edge_sigma: float | None = None,
) -> SampleTransmittance:
    """Etched three-bar phase target; phase per bar from the etch depth at ``wavelength``."""
    alpha = thin_sample_phase(depth, refractive_index, wavelength)
    mask = three_bar_mask(grid, bar_width, center, edge_sigma)
    return SampleTransmittance(grid, np.ones(grid.shape), alpha * mask)


def three_bar_regions(grid: Grid2D, bar_width: float, center=(0.0, 0.0), margin: float | None = None):
    """Boolean ``(plateau, background)`` masks: the middle bar and the gap to its right.

    Each region is shrunk by ``margin`` (default two pixels) away from the edges.
    """
    if margin is None:
        margin = 2 * grid.pitch
    x, y = grid.coords()
    cx, cy = center
    half_w = bar_width / 2 - margin
    half_l = 5 * bar_width / 2 - margin
    in_y = np.abs(y - cy) <= half_l
    plateau = (np.abs(x - cx) <= half_w) & in_y
    background = (np.abs(x - cx - bar_width) <= half_w) & in_y
    return plateau, background


def load_sample_csv(t_path, alpha_path, pitch: float = 55e-6) -> SampleTransmittance:
    """Read power transmittance and phase (rad) from two comma-separated matrices."""
    T = np.loadtxt(t_path, delimiter=",", ndmin=2)
    alpha = np.loadtxt(alpha_path, delimiter=",", ndmin=2)
    if T.shape != alpha.shape:
        raise DomainError(f"T {T.shape} and alpha {alpha.shape} matrices differ in shape")
    ny, nx = T.shape
    return SampleTransmittance(Grid2D(nx, ny, pitch), T, alpha)


def load_sample_file(path) -> SampleTransmittance:
    """Read ``t(x)`` stored as a complex BPFD field."""
    return SampleTransmittance.from_field(field_io_read(path))


def save_sample_file(sample: SampleTransmittance, path) -> None:
    field_io_write(sample.as_field(), Path(path))

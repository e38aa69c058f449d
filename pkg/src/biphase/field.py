"""Sampled scalar fields, unitary DFTs and the paraxial Fresnel propagator.

Arrays are stored numpy-style with shape ``(ny, nx)``: row index is y, column
index is x. All lengths are SI (meters).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = [
    "DomainError",
    "Grid2D",
    "ComplexField",
    "SpatialFrequencyGrid",
    "dft_forward",
    "dft_inverse",
    "fresnel_propagate",
    "fresnel_spread",
]

DEFAULT_PITCH = 55e-6
DEFAULT_N = 256


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


@dataclass(frozen=True)
class Grid2D:
    nx: int = DEFAULT_N
    ny: int = DEFAULT_N
    pitch: float = DEFAULT_PITCH

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise DomainError(f"grid needs at least 2x2 pixels, got {self.nx}x{self.ny}")
        if not self.pitch > 0:
            raise DomainError(f"pitch must be positive, got {self.pitch}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def extent(self) -> tuple[float, float]:
        """Physical size (x, y) of the grid in meters."""
        return (self.nx * self.pitch, self.ny * self.pitch)

    def coords(self, centered: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Return broadcastable ``(x, y)`` pixel-center coordinates.

        With ``centered`` the origin sits on pixel ``(nx // 2, ny // 2)``.
        """
        x = np.arange(self.nx, dtype=float)
        y = np.arange(self.ny, dtype=float)
        if centered:
            x -= self.nx // 2
            y -= self.ny // 2
        return x[None, :] * self.pitch, y[:, None] * self.pitch

    def same_sampling(self, other: "Grid2D") -> bool:
        return self.shape == other.shape and np.isclose(self.pitch, other.pitch, rtol=1e-12, atol=0)


@dataclass(frozen=True)
class SpatialFrequencyGrid:
    """Angular spatial frequencies (rad/m) of a grid, in DFT bin order."""

    grid: Grid2D

    @property
    def kx(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.grid.nx, d=self.grid.pitch)[None, :]

    @property
    def ky(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.grid.ny, d=self.grid.pitch)[:, None]

    @property
    def k2(self) -> np.ndarray:
        return self.kx**2 + self.ky**2

    @property
    def k_max(self) -> float:
        return np.pi / self.grid.pitch


@dataclass
class ComplexField:
    grid: Grid2D
    values: np.ndarray
    aliased: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.grid.shape:
            raise DomainError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid2D) -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def ones(cls, grid: Grid2D) -> "ComplexField":
        return cls(grid, np.ones(grid.shape, dtype=np.complex128))

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.values)

    def power(self) -> float:
        """Total power ``sum |v|^2 * pitch^2``."""
        return float(np.sum(self.intensity) * self.grid.pitch**2)

    def normalized(self) -> "ComplexField":
        p = self.power()
        if p == 0:
            raise DomainError("cannot normalize a field with zero power")
        return ComplexField(self.grid, self.values / np.sqrt(p), self.aliased)

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.values.copy(), self.aliased)

    def __eq__(self, other):
        if not isinstance(other, ComplexField):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)


def dft_forward(f: ComplexField) -> ComplexField:
    """Unitary 2D DFT; the result is indexed in DFT bin order."""
    return ComplexField(f.grid, np.fft.fft2(f.values, norm="ortho"))


def dft_inverse(f: ComplexField) -> ComplexField:
    return ComplexField(f.grid, np.fft.ifft2(f.values, norm="ortho"))


def fresnel_spread(grid: Grid2D, wavelength: float, dz: float) -> float:
    """Lateral walk (m) of the highest grid frequency over ``dz``."""
    return wavelength * abs(dz) * SpatialFrequencyGrid(grid).k_max / (2 * np.pi)


def fresnel_transfer(grid: Grid2D, wavelength: float, dz: float) -> np.ndarray:
    """Paraxial transfer function ``exp(-i lambda dz |k|^2 / 4 pi)``.

    The constant carrier ``exp(2 pi i dz / lambda)`` is dropped.
    """
    k2 = SpatialFrequencyGrid(grid).k2
    return np.exp(-1j * wavelength * dz * k2 / (4 * np.pi))


def fresnel_propagate(f: ComplexField, wavelength: float, dz: float) -> ComplexField:
    """Propagate ``f`` a distance ``dz`` (may be negative) in the Fresnel regime.

    Convolution with ``exp(i pi |dx|^2 / (lambda dz)) / (i lambda dz)``, carried out
    as a product with the matching transfer function on the periodic grid, so the
    operation is exactly unitary and ``dz`` and ``-dz`` are inverses.

    The result has ``aliased=True`` when the highest grid frequency walks further
    than half the grid extent; the numbers are still returned.
    """
    if not wavelength > 0:
        raise DomainError(f"wavelength must be positive, got {wavelength}")
    if dz == 0:
        return ComplexField(f.grid, f.values.copy(), f.aliased)
    out = sfft.ifft2(sfft.fft2(f.values) * fresnel_transfer(f.grid, wavelength, dz))
    half_extent = 0.5 * min(f.grid.extent)
    aliased = f.aliased or fresnel_spread(f.grid, wavelength, dz) > half_extent
    return ComplexField(f.grid, out, aliased)


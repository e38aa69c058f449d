"""Bi-photon state in the near field of a thin SPDC crystal and its free-space evolution.

The pair amplitude factorizes as ``psi(X_i, X_s) = Phi(X_-) * E(X_+)`` with the
half-sum/half-difference coordinates ``X_+ = (X_i + X_s) / 2`` and
``X_- = (X_i - X_s) / 2``. In these coordinates both factors diffract like a
classical field at the pump wavelength.

``E`` lives on the camera grid (pixel ``j`` is ``X_+ = j * pitch``). ``Phi`` lives
on a centered relative grid of the same shape and pitch, index ``n // 2`` being
``X_- = 0``. A relative offset of ``m`` pixels therefore puts the two photons
``2 m`` pixels apart.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .field import (
    ComplexField,
    DomainError,
    Grid2D,
    SpatialFrequencyGrid,
    fresnel_propagate,
)

BIPHOTON = "biphoton"
CLASSICAL = "classical"


class DegenerateDensityError(DomainError):
    """The pair density carries no probability mass on the camera grid."""


@dataclass(frozen=True)
class OpticalConfig:
    lambda_p: float = 405e-9
    L: float = 1e-3
    xi: float = 0.0
    grid: Grid2D = field(default_factory=Grid2D)
    lambda_spdc: float | None = None

    def __post_init__(self):
        if not self.lambda_p > 0:
            raise DomainError(f"lambda_p must be positive, got {self.lambda_p}")
        if not self.L > 0:
            raise DomainError(f"crystal thickness must be positive, got {self.L}")
        if self.lambda_spdc is None:
            object.__setattr__(self, "lambda_spdc", 2 * self.lambda_p)
        elif self.lambda_spdc != 2 * self.lambda_p:
            raise DomainError("only degenerate SPDC is modeled: lambda_spdc must equal 2 * lambda_p")

    @property
    def correlation_width(self) -> float:
        """Near-field phase-matching width scale ``sqrt(L lambda_p / 4 pi)``."""
        return float(np.sqrt(self.L * self.lambda_p / (4 * np.pi)))


def wrap_phase(alpha):
    """Wrap to the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(alpha, dtype=float), 2 * np.pi)


@dataclass
class SampleTransmittance:
    grid: Grid2D
    T: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        self.alpha = wrap_phase(self.alpha)
        if self.T.shape != self.grid.shape or self.alpha.shape != self.grid.shape:
            raise DomainError("T and alpha must match the grid shape")
        if np.any(self.T < 0) or np.any(self.T > 1) or not np.all(np.isfinite(self.T)):
            raise DomainError("power transmittance must lie in [0, 1]")

    @classmethod
    def clear(cls, grid: Grid2D) -> "SampleTransmittance":
        return cls(grid, np.ones(grid.shape), np.zeros(grid.shape))

    @classmethod
    def from_field(cls, t: ComplexField) -> "SampleTransmittance":
        T = np.abs(t.values) ** 2
        if np.any(T > 1 + 1e-12):
            raise DomainError("|t|^2 exceeds 1 somewhere")
        return cls(t.grid, np.minimum(T, 1.0), np.angle(t.values))

    @property
    def t(self) -> np.ndarray:
        return np.sqrt(self.T) * np.exp(1j * self.alpha)

    def as_field(self) -> ComplexField:
        return ComplexField(self.grid, self.t)


@dataclass
class BiphotonFactors:
    """Relative (``phi``) and centroid (``e``) factors at plane ``z``.

    ``e`` is not renormalized: its power is the probability that both photons of a
    pair created at the crystal make it through the sample.
    """

    phi: ComplexField
    e: ComplexField
    z: float = 0.0
    wavelength: float = 405e-9

    def __post_init__(self):
        if not np.isclose(self.phi.grid.pitch, self.e.grid.pitch, rtol=1e-12, atol=0):
            raise DomainError("phi and e must be sampled with equal pitch")

    @property
    def aliased(self) -> bool:
        return self.phi.aliased or self.e.aliased


def pump_near_field(config: OpticalConfig, waist: float = 1e-3, amplitude: float = 1.0) -> ComplexField:
    """Collimated Gaussian pump ``exp(-r^2 / waist^2)`` scaled to power ``amplitude**2``.

    ``waist=np.inf`` gives a uniform beam filling the grid.
    """
    g = config.grid
    if not waist >= 3 * g.pitch:
        raise DomainError(f"waist {waist} m is not resolved by pitch {g.pitch} m (need >= 3 px)")
    if np.isinf(waist):
        values = np.ones(g.shape, dtype=complex)
    else:
        x, y = g.coords()
        values = np.exp(-(x**2 + y**2) / waist**2).astype(complex)
    f = ComplexField(g, values).normalized()
    f.values *= amplitude
    return f


def phase_matching_far(config: OpticalConfig) -> ComplexField:
    """``sinc(L lambda_p |k_-|^2 / 4 pi + xi)`` on the relative-momentum grid (DFT order)."""
    k2 = SpatialFrequencyGrid(config.grid).k2
    arg = config.L * config.lambda_p * k2 / (4 * np.pi) + config.xi
    # np.sinc is sin(pi u)/(pi u)
    return ComplexField(config.grid, np.sinc(arg / np.pi).astype(complex))


def phase_matching_near(config: OpticalConfig) -> ComplexField:
    """Near-field relative factor ``Phi_0``, centered on ``X_- = 0``, unit power."""
    far = phase_matching_far(config)
    near = np.fft.fftshift(np.fft.ifft2(far.values))
    return ComplexField(config.grid, near).normalized()


def apply_sample(e: ComplexField, s: SampleTransmittance, mode: str = BIPHOTON) -> ComplexField:
    """Multiply by ``t**2`` (both photons cross the sample) or ``t`` (classical beam)."""
    if not e.grid.same_sampling(s.grid):
        raise DomainError("field and sample grids differ")
    if mode == BIPHOTON:
        factor = s.T * np.exp(2j * s.alpha)
    elif mode == CLASSICAL:
        factor = s.t
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return ComplexField(e.grid, e.values * factor, e.aliased)


def sample_plane_factors(
    config: OpticalConfig,
    s: SampleTransmittance,
    waist: float = 1e-3,
) -> BiphotonFactors:
    """Factors just after a sample placed in the crystal image plane."""
    pump = pump_near_field(config, waist)
    return BiphotonFactors(
        phi=phase_matching_near(config),
        e=apply_sample(pump, s, BIPHOTON),
        z=0.0,
        wavelength=config.lambda_p,
    )


def partner_loss_factors(
    config: OpticalConfig,
    s: SampleTransmittance,
    waist: float = 1e-3,
) -> BiphotonFactors:
    """Pairs that lose exactly one photon in the sample.

    The centroid weight is ``2 T (1 - T) |A|^2``; only one photon of each such pair
    reaches the detector. Exact at the sample plane; away from it the surviving
    photon is propagated as if it kept the pump phase.
    """
    pump = pump_near_field(config, waist)
    e = ComplexField(config.grid, pump.values * np.sqrt(2 * s.T * (1 - s.T)))
    return BiphotonFactors(
        phi=phase_matching_near(config), e=e, z=0.0, wavelength=config.lambda_p
    )


def propagate_biphoton(factors: BiphotonFactors, dz: float) -> BiphotonFactors:
    """Fresnel-propagate both factors by ``dz`` at the pump wavelength."""
    lam = factors.wavelength
    return BiphotonFactors(
        phi=fresnel_propagate(factors.phi, lam, dz),
        e=fresnel_propagate(factors.e, lam, dz),
        z=factors.z + dz,
        wavelength=lam,
    )


def classical_field_at(
    field_in: ComplexField,
    s: SampleTransmittance,
    dz: float,
    wavelength: float = 810e-9,
) -> ComplexField:
    """Coherent reference beam: ``field_in * t`` propagated by ``dz``."""
    return fresnel_propagate(apply_sample(field_in, s, CLASSICAL), wavelength, dz)


def _valid_window_sums(weights: np.ndarray, offsets_y: np.ndarray, offsets_x: np.ndarray) -> np.ndarray:
    """For each relative offset ``m``, sum ``weights[j]`` over ``j`` with ``j +- m`` in-grid."""
    ny, nx = weights.shape
    c = np.zeros((ny + 1, nx + 1))
    c[1:, 1:] = np.cumsum(np.cumsum(weights, axis=0), axis=1)
    ay = np.abs(offsets_y)[:, None]
    ax = np.abs(offsets_x)[None, :]
    y0, y1 = ay, ny - ay
    x0, x1 = ax, nx - ax
    ok = (y1 > y0) & (x1 > x0)
    y0c, y1c = np.clip(y0, 0, ny), np.clip(y1, 0, ny)
    x0c, x1c = np.clip(x0, 0, nx), np.clip(x1, 0, nx)
    s = c[y1c, x1c] - c[y0c, x1c] - c[y1c, x0c] + c[y0c, x0c]
    return np.where(ok, s, 0.0)


@dataclass
class JointDensity:
    """Coincidence probability over camera pixel pairs, held in factorized form.

    ``C(X_i, X_s) = |Phi(m)|^2 |E(j)|^2 / Z`` for ``X_i = j + m``, ``X_s = j - m``,
    restricted to pairs with both photons on the grid. ``Z`` is the in-grid mass.
    """

    grid: Grid2D
    e2: np.ndarray
    phi2: np.ndarray
    norm: float

    @property
    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.grid.shape
        return np.arange(ny) - ny // 2, np.arange(nx) - nx // 2

    def marginal_plus(self) -> np.ndarray:
        """Distribution of the centroid pixel ``j`` (camera grid)."""
        ny, nx = self.grid.shape
        c = np.zeros((ny + 1, nx + 1))
        c[1:, 1:] = np.cumsum(np.cumsum(self.phi2, axis=0), axis=1)
        # admissible offsets for centroid j: |m| <= min(j, n - 1 - j), per axis
        ry = np.minimum(np.arange(ny), ny - 1 - np.arange(ny))[:, None]
        rx = np.minimum(np.arange(nx), nx - 1 - np.arange(nx))[None, :]
        y0 = np.clip(ny // 2 - ry, 0, ny)
        y1 = np.clip(ny // 2 + ry + 1, 0, ny)
        x0 = np.clip(nx // 2 - rx, 0, nx)
        x1 = np.clip(nx // 2 + rx + 1, 0, nx)
        admissible = c[y1, x1] - c[y0, x1] - c[y1, x0] + c[y0, x0]
        return admissible * self.e2 / self.norm

    def marginal_minus(self) -> np.ndarray:
        """Distribution of the relative offset ``m`` (centered relative grid)."""
        my, mx = self.offsets
        return self.phi2 * _valid_window_sums(self.e2, my, mx) / self.norm

    def dense(self) -> np.ndarray:
        """Full table ``P[yi, xi, ys, xs]``; only sensible for small grids."""
        ny, nx = self.grid.shape
        if ny * nx > 64 * 64:
            raise DomainError("dense joint density requested for a large grid")
        out = np.zeros((ny, nx, ny, nx))
        my, mx = self.offsets
        jy, jx = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
        for iy, oy in enumerate(my):
            for ix, ox in enumerate(mx):
                w = self.phi2[iy, ix]
                if w == 0:
                    continue
                yi, xi, ys, xs = jy + oy, jx + ox, jy - oy, jx - ox
                ok = (yi >= 0) & (yi < ny) & (xi >= 0) & (xi < nx) & (ys >= 0) & (ys < ny) & (xs >= 0) & (xs < nx)
                out[yi[ok], xi[ok], ys[ok], xs[ok]] += w * self.e2[ok]
        return out / self.norm


def joint_density(factors: BiphotonFactors) -> JointDensity:
    """Normalized pair density of ``factors`` restricted to the camera grid."""
    e2 = factors.e.intensity
    phi2 = factors.phi.intensity
    g = factors.e.grid
    my = np.arange(g.ny) - g.ny // 2
    mx = np.arange(g.nx) - g.nx // 2
    norm = float(np.sum(phi2 * _valid_window_sums(e2, my, mx)))
    if not norm > 0:
        raise DegenerateDensityError("joint density has zero mass on the camera grid")
    return JointDensity(g, e2, phi2, norm)

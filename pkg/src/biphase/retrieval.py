"""Non-interferometric phase retrieval from defocused intensity or correlation images.

Phases are gauged so that the median over the illuminated support is zero; for
targets covering less than half of the support this puts the background at 0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import gaussian_filter

from .field import (
    ComplexField,
    DomainError,
    Grid2D,
    SpatialFrequencyGrid,
    fresnel_propagate,
    fresnel_transfer,
)

CM2 = 1e4  # m^-2 per cm^-2


class SingularKernelError(DomainError):
    pass


class UndefinedRatioError(DomainError):
    pass


@dataclass(frozen=True)
class TieConfig:
    epsilon: float
    dz: float
    lambda_eff: float
    i_floor: float = 1e-3
    support_level: float = 0.1

    def __post_init__(self):
        if self.epsilon < 0:
            raise DomainError("epsilon must be non-negative")
        if self.dz == 0:
            raise DomainError("plane separation dz must be non-zero")
        if not self.lambda_eff > 0:
            raise DomainError("lambda_eff must be positive")

    @classmethod
    def from_cm2(cls, epsilon_cm2: float, dz: float, lambda_eff: float, **kw) -> "TieConfig":
        return cls(epsilon_cm2 * CM2, dz, lambda_eff, **kw)

    def with_epsilon(self, epsilon: float) -> "TieConfig":
        return TieConfig(epsilon, self.dz, self.lambda_eff, self.i_floor, self.support_level)


@dataclass
class RetrievalResult:
    phase: np.ndarray
    amplitude: np.ndarray
    epsilon_used: float
    residual: float
    method: str
    iterations: int = 0
    errors: list = field(default_factory=list)
    scan: list = field(default_factory=list)  # (epsilon, Err) for TIE scans


def regularized_kernel(k2: np.ndarray, wavelength: float, epsilon: float) -> np.ndarray:
    """``-lambda k^2 / ((lambda k^2)^2 / 2 pi + 2 pi epsilon)``.

    Tends to the Poisson Green function ``-2 pi / (lambda k^2)`` as epsilon -> 0 and
    vanishes at k = 0 for epsilon > 0.
    """
    if epsilon <= 0:
        raise SingularKernelError("epsilon = 0 leaves the kernel singular at k = 0")
    lk2 = wavelength * k2
    return -lk2 / (lk2**2 / (2 * np.pi) + 2 * np.pi * epsilon)


def support_mask(intensity: np.ndarray, level: float = 0.1) -> np.ndarray:
    return intensity >= level * intensity.max()


def remove_offset(phase: np.ndarray, support: np.ndarray) -> np.ndarray:
    return phase - np.median(phase[support])


def _match_total(img: np.ndarray, reference_total: float) -> np.ndarray:
    s = img.sum()
    return img * (reference_total / s) if s > 0 else img.astype(float)


def propagation_error(
    I0: np.ndarray,
    phase: np.ndarray,
    I_target: np.ndarray,
    dz: float,
    wavelength: float,
    grid: Grid2D,
    smoothing: float = 0.0,
) -> float:
    """L1 mismatch between ``I_target`` and ``|P_dz[sqrt(I0) e^{i phase}]|^2`` at equal totals.

    ``smoothing`` > 0 applies a Gaussian filter of that width (pixels) to both
    images first. With shot-noise-limited data the unsmoothed L1 sum is dominated
    by per-pixel noise and becomes almost blind to the reconstructed structure.
    """
    u = ComplexField(grid, np.sqrt(np.maximum(I0, 0)) * np.exp(1j * phase))
    I_model = fresnel_propagate(u, wavelength, dz).intensity
    target = np.asarray(I_target, dtype=float)
    I_model = _match_total(I_model, target.sum())
    if smoothing > 0:
        target = gaussian_filter(target, smoothing, mode="wrap")
        I_model = gaussian_filter(I_model, smoothing, mode="wrap")
    return float(np.abs(target - I_model).sum())


def tie_invert(
    I0: np.ndarray,
    I1: np.ndarray,
    cfg: TieConfig,
    grid: Grid2D | None = None,
    i_minus: np.ndarray | None = None,
    dz_minus: float | None = None,
) -> RetrievalResult:
    """Phase at the in-focus plane from the intensity change to ``cfg.dz``.

    ``phi = F^-1[G_r F[-dI/dz]] / I0`` with ``I0`` rescaled to unit mean over the
    support. Our propagator uses the ``exp(+i k z)`` convention, for which the
    intensity flow is ``dI/dz = -(lambda / 2 pi) I lap(phi)``; the source term is
    negated accordingly. With a second image ``i_minus`` at ``dz_minus`` the
    derivative is the two-sided difference between ``I1`` and ``i_minus``.
    """
    grid = grid or Grid2D(*np.shape(I0)[::-1])
    I0 = np.asarray(I0, dtype=float)
    if I0.shape != grid.shape or np.shape(I1) != grid.shape:
        raise DomainError("images must match the grid")
    if cfg.epsilon == 0:
        raise SingularKernelError("epsilon = 0 leaves the kernel singular at k = 0")
    total = I0.sum()
    if not total > 0:
        raise DomainError("in-focus image is empty")
    support = support_mask(I0, cfg.support_level)
    scale = I0[support].mean()
    i0 = I0 / scale
    i1 = _match_total(np.asarray(I1, dtype=float), total) / scale
    if i_minus is not None:
        if dz_minus is None or dz_minus == cfg.dz:
            raise DomainError("two-sided difference needs a distinct dz_minus")
        im = _match_total(np.asarray(i_minus, dtype=float), total) / scale
        didz = (i1 - im) / (cfg.dz - dz_minus)
    else:
        didz = (i1 - i0) / cfg.dz

    k2 = SpatialFrequencyGrid(grid).k2
    G = regularized_kernel(k2, cfg.lambda_eff, cfg.epsilon)
    phi = np.fft.ifft2(G * np.fft.fft2(-didz)).real
    phi /= np.maximum(i0, cfg.i_floor * i0.max())
    phi = remove_offset(phi, support)
    residual = propagation_error(I0, phi, I1, cfg.dz, cfg.lambda_eff, grid)
    return RetrievalResult(phi, np.sqrt(np.maximum(I0, 0)), cfg.epsilon, residual, "TIE")


def epsilon_scan(
    I0: np.ndarray,
    I1: np.ndarray,
    I2_exp: np.ndarray,
    z2: float,
    cfg: TieConfig,
    epsilon_list,
    grid: Grid2D | None = None,
    i_minus: np.ndarray | None = None,
    dz_minus: float | None = None,
    smoothing: float = 0.0,
) -> RetrievalResult:
    """Pick epsilon by propagating each TIE solution to ``z2`` and comparing with ``I2_exp``.

    ``Err`` is the per-pixel absolute difference summed over the image, after the
    model intensity is rescaled to the measured total (and both are optionally
    smoothed, see :func:`propagation_error`).
    """
    eps = list(epsilon_list)
    if not eps:
        raise DomainError("epsilon_list is empty")
    grid = grid or Grid2D(*np.shape(I0)[::-1])
    best, scan = None, []
    for e in eps:
        r = tie_invert(I0, I1, cfg.with_epsilon(e), grid, i_minus, dz_minus)
        err = propagation_error(I0, r.phase, I2_exp, z2, cfg.lambda_eff, grid, smoothing)
        scan.append((e, err))
        if best is None or err < best[1]:
            best = (r, err)
    result, err = best
    result.residual = err
    result.scan = scan
    return result


def gs_retrieve(
    images,
    lambda_eff: float,
    max_iter: int = 1000,
    tol: float = 1e-7,
    grid: Grid2D | None = None,
    support_level: float = 0.1,
) -> RetrievalResult:
    """Multi-plane Gerchberg-Saxton with Fresnel propagation between planes.

    ``images`` is a sequence of ``(intensity, z)``. Starting from the plane nearest
    ``z = 0`` with flat phase, the field is swept through the planes in increasing
    ``z`` (cyclically) and back; at each plane its modulus is replaced by the
    measured one. ``errors[k]`` is the summed squared amplitude mismatch met on
    arrival at every plane during sweep ``k``.
    """
    planes = [(np.asarray(I, dtype=float), float(z)) for I, z in images]
    if len(planes) < 2:
        raise DomainError("Gerchberg-Saxton needs at least two planes")
    zs = [z for _, z in planes]
    if len(set(zs)) != len(zs):
        raise DomainError("plane positions must be distinct")
    grid = grid or Grid2D(*planes[0][0].shape[::-1])
    if any(I.shape != grid.shape for I, _ in planes):
        raise DomainError("images must match the grid")
    if any(np.any(I < 0) for I, _ in planes):
        warnings.warn("negative intensities clamped to zero", RuntimeWarning)
        planes = [(np.maximum(I, 0), z) for I, z in planes]

    planes.sort(key=lambda p: p[1])
    start = int(np.argmin([abs(z) for _, z in planes]))
    planes = planes[start:] + planes[:start]
    total = planes[0][0].sum()
    if not total > 0:
        raise DomainError("starting-plane image is empty")
    amps = [np.sqrt(_match_total(I, total)) for I, _ in planes]
    zs = [z for _, z in planes]

    order = list(range(1, len(planes))) + [0]
    hops, cur = [], zs[0]
    for j in order:
        hops.append((j, fresnel_transfer(grid, lambda_eff, zs[j] - cur)))
        cur = zs[j]

    u = amps[0].astype(complex)
    errors: list[float] = []
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        err = 0.0
        for j, H in hops:
            u = sfft.ifft2(sfft.fft2(u) * H)
            mod = np.abs(u)
            err += float(np.sum((mod - amps[j]) ** 2))
            # keep the phase: u / |u|, with angle 0 where the field vanishes
            u = amps[j] * np.divide(u, mod, out=np.ones_like(u), where=mod > 0)
        errors.append(err)
        if err == 0 or (len(errors) > 1 and abs(errors[-2] - err) < tol * errors[-2]):
            break

    u = ComplexField(grid, u)
    if zs[0] != 0:
        u = fresnel_propagate(u, lambda_eff, -zs[0])
    I_sample = u.intensity
    support = support_mask(I_sample, support_level)
    phase = remove_offset(np.angle(u.values), support)
    return RetrievalResult(
        phase, np.abs(u.values), 0.0, errors[-1], "GS", iterations=iterations, errors=errors
    )


@dataclass
class PhaseRoi:
    plateau: np.ndarray
    background: np.ndarray

    @classmethod
    def from_rects(cls, grid: Grid2D, plateau, background) -> "PhaseRoi":
        """Rectangles given as ``(x0, x1, y0, y1)`` pixel bounds, end exclusive."""
        masks = []
        for x0, x1, y0, y1 in (plateau, background):
            if not (0 <= x0 < x1 <= grid.nx and 0 <= y0 < y1 <= grid.ny):
                raise DomainError(f"ROI {(x0, x1, y0, y1)} lies outside the {grid.nx}x{grid.ny} grid")
            m = np.zeros(grid.shape, dtype=bool)
            m[y0:y1, x0:x1] = True
            masks.append(m)
        return cls(*masks)


@dataclass
class PhaseStep:
    step: float
    std: float


@dataclass
class EnhancementRatio:
    ratio: float
    uncertainty: float
    biphoton: PhaseStep
    classical: PhaseStep


def phase_step(phase: np.ndarray, roi: PhaseRoi) -> PhaseStep:
    """Plateau-minus-background phase; spread is the root-sum-square of region std devs."""
    p = phase[roi.plateau]
    b = phase[roi.background]
    if p.size == 0 or b.size == 0:
        raise DomainError("empty ROI region")
    return PhaseStep(float(p.mean() - b.mean()), float(np.hypot(p.std(), b.std())))


def enhancement_ratio(
    biphoton_result: RetrievalResult, classical_result: RetrievalResult, roi: PhaseRoi
) -> EnhancementRatio:
    q = phase_step(biphoton_result.phase, roi)
    c = phase_step(classical_result.phase, roi)
    if c.step == 0:
        raise UndefinedRatioError("classical phase step is zero; ratio undefined")
    r = q.step / c.step
    sigma = float(np.hypot(q.std / c.step, q.step * c.std / c.step**2))
    return EnhancementRatio(r, sigma, q, c)

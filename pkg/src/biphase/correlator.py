"""Coincidence finding and marginal images of the 4D coincidence distribution.

Relative and centroid histograms use doubled-resolution bins so that no pair has
to be split: ``gamma_plus[ys + yi, xs + xi]`` and
``gamma_minus[yi - ys + ny - 1, xi - xs + nx - 1]``. Bin ``s`` of ``gamma_plus``
is the centroid ``s / 2`` in camera pixels.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.ndimage import correlate1d

from .events import EventStream
from .field import DomainError, Grid2D

PAIR_DTYPE = np.dtype(
    [("xi", "<u2"), ("yi", "<u2"), ("xs", "<u2"), ("ys", "<u2"), ("dt", "<i8")]
)


class UnsortedStreamError(DomainError):
    pass


class EmptyImageWarning(UserWarning):
    pass


@dataclass
class CoincidenceSet:
    """Two-photon coincidences; the earlier photon of each pair is labeled signal."""

    grid: Grid2D
    pairs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=PAIR_DTYPE))
    window_ns: int = 10

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, key):
        return CoincidenceSet(self.grid, self.pairs[key], self.window_ns)

    @classmethod
    def from_arrays(cls, grid, xi, yi, xs, ys, dt=None, window_ns=10) -> "CoincidenceSet":
        p = np.zeros(len(xi), dtype=PAIR_DTYPE)
        p["xi"], p["yi"], p["xs"], p["ys"] = xi, yi, xs, ys
        if dt is not None:
            p["dt"] = dt
        return cls(grid, p, window_ns)


def find_coincidences(stream: EventStream, window_ns: int = 10) -> CoincidenceSet:
    """Keep isolated two-photon clusters of a time-sorted event stream.

    Events chained by gaps ``<= window_ns`` form one cluster. Clusters of exactly
    two events become a pair; singles and clusters of three or more are dropped.
    """
    ev = stream.events
    t = ev["t"].astype(np.int64)
    n = len(t)
    if n < 2:
        return CoincidenceSet(stream.grid, np.zeros(0, dtype=PAIR_DTYPE), window_ns)
    gaps = np.diff(t)
    if np.any(gaps < 0):
        raise UnsortedStreamError("event stream is not sorted by time")
    linked = gaps <= window_ns
    # a pair starts at k when k links to k+1 but neither k-1 -> k nor k+1 -> k+2 link
    before = np.concatenate(([False], linked[:-1]))
    after = np.concatenate((linked[1:], [False]))
    first = np.flatnonzero(linked & ~before & ~after)
    second = first + 1
    a, b = ev[first], ev[second]
    return CoincidenceSet.from_arrays(
        stream.grid, b["x"], b["y"], a["x"], a["y"], t[second] - t[first], window_ns
    )


@dataclass
class MarginalImages:
    grid: Grid2D
    gamma_T: np.ndarray
    gamma_i: np.ndarray
    gamma_x: np.ndarray
    gamma_y: np.ndarray
    gamma_minus: np.ndarray
    gamma_plus: np.ndarray

    @property
    def pair_count(self) -> int:
        return int(self.gamma_T.sum())

    def __add__(self, other: "MarginalImages") -> "MarginalImages":
        if self.grid != other.grid:
            raise DomainError("cannot merge marginals from different grids")
        return MarginalImages(
            self.grid,
            *(getattr(self, k) + getattr(other, k) for k in
              ("gamma_T", "gamma_i", "gamma_x", "gamma_y", "gamma_minus", "gamma_plus")),
        )

    @property
    def gamma_minus_symmetric(self) -> np.ndarray:
        """Relative histogram averaged with its signal/idler-swapped copy."""
        return 0.5 * (self.gamma_minus + self.gamma_minus[::-1, ::-1])

    def gamma_plus_camera(self) -> np.ndarray:
        return plus_to_camera_grid(self.gamma_plus)


def plus_to_camera_grid(gamma_plus: np.ndarray) -> np.ndarray:
    """Fold a doubled-grid centroid image onto camera pixels.

    Even bins map to their pixel; odd (half-pixel) bins are shared equally between
    the two neighbours. Totals are preserved.
    """
    g = np.asarray(gamma_plus, dtype=float)

    def fold(a, axis):
        a = np.moveaxis(a, axis, 0)
        n = (a.shape[0] + 1) // 2
        out = a[0::2].copy()
        half = 0.5 * a[1::2]
        out[: n - 1] += half
        out[1:] += half
        return np.moveaxis(out, 0, axis)

    return fold(fold(g, 0), 1)


def accumulate_marginals(pairs: CoincidenceSet) -> MarginalImages:
    g = pairs.grid
    ny, nx = g.shape
    p = pairs.pairs
    xi, yi = p["xi"].astype(np.int64), p["yi"].astype(np.int64)
    xs, ys = p["xs"].astype(np.int64), p["ys"].astype(np.int64)

    def hist2(r, c, nr, nc):
        return np.bincount(r * nc + c, minlength=nr * nc).reshape(nr, nc)

    my, mx = 2 * ny - 1, 2 * nx - 1
    return MarginalImages(
        grid=g,
        gamma_T=hist2(ys, xs, ny, nx),
        gamma_i=hist2(yi, xi, ny, nx),
        gamma_x=hist2(xi, xs, nx, nx),
        gamma_y=hist2(yi, ys, ny, ny),
        gamma_minus=hist2(yi - ys + ny - 1, xi - xs + nx - 1, my, mx),
        gamma_plus=hist2(yi + ys, xi + xs, my, mx),
    )


@dataclass
class ShiftSumReport:
    max_shift: int
    shifts: list  # (cx, cy, count) for every populated shift, most populated first
    top_k: int
    cross_correlations: dict  # ((cx, cy), (cx', cy')) -> normalized cross-correlation
    empty: bool = False

    @property
    def mean_cross_correlation(self) -> float:
        if not self.cross_correlations:
            return float("nan")
        return float(np.mean(list(self.cross_correlations.values())))

    def to_text(self) -> str:
        lines = [
            f"max_shift={self.max_shift}",
            f"populated_shifts={len(self.shifts)}",
            f"top_k={self.top_k}",
            f"mean_cross_correlation={self.mean_cross_correlation:.6f}",
            f"empty={str(self.empty).lower()}",
        ]
        for cx, cy, n in self.shifts[: self.top_k]:
            lines.append(f"shift[{cx},{cy}]={n}")
        for (a, b), v in self.cross_correlations.items():
            lines.append(f"ncc[{a[0]},{a[1]}|{b[0]},{b[1]}]={v:.6f}")
        return "\n".join(lines) + "\n"


def _smooth121(img: np.ndarray) -> np.ndarray:
    k = np.array([1.0, 2.0, 1.0])
    return correlate1d(correlate1d(img, k, axis=0, mode="constant"), k, axis=1, mode="constant")


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / den) if den > 0 else float("nan")


def correlation_image_shift_sum(
    pairs: CoincidenceSet, max_shift: int, top_k: int = 6
) -> tuple[np.ndarray, ShiftSumReport]:
    """Build ``gamma_plus`` from displaced sub-images of pairs with ``X_i = X_s + c``.

    Each sub-image holds signal positions of pairs with shift ``c`` and is placed at
    doubled-grid bin ``2 X_s + c``. The report compares the ``top_k`` most populated
    sub-images: if the pair amplitude factorizes they differ only by counts and
    noise, so their normalized cross-correlation stays high.
    """
    g = pairs.grid
    ny, nx = g.shape
    my, mx = 2 * ny - 1, 2 * nx - 1
    p = pairs.pairs
    xs, ys = p["xs"].astype(np.int64), p["ys"].astype(np.int64)
    cx = p["xi"].astype(np.int64) - xs
    cy = p["yi"].astype(np.int64) - ys
    keep = (np.abs(cx) <= max_shift) & (np.abs(cy) <= max_shift)
    xs, ys, cx, cy = xs[keep], ys[keep], cx[keep], cy[keep]

    side = 2 * max_shift + 1
    key = (cy + max_shift) * side + (cx + max_shift)
    # every sub-image lands on the doubled grid at 2 X_s + c, so their sum is one histogram
    total = np.bincount((2 * ys + cy) * mx + (2 * xs + cx), minlength=my * mx).reshape(my, mx)

    per_shift = np.bincount(key, minlength=side * side)
    populated = np.flatnonzero(per_shift)
    shifts = sorted(
        ((int(k % side) - max_shift, int(k // side) - max_shift, int(per_shift[k])) for k in populated),
        key=lambda c: (-c[2], c[1], c[0]),
    )
    best = [(cx_, cy_) for cx_, cy_, _ in shifts[:top_k]]
    # the top-k sub-images in a single pass: rank of each pair's shift, -1 if not kept
    rank = np.full(side * side, -1, dtype=np.int64)
    rank[[(c[1] + max_shift) * side + (c[0] + max_shift) for c in best]] = np.arange(len(best))
    r = rank[key]
    sel = r >= 0
    pos = (2 * ys[sel] + cy[sel]) * mx + (2 * xs[sel] + cx[sel])
    subs = np.bincount(r[sel] * (my * mx) + pos, minlength=len(best) * my * mx)
    subs = subs.reshape(len(best), my, mx)
    smoothed = {c: _smooth121(subs[i].astype(float)) for i, c in enumerate(best)}
    ncc = {(a, b): _ncc(smoothed[a], smoothed[b]) for a, b in combinations(best, 2)}

    empty = False
    if max_shift == 0 and per_shift[0] == 0:
        warnings.warn("no pairs with zero shift: correlation image is empty", EmptyImageWarning)
        empty = True
    return total, ShiftSumReport(max_shift, shifts, top_k, ncc, empty)

"""Monte Carlo event-camera data: correlated pair hits, singles and dark counts.

Random numbers are drawn from counter-keyed substreams ``(seed, stage, chunk)``
with a fixed chunk size, so the output for a given seed does not depend on how
many workers produce the chunks.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .biphoton import BiphotonFactors, DegenerateDensityError, joint_density
from .field import ComplexField, DomainError, Grid2D
from .fileformats import (
    EVENT_DTYPE,
    atomic_write_bytes,
    decode_events,
    encode_events,
)

MODE_BIPHOTON = "biphoton"
MODE_CLASSICAL = "classical-singles"
_MODE_CODES = {MODE_BIPHOTON: 0, MODE_CLASSICAL: 1}

CHUNK = 1 << 20

# substream stage keys
_STAGE_COUNTS = 0
_STAGE_PAIRS = 1
_STAGE_BROKEN = 2
_STAGE_DARK = 3
_STAGE_FRAMES = 4


class PhotonEvent(NamedTuple):
    x: int
    y: int
    t: int


@dataclass(frozen=True)
class DetectorModel:
    eta: float = 0.1
    dark_rate: float = 10.0
    pair_rate: float = 1.25e4
    exposure: float = 400.0
    jitter_ns: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta}")
        for name in ("dark_rate", "pair_rate", "exposure", "jitter_ns"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in u64")

    @property
    def exposure_ns(self) -> int:
        return int(round(self.exposure * 1e9))


@dataclass
class EventStream:
    grid: Grid2D
    exposure_ns: int
    seed: int
    mode: str = MODE_BIPHOTON
    events: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=EVENT_DTYPE))

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=EVENT_DTYPE)
        if self.mode not in _MODE_CODES:
            raise DomainError(f"unknown stream mode {self.mode!r}")
        if len(self.events) > 1 and np.any(np.diff(self.events["t"].astype(np.int64)) < 0):
            raise DomainError("events must be sorted by timestamp")
        if len(self.events) and (
            self.events["x"].max() >= self.grid.nx or self.events["y"].max() >= self.grid.ny
        ):
            raise DomainError("event coordinates exceed the grid")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        for x, y, t in self.events.tolist():
            yield PhotonEvent(x, y, t)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.exposure_ns == other.exposure_ns
            and self.seed == other.seed
            and self.mode == other.mode
            and np.array_equal(self.events, other.events)
        )

    def singles_image(self) -> np.ndarray:
        """Histogram of every recorded hit."""
        ny, nx = self.grid.shape
        flat = self.events["y"].astype(np.int64) * nx + self.events["x"]
        return np.bincount(flat, minlength=ny * nx).reshape(ny, nx)

    def to_bytes(self) -> bytes:
        header = dict(
            grid=self.grid, exposure_ns=self.exposure_ns, seed=self.seed, mode=_MODE_CODES[self.mode]
        )
        return encode_events(header, self.events)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EventStream":
        header, events = decode_events(data)
        modes = {v: k for k, v in _MODE_CODES.items()}
        if header["mode"] not in modes:
            raise DomainError(f"unknown mode code {header['mode']}")
        return cls(header["grid"], header["exposure_ns"], header["seed"], modes[header["mode"]], events)


def event_io_write(stream: EventStream, path) -> None:
    atomic_write_bytes(path, stream.to_bytes())


def event_io_read(path) -> EventStream:
    return EventStream.from_bytes(Path(path).read_bytes())


def _rng(seed: int, stage: int, chunk: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stage, chunk))))


def _draw(weights: np.ndarray, rng: np.random.Generator, n: int, shuffle: bool) -> np.ndarray:
    """``n`` iid flat indices with probability proportional to ``weights``.

    Drawn as multinomial cell counts; the result is grouped by cell unless shuffled.
    """
    counts = rng.multinomial(n, weights / weights.sum())
    idx = np.repeat(np.arange(len(weights)), counts)
    if shuffle:
        rng.shuffle(idx)
    return idx


def _jittered(birth: np.ndarray, rng: np.random.Generator, sigma: float, exposure_ns: int) -> np.ndarray:
    t = birth.astype(np.int64)
    if sigma > 0:
        j = np.clip(rng.normal(0.0, sigma, len(birth)), -5 * sigma, 5 * sigma)
        t = t + np.rint(j).astype(np.int64)
    return np.clip(t, 0, max(exposure_ns - 1, 0))


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(int(n), CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _pack(x, y, t) -> np.ndarray:
    out = np.empty(len(t), dtype=EVENT_DTYPE)
    out["x"], out["y"], out["t"] = x, y, t
    return out


def _sample_pair_chunk(factors, w_e, w_phi, n, rng, eta, keep_both, sigma, exposure_ns):
    """Draw ``n`` pairs; return packed events that survive grid bounds and detection."""
    g = factors.e.grid
    ny, nx = g.shape
    j = _draw(w_e, rng, n, shuffle=True)
    m = _draw(w_phi, rng, n, shuffle=True)
    jy, jx = np.divmod(j, nx)
    my, mx = np.divmod(m, nx)
    my -= ny // 2
    mx -= nx // 2
    xi, yi = jx + mx, jy + my
    xs, ys = jx - mx, jy - my
    # births in time order so the final merge only sees nearly sorted runs
    birth = np.sort(rng.integers(0, max(exposure_ns, 1), n))
    if keep_both:
        det_i = rng.random(n) < eta
        det_s = rng.random(n) < eta
    else:
        # one photon was absorbed in the sample; pick which one survived
        first = rng.random(n) < 0.5
        det_i = first & (rng.random(n) < eta)
        det_s = ~first & (rng.random(n) < eta)
    t_i = _jittered(birth, rng, sigma, exposure_ns)
    t_s = _jittered(birth, rng, sigma, exposure_ns)
    in_i = (xi >= 0) & (xi < nx) & (yi >= 0) & (yi < ny)
    in_s = (xs >= 0) & (xs < nx) & (ys >= 0) & (ys < ny)
    if keep_both:
        # pairs with a photon off the grid are not part of the density; drop both
        on_grid = in_i & in_s
        det_i &= on_grid
        det_s &= on_grid
    else:
        det_i &= in_i
        det_s &= in_s
    return np.concatenate(
        [_pack(xi[det_i], yi[det_i], t_i[det_i]), _pack(xs[det_s], ys[det_s], t_s[det_s])]
    )


def _factor_weights(factors: BiphotonFactors):
    return factors.e.intensity.ravel(), factors.phi.intensity.ravel()


def _dark_events(grid: Grid2D, det: DetectorModel) -> list[np.ndarray]:
    exposure_ns = det.exposure_ns
    mean = det.dark_rate * grid.nx * grid.ny * det.exposure
    n = _rng(det.seed, _STAGE_DARK, 2**31).poisson(mean) if mean > 0 else 0
    out = []
    for c, size in enumerate(_chunk_sizes(n)):
        rng = _rng(det.seed, _STAGE_DARK, c)
        x = rng.integers(0, grid.nx, size)
        y = rng.integers(0, grid.ny, size)
        t = rng.integers(0, max(exposure_ns, 1), size)
        out.append(_pack(x, y, t))
    return out


def _merge_sorted(parts: list[np.ndarray]) -> np.ndarray:
    if not parts:
        return np.zeros(0, dtype=EVENT_DTYPE)
    ev = np.concatenate(parts)
    order = _stable_order(ev["t"])
    # field-wise gathers are much faster than a gather of packed records
    return _pack(ev["x"][order], ev["y"][order], ev["t"][order])


def _stable_order(t: np.ndarray) -> np.ndarray:
    # inputs are a few concatenated, nearly sorted runs, where timsort is close to linear
    return np.argsort(t, kind="stable")


def generate_pair_events(
    factors: BiphotonFactors,
    det: DetectorModel,
    partner_loss: BiphotonFactors | None = None,
    workers: int = 1,
) -> EventStream:
    """Simulate an acquisition of ``det.exposure`` seconds.

    ``pair_rate`` counts pairs leaving the crystal. A pair has both photons past the
    sample with probability ``factors.e.power()``; with ``partner_loss`` given, one
    photon only with probability ``partner_loss.e.power()``. Positions are drawn
    independently from ``|E|^2`` (centroid) and ``|Phi|^2`` (relative offset).
    """
    g = factors.e.grid
    p_both = factors.e.power()
    p_one = partner_loss.e.power() if partner_loss is not None else 0.0
    if p_both > 1 + 1e-9 or p_both + p_one > 1 + 1e-9:
        raise DomainError("centroid factors must carry total power <= 1")
    if p_both > 0:
        joint_density(factors)  # raises on a degenerate density
    elif p_one == 0:
        raise DegenerateDensityError("no pair reaches the detector")
    exposure_ns = det.exposure_ns
    counts_rng = _rng(det.seed, _STAGE_COUNTS)
    n_total = counts_rng.poisson(det.pair_rate * det.exposure)
    probs = np.clip([p_both, p_one, 1.0 - p_both - p_one], 0, None)
    n_both, n_one, _ = counts_rng.multinomial(n_total, probs / probs.sum())

    jobs = []
    if n_both:
        w_e, w_phi = _factor_weights(factors)
        for c, size in enumerate(_chunk_sizes(n_both)):
            jobs.append((factors, w_e, w_phi, size, _STAGE_PAIRS, c, True))
    if n_one:
        w_e, w_phi = _factor_weights(partner_loss)
        for c, size in enumerate(_chunk_sizes(n_one)):
            jobs.append((partner_loss, w_e, w_phi, size, _STAGE_BROKEN, c, False))

    def run(job):
        fac, ce, cp, size, stage, c, both = job
        return _sample_pair_chunk(
            fac, ce, cp, size, _rng(det.seed, stage, c), det.eta, both, det.jitter_ns, exposure_ns
        )

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    parts += _dark_events(g, det)
    return EventStream(g, exposure_ns, det.seed, MODE_BIPHOTON, _merge_sorted(parts))


def _frame_means(f: ComplexField, det: DetectorModel, photon_rate: float | None) -> np.ndarray:
    rate = det.pair_rate if photon_rate is None else photon_rate
    signal = f.intensity * f.grid.pitch**2 * rate * det.exposure * det.eta
    return signal + det.dark_rate * det.exposure


def generate_classical_frames(
    f: ComplexField, det: DetectorModel, photon_rate: float | None = None
) -> np.ndarray:
    """Integrated counts per pixel for a coherent beam.

    The mean count at a pixel is ``|f|^2 pitch^2 * rate * exposure * eta`` plus dark
    counts, ``rate`` being the photon rate of a unit-power beam (``pair_rate`` unless
    ``photon_rate`` is given).
    """
    return _rng(det.seed, _STAGE_FRAMES).poisson(_frame_means(f, det, photon_rate))


def generate_singles_events(
    f: ComplexField, det: DetectorModel, photon_rate: float | None = None
) -> EventStream:
    """Classical beam recorded as an event stream (uncorrelated, uniform arrival times)."""
    counts = generate_classical_frames(f, det, photon_rate)
    ny, nx = f.grid.shape
    pix = np.repeat(np.arange(ny * nx), counts.ravel())
    rng = _rng(det.seed, _STAGE_FRAMES, 1)
    t = rng.integers(0, max(det.exposure_ns, 1), len(pix))
    y, x = np.divmod(pix, nx)
    ev = _pack(x, y, t)
    return EventStream(f.grid, det.exposure_ns, det.seed, MODE_CLASSICAL, ev[np.argsort(t, kind="stable")])

import numpy as np
import pytest

from biphase.biphoton import (
    BiphotonFactors,
    OpticalConfig,
    SampleTransmittance,
    joint_density,
    pump_near_field,
    sample_plane_factors,
)
from biphase.correlator import find_coincidences
from biphase.events import (
    CHUNK,
    DetectorModel,
    EventStream,
    generate_classical_frames,
    generate_pair_events,
    generate_singles_events,
)
from biphase.field import ComplexField, DomainError, Grid2D
from oracles import unordered_pair_chi2

SMALL = Grid2D(8, 8, 5e-6)


def small_factors(waist=20e-6):
    cfg = OpticalConfig(grid=SMALL)
    return sample_plane_factors(cfg, SampleTransmittance.clear(SMALL), waist)


def det(**kw):
    base = dict(eta=1.0, dark_rate=0.0, pair_rate=1e4, exposure=1.0, jitter_ns=0.0, seed=7)
    base.update(kw)
    return DetectorModel(**base)


def test_detector_validation():
    with pytest.raises(DomainError):
        DetectorModel(eta=1.5)
    with pytest.raises(DomainError):
        DetectorModel(dark_rate=-1)
    with pytest.raises(DomainError):
        DetectorModel(seed=-1)


def test_same_seed_same_stream():
    f = small_factors()
    a = generate_pair_events(f, det(eta=0.5, dark_rate=5.0, jitter_ns=2.0))
    b = generate_pair_events(f, det(eta=0.5, dark_rate=5.0, jitter_ns=2.0))
    assert a == b and a.to_bytes() == b.to_bytes()
    c = generate_pair_events(f, det(eta=0.5, dark_rate=5.0, jitter_ns=2.0, seed=8))
    assert a != c


def test_worker_count_does_not_change_output():
    f = small_factors()
    d = det(pair_rate=2.5 * CHUNK, jitter_ns=2.0)
    assert generate_pair_events(f, d, workers=1) == generate_pair_events(f, d, workers=3)


def test_stream_is_time_sorted_and_on_grid():
    s = generate_pair_events(small_factors(), det(dark_rate=100.0, jitter_ns=2.0))
    assert np.all(np.diff(s.events["t"].astype(np.int64)) >= 0)
    assert s.events["x"].max() < 8 and s.events["y"].max() < 8
    assert s.events["t"].max() < s.exposure_ns


def test_zero_efficiency_leaves_only_dark_counts():
    f = small_factors()
    assert len(generate_pair_events(f, det(eta=0.0))) == 0
    s = generate_pair_events(f, det(eta=0.0, dark_rate=50.0, exposure=10.0))
    mean = 50.0 * 64 * 10.0
    assert abs(len(s) - mean) < 5 * np.sqrt(mean)


def test_pair_count_and_detection_efficiency():
    f = small_factors()
    d = det(pair_rate=1e5, eta=0.6)
    s = generate_pair_events(f, d)
    # partner photons share a birth time when there is no jitter
    _, counts = np.unique(s.events["t"], return_counts=True)
    n2 = np.sum(counts == 2)
    jd = joint_density(f)
    # pairs with a photon off the 8x8 grid are dropped
    in_grid = jd.norm / (jd.phi2.sum() * jd.e2.sum())
    expected = 1e5 * f.e.power() * in_grid * 0.36
    assert abs(n2 - expected) < 5 * np.sqrt(expected) + 0.01 * expected


def test_delta_relative_factor_gives_coincident_pixels():
    g = SMALL
    phi = np.zeros(g.shape, complex)
    phi[g.ny // 2, g.nx // 2] = 1 / g.pitch
    e = pump_near_field(OpticalConfig(grid=g), 20e-6)
    f = BiphotonFactors(ComplexField(g, phi), e)
    pairs = find_coincidences(generate_pair_events(f, det(pair_rate=2e4)), 10)
    assert len(pairs) > 0
    assert np.all(pairs.pairs["xi"] == pairs.pairs["xs"])
    assert np.all(pairs.pairs["yi"] == pairs.pairs["ys"])


def test_pixel_pairs_follow_exact_density():
    f = small_factors()
    d = det(pair_rate=1e4, exposure=30.0, jitter_ns=2.0, seed=11)
    pairs = find_coincidences(generate_pair_events(f, d), 10)
    p, cells = unordered_pair_chi2(pairs, joint_density(f).dense())
    assert cells > 50
    assert p > 0.01


def test_power_above_one_rejected():
    f = small_factors()
    f.e.values *= 2
    with pytest.raises(DomainError):
        generate_pair_events(f, det())


def test_classical_frame_statistics():
    g = Grid2D(32, 32)
    beam = pump_near_field(OpticalConfig(grid=g), np.inf)
    d = det(eta=0.5, dark_rate=1.0, exposure=2.0)
    frames = generate_classical_frames(beam, d, photon_rate=1e6)
    mean = 1e6 * 2.0 * 0.5 / (32 * 32) + 2.0
    assert abs(frames.mean() - mean) < 5 * np.sqrt(mean / frames.size)
    assert abs(frames.var() / mean - 1) < 0.15
    singles = generate_singles_events(beam, d, photon_rate=1e6)
    assert singles.mode == "classical-singles"
    np.testing.assert_array_equal(singles.singles_image(), frames)


def test_event_stream_checks():
    g = Grid2D(4, 4)
    ev = np.zeros(2, dtype=[("x", "<u2"), ("y", "<u2"), ("t", "<u8")])
    ev["t"] = [5, 1]
    with pytest.raises(DomainError):
        EventStream(g, 10, 0, "biphoton", ev)
    with pytest.raises(DomainError):
        EventStream(g, 10, 0, "unknown")

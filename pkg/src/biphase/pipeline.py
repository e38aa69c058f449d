"""End-to-end runs driven by an INI-style configuration file.

Output layout under ``output_dir``::

    config.ini                      effective configuration
    sample.bpfd                     t(x) used for the run
    biphoton/events/z<um>.bpev       simulated event streams, one per plane
    biphoton/images/...             gamma_T, gamma_plus (+ csv, png) and shift-sum reports
    classical/frames/z<um>.bpfd      simulated intensity frames
    <mode>/retrieval/...            phase/amplitude maps and report.json
    compare/...                     enhancement report and cross sections
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .biphoton import (
    OpticalConfig,
    SampleTransmittance,
    classical_field_at,
    partner_loss_factors,
    propagate_biphoton,
    pump_near_field,
    sample_plane_factors,
)
from .correlator import (
    EmptyImageWarning,
    accumulate_marginals,
    correlation_image_shift_sum,
    find_coincidences,
    plus_to_camera_grid,
)
from .events import (
    DetectorModel,
    event_io_read,
    event_io_write,
    generate_classical_frames,
    generate_pair_events,
)
from .field import ComplexField, DomainError, Grid2D
from .fileformats import FormatError, atomic_write_bytes, field_io_read, field_io_write
from .retrieval import (
    CM2,
    PhaseRoi,
    RetrievalResult,
    TieConfig,
    enhancement_ratio,
    epsilon_scan,
    gs_retrieve,
)
from .samples import (
    amplitude_square,
    load_sample_csv,
    load_sample_file,
    phase_step_square,
    three_bar_regions,
    three_bar_target,
)

log = logging.getLogger(__name__)

MODES = ("biphoton", "classical", "both")
SAMPLE_KINDS = ("three_bar", "phase_square", "amplitude_square", "csv", "file")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


class DataError(RuntimeError):
    """Missing or unusable input data."""


class MissingPlaneError(DataError):
    pass


@dataclass
class OpticalSection:
    lambda_p: float = 405e-9
    crystal_length: float = 1e-3
    xi: float = 0.0
    nx: int = 256
    ny: int = 256
    pitch: float = 55e-6
    pump_waist: float = 2e-3


@dataclass
class SampleSection:
    kind: str = "three_bar"
    depth: float = 127e-9
    refractive_index: float = 1.47
    bar_width: float = 440e-6
    side: float = 1e-3
    alpha: float = 0.46
    transmittance: float = 0.5
    edge_sigma: float = 55e-6
    path: str = ""
    t_csv: str = ""
    alpha_csv: str = ""


@dataclass
class DetectorSection:
    eta: float = 1.0
    dark_rate: float = 0.01
    pair_rate: float = 12500.0
    exposure: float = 400.0
    jitter_ns: float = 2.0
    classical_photon_rate: float = 1.25e6


@dataclass
class CorrelatorSection:
    window_ns: int = 10
    max_shift: int = 32
    top_k: int = 6


@dataclass
class RetrievalSection:
    # one plane: forward difference from z = 0; two planes: central difference
    tie_planes_biphoton: list = field(default_factory=lambda: [-0.02, 0.025])
    tie_planes_classical: list = field(default_factory=lambda: [-0.02, 0.025])
    err_plane: float = 0.0425
    err_smoothing_px: float = 2.0
    epsilons_cm2: list = field(default_factory=lambda: list(np.logspace(-8, -2, 25)))
    i_floor: float = 1e-3
    gs_planes: list = field(default_factory=lambda: [0.0, 0.0425])
    gs_max_iter: int = 1000
    gs_tol: float = 1e-7


@dataclass
class CompareSection:
    roi_plateau: list = field(default_factory=list)
    roi_background: list = field(default_factory=list)


@dataclass
class PipelineConfig:
    optical: OpticalSection = field(default_factory=OpticalSection)
    sample: SampleSection = field(default_factory=SampleSection)
    planes: list = field(default_factory=lambda: [0.0, -0.02, 0.025, 0.0425, 0.26])
    detector: DetectorSection = field(default_factory=DetectorSection)
    correlator: CorrelatorSection = field(default_factory=CorrelatorSection)
    retrieval: RetrievalSection = field(default_factory=RetrievalSection)
    compare: CompareSection = field(default_factory=CompareSection)
    mode: str = "both"
    output_dir: str = "out"
    seed: int = 1
    workers: int = 1

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.optical.nx, self.optical.ny, self.optical.pitch)

    @property
    def optics(self) -> OpticalConfig:
        o = self.optical
        return OpticalConfig(o.lambda_p, o.crystal_length, o.xi, self.grid)

    @property
    def modes(self) -> tuple[str, ...]:
        return ("biphoton", "classical") if self.mode == "both" else (self.mode,)

    def validate(self) -> "PipelineConfig":
        o, d, r = self.optical, self.detector, self.retrieval
        checks = [
            (o.lambda_p > 0, "optical.lambda_p", "must be positive"),
            (o.crystal_length > 0, "optical.crystal_length", "must be positive"),
            (o.nx >= 2 and o.ny >= 2, "optical.nx", "grid needs at least 2x2 pixels"),
            (o.nx < 2**15 and o.ny < 2**15, "optical.nx", "grid too large for the file formats"),
            (o.pitch > 0, "optical.pitch", "must be positive"),
            (o.pump_waist >= 3 * o.pitch, "optical.pump_waist", "must span at least 3 pixels"),
            (self.sample.kind in SAMPLE_KINDS, "sample.kind", f"must be one of {SAMPLE_KINDS}"),
            (0 <= self.sample.transmittance <= 1, "sample.transmittance", "must lie in [0, 1]"),
            (len(self.planes) > 0, "planes.z", "must list at least one plane"),
            (len(set(self.planes)) == len(self.planes), "planes.z", "planes must be distinct"),
            (0 <= d.eta <= 1, "detector.eta", "must lie in [0, 1]"),
            (d.dark_rate >= 0, "detector.dark_rate", "must be non-negative"),
            (d.pair_rate >= 0, "detector.pair_rate", "must be non-negative"),
            (d.exposure > 0, "detector.exposure", "must be positive"),
            (d.jitter_ns >= 0, "detector.jitter_ns", "must be non-negative"),
            (d.classical_photon_rate >= 0, "detector.classical_photon_rate", "must be non-negative"),
            (self.correlator.window_ns >= 0, "correlator.window_ns", "must be non-negative"),
            (self.correlator.max_shift >= 0, "correlator.max_shift", "must be non-negative"),
            (len(r.epsilons_cm2) > 0, "retrieval.epsilons_cm2", "must list at least one value"),
            (all(e > 0 for e in r.epsilons_cm2), "retrieval.epsilons_cm2", "values must be positive"),
            (r.err_smoothing_px >= 0, "retrieval.err_smoothing_px", "must be non-negative"),
            (r.gs_max_iter >= 1, "retrieval.gs_max_iter", "must be at least 1"),
            (len(r.gs_planes) >= 2, "retrieval.gs_planes", "need at least two planes"),
            (self.mode in MODES, "run.mode", f"must be one of {MODES}"),
            (0 <= self.seed < 2**64, "run.seed", "must fit in u64"),
            (self.workers >= 1, "run.workers", "must be at least 1"),
        ]
        for roi_key in ("roi_plateau", "roi_background"):
            v = getattr(self.compare, roi_key)
            checks.append((len(v) in (0, 4), f"compare.{roi_key}", "expects x0, x1, y0, y1"))
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}")
        return self


_SECTIONS = {
    "optical": ("optical", OpticalSection),
    "sample": ("sample", SampleSection),
    "detector": ("detector", DetectorSection),
    "correlator": ("correlator", CorrelatorSection),
    "retrieval": ("retrieval", RetrievalSection),
    "compare": ("compare", CompareSection),
}


def parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return parse_floats(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def config_from_text(text: str, base_dir: Path | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    cfg = PipelineConfig()
    for section in parser.sections():
        if section in _SECTIONS:
            attr, _ = _SECTIONS[section]
            obj = getattr(cfg, attr)
            for key, raw in parser[section].items():
                if not hasattr(obj, key):
                    raise ConfigError(f"{section}.{key}: unknown key")
                setattr(obj, key, _coerce(f"{section}.{key}", raw, getattr(obj, key)))
        elif section == "planes":
            for key, raw in parser[section].items():
                if key != "z":
                    raise ConfigError(f"planes.{key}: unknown key")
                cfg.planes = _coerce("planes.z", raw, cfg.planes)
        elif section == "run":
            for key, raw in parser[section].items():
                if key not in ("mode", "output_dir", "seed", "workers"):
                    raise ConfigError(f"run.{key}: unknown key")
                setattr(cfg, key, _coerce(f"run.{key}", raw, getattr(cfg, key)))
        else:
            raise ConfigError(f"{section}: unknown section")
    if base_dir is not None:
        for key in ("path", "t_csv", "alpha_csv"):
            v = getattr(cfg.sample, key)
            if v and not os.path.isabs(v):
                setattr(cfg.sample, key, str(base_dir / v))
    return cfg.validate()


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {p} ({exc.strerror})") from None
    return config_from_text(text, p.parent)


def config_to_text(cfg: PipelineConfig) -> str:
    parser = configparser.ConfigParser()
    parser.optionxform = str

    def fmt(v):
        if isinstance(v, list):
            return ", ".join(repr(float(x)) if not isinstance(x, int) else str(x) for x in v)
        return str(v)

    for section, (attr, _) in _SECTIONS.items():
        parser[section] = {k: fmt(v) for k, v in asdict(getattr(cfg, attr)).items()}
    parser["planes"] = {"z": fmt(cfg.planes)}
    parser["run"] = {"mode": cfg.mode, "output_dir": cfg.output_dir, "seed": str(cfg.seed), "workers": str(cfg.workers)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# -- artifacts ----------------------------------------------------------------

def plane_tag(z: float) -> str:
    """File-name tag for a plane, in whole micrometers (``z+0042500um`` for 4.25 cm)."""
    return f"z{round(z * 1e6):+08d}um"


def write_csv(path: Path, array: np.ndarray) -> None:
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(array), delimiter=",", fmt="%.10g")
    atomic_write_bytes(path, buf.getvalue().encode())


def write_preview(path: Path, image: np.ndarray) -> None:
    """8-bit grayscale PNG, scaled by the image maximum."""
    from PIL import Image

    a = np.asarray(image, dtype=float)
    lo = min(a.min(), 0.0)
    span = a.max() - lo
    scaled = np.zeros(a.shape) if span <= 0 else (a - lo) / span
    buf = io.BytesIO()
    Image.fromarray(np.round(scaled * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def write_image_set(stem: Path, image: np.ndarray, pitch: float) -> None:
    """Real-valued image as BPFD (real part), CSV and PNG preview."""
    ny, nx = image.shape
    field_io_write(ComplexField(Grid2D(nx, ny, pitch), image.astype(complex)), stem.with_suffix(".bpfd"))
    write_csv(stem.with_suffix(".csv"), image)
    write_preview(stem.with_suffix(".png"), image)


def read_real_image(path: Path) -> np.ndarray:
    return field_io_read(path).values.real.copy()


def build_sample(cfg: PipelineConfig) -> SampleTransmittance:
    s, g = cfg.sample, cfg.grid
    lam_spdc = 2 * cfg.optical.lambda_p
    if s.kind == "three_bar":
        return three_bar_target(g, s.depth, s.refractive_index, s.bar_width, lam_spdc, edge_sigma=s.edge_sigma)
    if s.kind == "phase_square":
        return phase_step_square(g, s.side, s.alpha, edge_sigma=s.edge_sigma)
    if s.kind == "amplitude_square":
        return amplitude_square(g, s.side, s.transmittance, edge_sigma=s.edge_sigma)
    try:
        if s.kind == "csv":
            sample = load_sample_csv(s.t_csv, s.alpha_csv, g.pitch)
        else:
            sample = load_sample_file(s.path)
    except (OSError, FormatError, ValueError) as exc:
        raise DataError(f"sample: cannot load ({exc})") from None
    if not sample.grid.same_sampling(g):
        raise ConfigError("sample: sample grid does not match optical grid")
    return sample


def _plane_seed(seed: int, stage: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, stage, index]).generate_state(1, np.uint64)[0])


def _detector(cfg: PipelineConfig, stage: int, index: int) -> DetectorModel:
    d = cfg.detector
    return DetectorModel(d.eta, d.dark_rate, d.pair_rate, d.exposure, d.jitter_ns, _plane_seed(cfg.seed, stage, index))


def _map(cfg: PipelineConfig, fn, items):
    if cfg.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _out(cfg: PipelineConfig) -> Path:
    return Path(cfg.output_dir)


def _write_run_files(cfg: PipelineConfig) -> None:
    out = _out(cfg)
    atomic_write_bytes(out / "config.ini", config_to_text(cfg).encode())


# -- commands -----------------------------------------------------------------

def cmd_simulate(cfg: PipelineConfig) -> dict:
    """Event files per plane (biphoton) and intensity frames per plane (classical)."""
    out = _out(cfg)
    _write_run_files(cfg)
    sample = build_sample(cfg)
    field_io_write(sample.as_field(), out / "sample.bpfd")
    optics = cfg.optics
    written = {"biphoton": [], "classical": []}

    if "biphoton" in cfg.modes:
        f0 = sample_plane_factors(optics, sample, cfg.optical.pump_waist)
        loss = partner_loss_factors(optics, sample, cfg.optical.pump_waist) if np.any(sample.T < 1) else None

        def one(item):
            idx, z = item
            fz = propagate_biphoton(f0, z)
            lz = propagate_biphoton(loss, z) if loss is not None else None
            if fz.aliased:
                log.warning("plane %s: propagation aliases on this grid", plane_tag(z))
            stream = generate_pair_events(fz, _detector(cfg, 0, idx), lz)
            path = out / "biphoton" / "events" / f"{plane_tag(z)}.bpev"
            event_io_write(stream, path)
            return path

        written["biphoton"] = _map(cfg, one, list(enumerate(cfg.planes)))

    if "classical" in cfg.modes:
        pump = pump_near_field(optics, cfg.optical.pump_waist)

        def one_c(item):
            idx, z = item
            fz = classical_field_at(pump, sample, z, optics.lambda_spdc)
            frames = generate_classical_frames(
                fz, _detector(cfg, 1, idx), photon_rate=cfg.detector.classical_photon_rate
            )
            stem = out / "classical" / "frames" / plane_tag(z)
            field_io_write(ComplexField(cfg.grid, frames.astype(complex)), stem.with_suffix(".bpfd"))
            write_csv(stem.with_suffix(".csv"), frames)
            return stem.with_suffix(".bpfd")

        written["classical"] = _map(cfg, one_c, list(enumerate(cfg.planes)))
    return written


def extract_plane(stream_path: Path, cfg: PipelineConfig, image_dir: Path) -> dict:
    stream = event_io_read(stream_path)
    pairs = find_coincidences(stream, cfg.correlator.window_ns)
    marg = accumulate_marginals(pairs)
    tag = stream_path.stem
    pitch = stream.grid.pitch
    if len(pairs) == 0:
        warnings.warn(f"{tag}: no coincidences found, images are empty", EmptyImageWarning)
    write_image_set(image_dir / f"gamma_T_{tag}", marg.gamma_T.astype(float), pitch)
    write_image_set(image_dir / f"gamma_plus_{tag}", marg.gamma_plus.astype(float), pitch / 2)
    write_image_set(image_dir / f"gamma_minus_{tag}", marg.gamma_minus.astype(float), pitch / 2)
    write_image_set(image_dir / f"singles_{tag}", stream.singles_image().astype(float), pitch)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, report = correlation_image_shift_sum(pairs, cfg.correlator.max_shift, cfg.correlator.top_k)
    text = f"events={len(stream)}\npairs={len(pairs)}\n" + report.to_text()
    atomic_write_bytes(image_dir / f"shift_sum_{tag}.txt", text.encode())
    return {"tag": tag, "events": len(stream), "pairs": len(pairs), "gamma_plus_total": int(marg.gamma_plus.sum())}


def cmd_extract(cfg: PipelineConfig) -> list[dict]:
    out = _out(cfg)
    summaries = []
    if "biphoton" in cfg.modes:
        image_dir = out / "biphoton" / "images"
        paths = [out / "biphoton" / "events" / f"{plane_tag(z)}.bpev" for z in cfg.planes]
        missing = [p for p in paths if not p.exists()]
        if missing:
            raise MissingPlaneError(f"no event file {missing[0]}; run simulate first")
        try:
            summaries += _map(cfg, lambda p: extract_plane(p, cfg, image_dir), paths)
        except FormatError as exc:
            raise DataError(str(exc)) from None
    if "classical" in cfg.modes:
        image_dir = out / "classical" / "images"
        for z in cfg.planes:
            src = out / "classical" / "frames" / f"{plane_tag(z)}.bpfd"
            if not src.exists():
                raise MissingPlaneError(f"no classical frame {src}; run simulate first")
            img = read_real_image(src)
            write_image_set(image_dir / f"intensity_{plane_tag(z)}", img, cfg.grid.pitch)
            summaries.append({"tag": f"classical_{plane_tag(z)}", "total": float(img.sum())})
    atomic_write_bytes(out / "extract_summary.json", json.dumps(summaries, indent=2).encode())
    return summaries


def _find_plane(images: dict, z: float, purpose: str) -> np.ndarray:
    for zz, img in images.items():
        if abs(zz - z) < 1e-9:
            return img
    raise MissingPlaneError(f"{purpose} requires the plane z = {z:g} m, which is not available")


def load_mode_images(cfg: PipelineConfig, mode: str) -> dict:
    out = _out(cfg)
    images = {}
    for z in cfg.planes:
        if mode == "biphoton":
            p = out / "biphoton" / "images" / f"gamma_plus_{plane_tag(z)}.bpfd"
        else:
            p = out / "classical" / "images" / f"intensity_{plane_tag(z)}.bpfd"
        if p.exists():
            img = read_real_image(p)
            images[z] = plus_to_camera_grid(img) if mode == "biphoton" else img
    return images


def cmd_retrieve(cfg: PipelineConfig, images: dict | None = None) -> dict:
    """TIE (with epsilon scan) and GS retrieval for each requested mode."""
    out = _out(cfg)
    r, g = cfg.retrieval, cfg.grid
    reports = {}
    for mode in cfg.modes:
        imgs = images[mode] if images is not None else load_mode_images(cfg, mode)
        lam = cfg.optical.lambda_p if mode == "biphoton" else 2 * cfg.optical.lambda_p
        I0 = _find_plane(imgs, 0.0, "TIE and GS retrieval")
        tie_planes = r.tie_planes_biphoton if mode == "biphoton" else r.tie_planes_classical
        if len(tie_planes) not in (1, 2):
            raise ConfigError(f"retrieval.tie_planes_{mode}: expects one plane or a -z,+z pair")
        if len(tie_planes) == 1:
            dz, i_minus, dz_minus = tie_planes[0], None, None
        else:
            dz_minus, dz = sorted(tie_planes)
            i_minus = _find_plane(imgs, dz_minus, "two-sided TIE")
        I1 = _find_plane(imgs, dz, "TIE")
        I2 = _find_plane(imgs, r.err_plane, "epsilon selection")
        tcfg = TieConfig(r.epsilons_cm2[0] * CM2, dz, lam, r.i_floor)
        tie = epsilon_scan(
            I0, I1, I2, r.err_plane, tcfg, [e * CM2 for e in r.epsilons_cm2], g, i_minus, dz_minus,
            smoothing=r.err_smoothing_px,
        )
        gs_imgs = [(_find_plane(imgs, z, "GS retrieval"), z) for z in r.gs_planes]
        gs = gs_retrieve(gs_imgs, lam, r.gs_max_iter, r.gs_tol, g)

        rdir = out / mode / "retrieval"
        for name, res in (("tie", tie), ("gs", gs)):
            write_image_set(rdir / f"{name}_phase", res.phase, g.pitch)
            write_image_set(rdir / f"{name}_amplitude", res.amplitude, g.pitch)
        report = {
            "mode": mode,
            "wavelength_m": lam,
            "tie": {
                "epsilon_used_m2": tie.epsilon_used,
                "epsilon_used_cm2": tie.epsilon_used / CM2,
                "residual": tie.residual,
                "planes_m": [0.0] + list(tie_planes),
                "err_plane_m": r.err_plane,
                "scan": [{"epsilon_cm2": e / CM2, "err": err} for e, err in tie.scan],
            },
            "gs": {
                "iterations": gs.iterations,
                "residual": gs.residual,
                "planes_m": list(r.gs_planes),
            },
        }
        atomic_write_bytes(rdir / "report.json", json.dumps(report, indent=2).encode())
        reports[mode] = {"report": report, "tie": tie, "gs": gs}
    return reports


def default_roi(cfg: PipelineConfig) -> PhaseRoi:
    c, g = cfg.compare, cfg.grid
    if c.roi_plateau and c.roi_background:
        return PhaseRoi.from_rects(g, [int(v) for v in c.roi_plateau], [int(v) for v in c.roi_background])
    if cfg.sample.kind == "three_bar":
        return PhaseRoi(*three_bar_regions(g, cfg.sample.bar_width))
    raise ConfigError("compare.roi_plateau: required for samples other than three_bar")


def cmd_compare(cfg: PipelineConfig, roi: PhaseRoi | None = None) -> dict:
    out = _out(cfg)
    g = cfg.grid
    roi = roi or default_roi(cfg)
    if not roi.plateau.any() or not roi.background.any():
        raise ConfigError("compare: ROI does not overlap the grid")
    phases = {}
    for mode in ("biphoton", "classical"):
        for method in ("tie", "gs"):
            p = out / mode / "retrieval" / f"{method}_phase.bpfd"
            if not p.exists():
                raise DataError(f"missing {p}; run retrieve for both modes first")
            phases[(mode, method)] = read_real_image(p)

    report = {}
    for method in ("tie", "gs"):
        res = {
            m: RetrievalResult(phases[(m, method)], np.zeros(g.shape), 0.0, 0.0, method.upper())
            for m in ("biphoton", "classical")
        }
        er = enhancement_ratio(res["biphoton"], res["classical"], roi)
        report[method] = {
            "ratio": er.ratio,
            "uncertainty": er.uncertainty,
            "biphoton_step_rad": er.biphoton.step,
            "biphoton_std_rad": er.biphoton.std,
            "classical_step_rad": er.classical.step,
            "classical_std_rad": er.classical.std,
        }

    # y-averaged cross section across the box spanned by both regions
    box = roi.plateau | roi.background
    rows = np.flatnonzero(box.any(axis=1))
    y0, y1 = rows.min(), rows.max() + 1
    if cfg.sample.kind == "three_bar":
        half = int(np.ceil(3 * cfg.sample.bar_width / g.pitch))
        x0, x1 = max(g.nx // 2 - half, 0), min(g.nx // 2 + half + 1, g.nx)
    else:
        xs = np.flatnonzero(box.any(axis=0))
        x0, x1 = xs.min(), xs.max() + 1
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["x_px", "x_mm", "biphoton_tie", "classical_tie", "biphoton_gs", "classical_gs"])
    for x in range(x0, x1):
        vals = [phases[k][y0:y1, x].mean() for k in
                (("biphoton", "tie"), ("classical", "tie"), ("biphoton", "gs"), ("classical", "gs"))]
        w.writerow([x, f"{(x - g.nx // 2) * g.pitch * 1e3:.4f}"] + [f"{v:.6f}" for v in vals])
    cdir = out / "compare"
    atomic_write_bytes(cdir / "cross_section.csv", buf.getvalue().encode())
    lines = []
    for method, d in report.items():
        for k, v in d.items():
            lines.append(f"{method}.{k}={v:.6f}")
    atomic_write_bytes(cdir / "enhancement.txt", ("\n".join(lines) + "\n").encode())
    atomic_write_bytes(cdir / "enhancement.json", json.dumps(report, indent=2).encode())
    return report


def cmd_all(cfg: PipelineConfig) -> dict:
    cmd_simulate(cfg)
    cmd_extract(cfg)
    retrieved = cmd_retrieve(cfg)
    result = {m: v["report"] for m, v in retrieved.items()}
    if cfg.mode == "both":
        result["compare"] = cmd_compare(cfg)
    return result

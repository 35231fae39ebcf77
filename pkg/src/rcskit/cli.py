"""Command-line entry point: ``rcskit <subcommand> ...``.

Exit codes: 0 success, 1 validation, 2 pipeline, 3 I/O, 4 network.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import analysis, figures, geometry, synth, vna
from .errors import AcquisitionError, CampaignValidationError, PipelineError, RcsError, ValidationError
from .ingest import ManifestEntry, load_campaign, load_manifest, validate_manifest, write_manifest_atomic, write_touchstone_s1p
from .gating import GATE_METHODS
from .pipeline import GateParams, default_gate_params, extract_campaign
from .sweep import WindowSpec

EXIT_OK, EXIT_VALIDATION, EXIT_PIPELINE, EXIT_IO, EXIT_NETWORK = 0, 1, 2, 3, 4


@dataclass
class RunConfig:
    subcommand: str
    manifest: Path | None
    out: Path | None
    jobs: int = 1
    seed: int | None = None
    fmt: str | None = None
    bands: list = field(default_factory=list)
    gate_overrides: dict = field(default_factory=dict)
    figures: bool = True

    def out_dir(self) -> Path:
        out = self.out or Path(".")
        out.mkdir(parents=True, exist_ok=True)
        return out


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _err(text: str) -> None:
    sys.stderr.write(text if text.endswith("\n") else text + "\n")


def _write(path: Path, text: str) -> None:
    """Write through a temp file so a failed run never leaves a half-written output."""
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _tag(x: float) -> str:
    return f"{x:g}".replace(".", "p").replace("-", "m")


def _window_arg(text: str) -> WindowSpec:
    if text in ("rectangular", "hann"):
        return getattr(WindowSpec, text)()
    if text.startswith("tukey"):
        alpha = text.partition(":")[2]
        return WindowSpec.tukey(float(alpha) if alpha else 0.25)
    raise argparse.ArgumentTypeError(f"window must be rectangular, hann, or tukey[:alpha], got {text!r}")


def _need_manifest(cfg: RunConfig) -> Path:
    if cfg.manifest is None:
        raise ValidationError(f"{cfg.subcommand}: --manifest is required")
    return cfg.manifest


def _campaign(cfg: RunConfig):
    return load_campaign(_need_manifest(cfg), jobs=cfg.jobs)


def _gate_params(campaign, cfg: RunConfig) -> GateParams:
    return default_gate_params(campaign, **cfg.gate_overrides)


def _extract_band(campaign, band: str, cfg: RunConfig, angles=None, keep_spectra=False):
    params = _gate_params(campaign, cfg)
    return extract_campaign(campaign, band, params, jobs=cfg.jobs, keep_spectra=keep_spectra, angles=angles)


def _report_errors(errors: list[dict]) -> int:
    for e in errors:
        _err(f"error ({e['band']}, theta={e['theta_deg']:g}, phi={e['phi_deg']:g}): {e['error']}")
    if any(e["type"] in ("ValidationError", "CampaignValidationError") for e in errors):
        return EXIT_VALIDATION
    return EXIT_PIPELINE


# --- subcommands ------------------------------------------------------------------------


def cmd_extract(cfg: RunConfig) -> int:
    campaign = _campaign(cfg)
    bands = cfg.bands or campaign.bands
    for b in bands:
        campaign.band(b)
    out = cfg.out_dir()
    status = EXIT_OK
    summary = []
    for band in bands:
        records, errors, _ = _extract_band(campaign, band, cfg)
        doc = {
            "band": band,
            "gate_params": _gate_params(campaign, cfg).to_json(),
            "records": [r.to_json() for r in records],
            "errors": errors,
        }
        _write(out / f"extract_{band}.json", _dump(doc))
        if records:
            grid = analysis.build_rcs_grid(records, mirror=campaign.manifest.mirror_azimuth, band_label=band)
            _write(out / f"grid_{band}.csv", grid.to_csv())
            _write(out / f"grid_{band}.json", _dump(grid.to_json()))
            if cfg.figures:
                _write(out / f"heatmap_{band}.svg", figures.heatmap_svg(grid))
        if errors:
            status = max(status, _report_errors(errors))
        summary.append({"band": band, "extracted": len(records), "failed": len(errors)})
    if cfg.fmt == "json":
        _emit(_dump(summary))
    else:
        for s in summary:
            _emit(f"{s['band']}: {s['extracted']} extracted, {s['failed']} failed")
    return status


def _pick_bands(campaign, cfg: RunConfig) -> tuple[str, str]:
    if len(cfg.bands) == 2:
        b1, b2 = cfg.bands
        campaign.band(b1)
        campaign.band(b2)
        return b1, b2
    if cfg.bands:
        raise ValidationError("scale needs exactly two bands (--band1 and --band2)")
    specs = sorted(campaign.manifest.bands, key=lambda b: b.f_start_hz)
    if len(specs) < 2:
        raise ValidationError(f"scale needs two bands; manifest has {[b.name for b in specs]}")
    return specs[0].name, specs[1].name


def cmd_scale(cfg: RunConfig) -> int:
    campaign = _campaign(cfg)
    b1, b2 = _pick_bands(campaign, cfg)
    out = cfg.out_dir()
    grids = {}
    status = EXIT_OK
    for band in (b1, b2):
        records, errors, _ = _extract_band(campaign, band, cfg)
        if errors:
            status = max(status, _report_errors(errors))
        if not records:
            raise PipelineError("extract", f"no successful extractions in band {band}")
        grids[band] = analysis.build_rcs_grid(records, mirror=campaign.manifest.mirror_azimuth, band_label=band)
    samples = analysis.delta_rcs(grids[b1], grids[b2])
    rows = analysis.fit_table(samples)
    stem = f"{b1}_{b2}"
    _write(out / f"delta_rcs_{stem}.csv", analysis.delta_to_csv(samples))
    _write(out / f"gaussian_fits_{stem}.json", _dump({"band1": b1, "band2": b2, "definition": "10*log10(RCS_band2/RCS_band1)", "rows": rows}))
    if cfg.figures:
        overall = analysis.fit_gaussian(samples) if len(samples) >= 2 else None
        if overall is not None:
            svg = figures.histogram_svg([s.delta_db for s in samples], overall, f"Delta RCS {b2} vs {b1}, overall")
            _write(out / f"delta_hist_{stem}.svg", svg)
    if cfg.fmt == "json":
        _emit(_dump(rows))
    else:
        _emit(analysis.fit_table_text(rows))
    return status


def cmd_range_image(cfg: RunConfig, theta: float, interp: str, phi_step: float, top_k: int, max_range: float) -> int:
    campaign = _campaign(cfg)
    if len(cfg.bands) != 1:
        raise ValidationError("range-image needs exactly one --band")
    band = cfg.bands[0]
    elevations = campaign.elevations(band)
    if float(theta) not in elevations:
        raise ValidationError(
            f"theta={theta:g} not measured in band {band}; available elevations: {', '.join(f'{t:g}' for t in elevations)}"
        )
    angles = [a for a in campaign.angles(band) if a[0] == float(theta)]
    records, errors, spectra = _extract_band(campaign, band, cfg, angles=angles, keep_spectra=True)
    status = _report_errors(errors) if errors else EXIT_OK
    params = _gate_params(campaign, cfg)
    d_tg = campaign.manifest.target.distance_m
    profiles = {
        phi: analysis.range_response(spec, d_tg, params.window, params.pad_factor) for (_, phi), spec in spectra.items()
    }
    measured = sorted(profiles)
    if campaign.manifest.mirror_azimuth:
        for phi in list(measured):
            m = (360.0 - phi) % 360.0
            if 0.0 < phi < 180.0 and m not in profiles:
                profiles[m] = profiles[phi]
    image = analysis.build_range_azimuth_image(profiles, interp, phi_step, measured_phis=measured, theta_deg=theta)
    top = analysis.top_contributors(image, top_k)
    out = cfg.out_dir()
    stem = f"{band}_t{_tag(theta)}"
    _write(out / f"range_azimuth_{stem}.csv", image.crop(max_range).to_csv())
    doc = top.to_json() | {"band": band, "theta_deg": float(theta), "interpolation": image.interpolation_note}
    _write(out / f"top_contributors_{stem}.json", _dump(doc))
    if cfg.figures:
        _write(out / f"range_azimuth_{stem}.svg", figures.range_azimuth_svg(image, max_range))
        _write(out / f"range_polar_{stem}.svg", figures.polar_range_svg(image, max_range))
    if cfg.fmt == "json":
        _emit(_dump(doc))
    else:
        for p in top:
            _emit(f"range {p.range_m:+.4f} m  phi {p.phi_deg:6.1f} deg  |sqrt(sigma)| {p.magnitude:.4g} m")
        if top.note:
            _emit(f"note: {top.note}")
    return status


def cmd_plan(cfg: RunConfig, aperture: float, hpbw: float, freq: float, width: float, margin: float, theta: float) -> int:
    plan = geometry.plan_measurement(geometry.AntennaSpec(aperture, hpbw), freq, width, margin, theta)
    if cfg.out is not None:
        _write(cfg.out_dir() / "plan.json", _dump(plan.to_json()))
    if cfg.fmt == "json":
        _emit(_dump(plan.to_json()))
    else:
        _emit(plan.table())
    return EXIT_OK


def cmd_synth(cfg: RunConfig, scene_path: Path) -> int:
    template = synth.load_scene(scene_path)
    if cfg.seed is not None:
        template = replace(template, seed=int(cfg.seed))
    if cfg.out is None:
        raise ValidationError("synth: --out is required")
    path = synth.generate_campaign(template, cfg.out)
    _emit(f"wrote {path.name} with {len(load_manifest(path).entries)} sweeps under {cfg.out.name}")
    return EXIT_OK


def cmd_acquire(cfg: RunConfig, args) -> int:
    manifest_path = _need_manifest(cfg)
    manifest = load_manifest(manifest_path)
    band = manifest.band(args.band)
    n_points = band.n_samples if args.points is None else args.points
    if n_points != band.n_samples:
        raise ValidationError(f"--points {n_points} does not match band {band.name} n_samples {band.n_samples}")
    key = (band.name, float(args.theta), float(args.phi), args.slot)
    if any((e.band, e.theta_deg, e.phi_deg, e.scenario) == key for e in manifest.entries):
        raise ValidationError(f"manifest already has an entry for {key}")
    config = vna.SweepConfig(band.f_start_hz, band.f_stop_hz, n_points, args.if_bandwidth, args.power)
    endpoint = vna.InstrumentEndpoint(args.host, args.port, config, args.timeout_ms)
    sweep = vna.acquire_sweep(endpoint, args.slot)
    rel = f"{band.name}/acq_t{_tag(args.theta)}_p{_tag(args.phi)}_{args.slot}.s1p"
    root = manifest_path.parent
    (root / band.name).mkdir(parents=True, exist_ok=True)
    target = root / rel
    tmp = target.with_name(f".{target.name}.tmp")
    tmp.write_bytes(write_touchstone_s1p(sweep))
    os.replace(tmp, target)
    entry = ManifestEntry(band.name, float(args.theta), float(args.phi), args.slot, rel)
    updated = replace(manifest, entries=manifest.entries + (entry,))
    write_manifest_atomic(updated, manifest_path)
    issues = [i for i in validate_manifest(updated) if i["kind"] not in ("missing_background", "missing_sphere")]
    _emit(f"acquired {sweep.grid.n_samples} points into {rel}")
    for i in issues:
        _err(f"warning: {i['message']}")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------------------


def _global_parser() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--manifest", type=Path, default=argparse.SUPPRESS, help="campaign manifest JSON")
    g.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="parallel extraction workers")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed (synth noise)")
    g.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS, help="stdout summary format")
    return g


def _gate_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gate-span", type=float, help="gate span in seconds (two-way delay)")
    p.add_argument("--gate-extent", type=float, help="target radial extent in m (peak guard and default span)")
    p.add_argument("--gate-method", choices=GATE_METHODS)
    p.add_argument("--window", type=_window_arg, help="rectangular | hann | tukey[:alpha]")
    p.add_argument("--pad", type=int, help="zero-pad factor for delay transforms")
    p.add_argument("--no-figures", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    g = _global_parser()
    parser = argparse.ArgumentParser(prog="rcskit", description="Monostatic RCS extraction toolkit", parents=[g])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("extract", parents=[g], help="per-angle RCS, grid CSV and heatmap")
    p.add_argument("--band", action="append", help="band name (repeatable; default all)")
    _gate_flags(p)

    p = sub.add_parser("scale", parents=[g], help="cross-band Delta RCS and Gaussian fits")
    p.add_argument("--band1")
    p.add_argument("--band2")
    _gate_flags(p)

    p = sub.add_parser("range-image", parents=[g], help="range-azimuth image and strongest contributors")
    p.add_argument("--band", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--interp", choices=analysis.INTERP_METHODS, default="linear")
    p.add_argument("--phi-step", type=float, default=1.0)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--max-range", type=float, default=2.0, help="half-width of plotted range window (m)")
    _gate_flags(p)

    p = sub.add_parser("plan", parents=[g], help="antenna distance and height for a target")
    p.add_argument("--aperture", type=float, required=True, help="largest antenna aperture dimension (m)")
    p.add_argument("--hpbw", type=float, required=True, help="half-power beamwidth (deg)")
    p.add_argument("--freq", type=float, required=True, help="highest frequency in the band (Hz)")
    p.add_argument("--width", type=float, required=True, help="target width (m)")
    p.add_argument("--margin", type=float, required=True, help="footprint margin (m)")
    p.add_argument("--theta", type=float, default=0.0, help="elevation (deg)")

    p = sub.add_parser("synth", parents=[g], help="generate a synthetic campaign from a scene JSON")
    p.add_argument("--scene", type=Path, required=True)

    p = sub.add_parser("acquire", parents=[g], help="acquire one sweep over SCPI and append it to the manifest")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--timeout-ms", type=float, default=5000.0)
    p.add_argument("--band", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--slot", choices=("target", "background", "sphere"), required=True)
    p.add_argument("--points", type=int, help="point count; must equal the band's n_samples")
    p.add_argument("--if-bandwidth", type=float, default=100e3)
    p.add_argument("--power", type=float, default=0.0)
    return parser


def _run_config(args) -> RunConfig:
    bands = []
    if getattr(args, "band", None):
        bands = args.band if isinstance(args.band, list) else [args.band]
    if args.subcommand == "scale":
        bands = [b for b in (args.band1, args.band2) if b]
    overrides = {}
    if getattr(args, "gate_span", None) is not None:
        overrides["span_s"] = args.gate_span
    if getattr(args, "gate_extent", None) is not None:
        overrides["extent_m"] = args.gate_extent
    if getattr(args, "gate_method", None):
        overrides["method"] = args.gate_method
    if getattr(args, "window", None) is not None:
        overrides["window"] = args.window
    if getattr(args, "pad", None) is not None:
        overrides["pad_factor"] = args.pad
    jobs = getattr(args, "jobs", 1)
    if jobs < 1:
        raise ValidationError("--jobs must be >= 1")
    return RunConfig(
        subcommand=args.subcommand,
        manifest=getattr(args, "manifest", None),
        out=getattr(args, "out", None),
        jobs=jobs,
        seed=getattr(args, "seed", None),
        fmt=getattr(args, "format", None),
        bands=bands,
        gate_overrides=overrides,
        figures=not getattr(args, "no_figures", False),
    )


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _run_config(args)
        if args.subcommand == "extract":
            return cmd_extract(cfg)
        if args.subcommand == "scale":
            return cmd_scale(cfg)
        if args.subcommand == "range-image":
            return cmd_range_image(cfg, args.theta, args.interp, args.phi_step, args.top_k, args.max_range)
        if args.subcommand == "plan":
            return cmd_plan(cfg, args.aperture, args.hpbw, args.freq, args.width, args.margin, args.theta)
        if args.subcommand == "synth":
            return cmd_synth(cfg, args.scene)
        return cmd_acquire(cfg, args)
    except CampaignValidationError as exc:
        _err(f"validation failed: {len(exc.issues)} issue(s)")
        for i in exc.issues:
            _err(f"  [{i['kind']}] {i['message']}")
        return EXIT_VALIDATION
    except AcquisitionError as exc:
        _err(f"acquisition failed ({exc.code}): {exc}")
        return EXIT_NETWORK
    except ValidationError as exc:
        _err(f"validation error: {exc}")
        return EXIT_VALIDATION
    except RcsError as exc:
        _err(f"pipeline error: {exc}")
        return EXIT_PIPELINE
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))

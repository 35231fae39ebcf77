"""Sweep file readers/writers and the campaign manifest.

Touchstone support is deliberately narrow: version 1, one port, S
parameters, formats RI / MA / DB. The manifest is one JSON document whose
layout is documented in ``docs/manifest.md``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CampaignValidationError, ParseError, SweepValidationError, ValidationError
from .sweep import FrequencyGrid, FrequencySweep

MANIFEST_SCHEMA_VERSION = 1

_UNIT_SCALE = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_FORMATS = ("RI", "MA", "DB")
UNIFORM_RTOL = 1e-6


@dataclass(frozen=True)
class SweepFileHeader:
    """How to read one sweep file.

    For CSV, ``columns`` names the frequency column and the two data columns
    (real/imag, mag/angle or dB/angle depending on ``data_format``).
    ``n_points=None`` skips the row-count check.
    """

    format: str = "touchstone"
    frequency_unit: str = "Hz"
    data_format: str = "RI"
    n_points: int | None = None
    columns: tuple[str, str, str] = ("freq_hz", "s11_re", "s11_im")

    def __post_init__(self):
        if self.format not in ("touchstone", "csv"):
            raise ValidationError(f"unknown sweep file format {self.format!r}")
        if self.frequency_unit.upper() not in _UNIT_SCALE:
            raise ValidationError(f"unknown frequency unit {self.frequency_unit!r}")
        if self.data_format.upper() not in _FORMATS:
            raise ValidationError(f"unknown data format {self.data_format!r}")


def _to_complex(a: np.ndarray, b: np.ndarray, fmt: str) -> np.ndarray:
    fmt = fmt.upper()
    if fmt == "RI":
        return a + 1j * b
    mag = a if fmt == "MA" else 10.0 ** (a / 20.0)
    return mag * np.exp(1j * np.deg2rad(b))


def _build_sweep(freqs: list[float], lines: list[int], a, b, fmt: str, label: str) -> FrequencySweep:
    if len(freqs) < 2:
        raise ParseError(f"need at least 2 data rows, found {len(freqs)}")
    f = np.asarray(freqs)
    for k in range(1, f.size):
        if not f[k] > f[k - 1]:
            raise ParseError("frequencies are not strictly increasing", lines[k])
    step = (f[-1] - f[0]) / (f.size - 1)
    dev = np.abs(np.diff(f) - step)
    k = int(np.argmax(dev))
    if dev[k] > UNIFORM_RTOL * step:
        # report the first row where the step changes, which is where a reader would look
        jumps = np.flatnonzero(np.abs(np.diff(f) - (f[1] - f[0])) > UNIFORM_RTOL * step)
        k = int(jumps[0]) if jumps.size else k
        raise ParseError(
            f"non-uniform frequency grid (step deviates by {dev[k] / step:.3g} relative)",
            lines[k + 1],
        )
    grid = FrequencyGrid(f[0], f[-1], f.size)
    samples = _to_complex(np.asarray(a), np.asarray(b), fmt)
    try:
        return FrequencySweep(grid, samples, label)
    except SweepValidationError as exc:
        bad = np.flatnonzero(~np.isfinite(samples))
        raise ParseError(str(exc), lines[int(bad[0])] if bad.size else None) from exc


def _decode(data: bytes | str) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"file is not valid UTF-8: {exc}") from exc
    return data


def parse_touchstone_s1p(data: bytes | str, label: str = "target") -> FrequencySweep:
    text = _decode(data)
    unit = fmt = None
    freqs: list[float] = []
    lines: list[int] = []
    a: list[float] = []
    b: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if unit is not None:
                raise ParseError("duplicate option line", lineno)
            unit, fmt = _parse_option_line(line, lineno)
            continue
        if line.startswith("["):
            raise ParseError("Touchstone v2 keywords are not supported", lineno)
        if unit is None:
            raise ParseError("data row before option line (missing '# ...' line)", lineno)
        tokens = line.split()
        if len(tokens) != 3:
            raise ParseError(f"expected 3 columns for a 1-port file, got {len(tokens)}", lineno)
        try:
            vals = [float(t) for t in tokens]
        except ValueError:
            raise ParseError(f"unparseable row {line!r}", lineno) from None
        freqs.append(vals[0] * _UNIT_SCALE[unit])
        lines.append(lineno)
        a.append(vals[1])
        b.append(vals[2])
    if unit is None:
        raise ParseError("missing option line ('# <unit> S <fmt> R <z0>')")
    return _build_sweep(freqs, lines, a, b, fmt, label)


def _parse_option_line(line: str, lineno: int) -> tuple[str, str]:
    tokens = line[1:].upper().split()
    unit, param, fmt = "GHZ", "S", "MA"
    k = 0
    while k < len(tokens):
        t = tokens[k]
        if t in _UNIT_SCALE:
            unit = t
        elif t in _FORMATS:
            fmt = t
        elif t in ("S", "Y", "Z", "G", "H"):
            param = t
        elif t == "R":
            k += 1
            if k >= len(tokens):
                raise ParseError("option line 'R' without reference impedance", lineno)
            try:
                float(tokens[k])
            except ValueError:
                raise ParseError(f"bad reference impedance {tokens[k]!r}", lineno) from None
        else:
            raise ParseError(f"unknown option token {t!r}", lineno)
        k += 1
    if param != "S":
        raise ParseError(f"only S parameters are supported, got {param}", lineno)
    return unit, fmt


def write_touchstone_s1p(
    sweep: FrequencySweep, data_format: str = "RI", frequency_unit: str = "GHz"
) -> bytes:
    """Serialize with full float precision (``repr``) so re-parsing is lossless."""
    fmt = data_format.upper()
    unit = frequency_unit.upper()
    if fmt not in _FORMATS or unit not in _UNIT_SCALE:
        raise ValidationError(f"unsupported format {data_format!r} / unit {frequency_unit!r}")
    s = sweep.samples
    if fmt == "RI":
        a, b = s.real, s.imag
    else:
        mag = np.abs(s)
        a = mag if fmt == "MA" else 20.0 * np.log10(mag)
        b = np.rad2deg(np.angle(s))
    f = sweep.grid.frequencies / _UNIT_SCALE[unit]
    out = io.StringIO()
    out.write(f"! rcskit 1-port sweep, label={sweep.label}\n")
    out.write(f"# {frequency_unit} S {fmt} R 50\n")
    for fi, ai, bi in zip(f, a, b):
        out.write(f"{float(fi)!r} {float(ai)!r} {float(bi)!r}\n")
    return out.getvalue().encode("utf-8")


def parse_csv_sweep(data: bytes | str, spec: SweepFileHeader | None = None, label: str = "target") -> FrequencySweep:
    spec = spec or SweepFileHeader(format="csv")
    text = _decode(data)
    reader = csv.reader(io.StringIO(text))
    header = None
    freqs: list[float] = []
    lines: list[int] = []
    a: list[float] = []
    b: list[float] = []
    scale = _UNIT_SCALE[spec.frequency_unit.upper()]
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
            continue
        if header is None:
            header = [c.strip() for c in row]
            missing = [c for c in spec.columns if c not in header]
            if missing:
                raise ParseError(f"columns {missing} not found in header {header}", lineno)
            idx = [header.index(c) for c in spec.columns]
            continue
        if len(row) != len(header):
            raise ParseError(f"row has {len(row)} fields, header has {len(header)}", lineno)
        try:
            vals = [float(row[i]) for i in idx]
        except ValueError:
            raise ParseError(f"unparseable value in row {row!r}", lineno) from None
        freqs.append(vals[0] * scale)
        lines.append(lineno)
        a.append(vals[1])
        b.append(vals[2])
    if header is None:
        raise ParseError("empty CSV file (no header)")
    if spec.n_points is not None and spec.n_points != len(freqs):
        raise ParseError(f"header declares {spec.n_points} points, file has {len(freqs)} rows")
    return _build_sweep(freqs, lines, a, b, spec.data_format, label)


def write_csv_sweep(sweep: FrequencySweep) -> bytes:
    out = io.StringIO()
    out.write("freq_hz,s11_re,s11_im\n")
    for fi, si in zip(sweep.grid.frequencies, sweep.samples):
        out.write(f"{float(fi)!r},{float(si.real)!r},{float(si.imag)!r}\n")
    return out.getvalue().encode("utf-8")


def read_sweep_file(path: str | os.PathLike, header: SweepFileHeader | None = None, label: str = "target") -> FrequencySweep:
    path = Path(path)
    data = path.read_bytes()
    if header is None:
        header = SweepFileHeader(format="csv" if path.suffix.lower() == ".csv" else "touchstone")
    try:
        if header.format == "csv":
            sweep = parse_csv_sweep(data, header, label)
        else:
            sweep = parse_touchstone_s1p(data, label)
    except ParseError as exc:
        raise ParseError(f"{path.name}: {exc.message}", exc.line) from exc
    if header.n_points is not None and sweep.grid.n_samples != header.n_points:
        raise ParseError(f"{path.name}: expected {header.n_points} points, found {sweep.grid.n_samples}")
    return sweep


# --- campaign manifest -----------------------------------------------------


@dataclass(frozen=True)
class BandSpec:
    name: str
    f_start_hz: float
    f_stop_hz: float
    n_samples: int
    antenna_hpbw_deg: float | None = None

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.f_start_hz, self.f_stop_hz, self.n_samples)


@dataclass(frozen=True)
class SphereSpec:
    radius_m: float
    distance_m: float


@dataclass(frozen=True)
class TargetSpec:
    name: str
    distance_m: float
    height_m: float | None = None
    width_m: float | None = None
    length_m: float | None = None
    environment: str = "indoor"
    extent_m: float | None = None

    @property
    def gate_extent_m(self) -> float:
        """Radial depth the target can occupy behind its strongest return."""
        if self.extent_m is not None:
            return self.extent_m
        dims = [d for d in (self.height_m, self.width_m, self.length_m) if d]
        if not dims:
            return 1.0
        return float(math.sqrt(sum(d * d for d in dims)))


@dataclass(frozen=True)
class ManifestEntry:
    band: str
    theta_deg: float
    phi_deg: float
    scenario: str
    path: str
    format: str | None = None
    csv: dict | None = None

    @property
    def key(self) -> tuple[str, float, float]:
        return (self.band, self.theta_deg, self.phi_deg)

    def header(self, n_points: int | None) -> SweepFileHeader:
        fmt = self.format or ("csv" if self.path.lower().endswith(".csv") else "touchstone")
        extra = dict(self.csv or {})
        if "columns" in extra:
            extra["columns"] = tuple(extra["columns"])
        return SweepFileHeader(format=fmt, n_points=n_points, **extra)

    def to_json(self) -> dict:
        d = {
            "band": self.band,
            "theta_deg": self.theta_deg,
            "phi_deg": self.phi_deg,
            "scenario": self.scenario,
            "path": self.path,
        }
        if self.format:
            d["format"] = self.format
        if self.csv:
            d["csv"] = self.csv
        return d


@dataclass(frozen=True)
class CampaignManifest:
    campaign_id: str
    bands: tuple[BandSpec, ...]
    sphere: SphereSpec
    target: TargetSpec
    entries: tuple[ManifestEntry, ...]
    mirror_azimuth: bool = False
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def band(self, name: str) -> BandSpec:
        for b in self.bands:
            if b.name == name:
                return b
        raise ValidationError(f"band {name!r} not in manifest (have {[b.name for b in self.bands]})")

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "campaign_id": self.campaign_id,
            "mirror_azimuth": self.mirror_azimuth,
            "bands": [_drop_none(vars(b)) for b in self.bands],
            "sphere": vars(self.sphere).copy(),
            "target": _drop_none(vars(self.target)),
            "entries": [e.to_json() for e in self.entries],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CampaignManifest":
        issues: list[dict] = []
        try:
            version = doc.get("schema_version")
            if version != MANIFEST_SCHEMA_VERSION:
                issues.append(_issue("schema", f"unsupported schema_version {version!r}"))
            bands = tuple(BandSpec(**b) for b in doc["bands"])
            sphere = SphereSpec(**doc["sphere"])
            target = TargetSpec(**doc["target"])
            entries = tuple(ManifestEntry(**e) for e in doc["entries"])
            manifest = cls(
                campaign_id=str(doc["campaign_id"]),
                bands=bands,
                sphere=sphere,
                target=target,
                entries=entries,
                mirror_azimuth=bool(doc.get("mirror_azimuth", False)),
                schema_version=version,
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise CampaignValidationError([_issue("schema", f"manifest schema violation: {exc!r}")]) from exc
        if issues:
            raise CampaignValidationError(issues)
        return manifest


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _issue(kind: str, message: str, **where) -> dict:
    return {"kind": kind, "message": message, **where}


def validate_manifest(m: CampaignManifest) -> list[dict]:
    """Structural checks that do not touch the sweep files."""
    issues: list[dict] = []
    names = [b.name for b in m.bands]
    if len(set(names)) != len(names):
        issues.append(_issue("schema", f"duplicate band names {names}"))
    for b in m.bands:
        try:
            b.grid
        except SweepValidationError as exc:
            issues.append(_issue("schema", f"band {b.name}: {exc}", band=b.name))
        if b.antenna_hpbw_deg is not None and not 0 < b.antenna_hpbw_deg < 180:
            issues.append(_issue("schema", f"band {b.name}: hpbw must be in (0, 180)", band=b.name))
    if not m.sphere.radius_m > 0:
        issues.append(_issue("schema", "sphere radius_m must be > 0"))
    if not m.sphere.distance_m > 0:
        issues.append(_issue("schema", "sphere distance_m must be > 0"))
    if not m.target.distance_m > 0:
        issues.append(_issue("schema", "target distance_m must be > 0"))
    if m.target.environment not in ("indoor", "outdoor"):
        issues.append(_issue("schema", f"target environment must be indoor|outdoor, got {m.target.environment!r}"))

    seen: set[tuple] = set()
    for e in m.entries:
        where = dict(band=e.band, theta_deg=e.theta_deg, phi_deg=e.phi_deg, scenario=e.scenario)
        if e.band not in names:
            issues.append(_issue("schema", f"entry references unknown band {e.band!r}", **where))
        if e.scenario not in ("target", "background", "sphere"):
            issues.append(_issue("schema", f"unknown scenario {e.scenario!r}", **where))
        if not 0 <= e.theta_deg <= 90:
            issues.append(_issue("schema", f"theta {e.theta_deg} outside [0, 90]", **where))
        if not 0 <= e.phi_deg < 360:
            issues.append(_issue("schema", f"phi {e.phi_deg} outside [0, 360)", **where))
        k = (e.band, e.theta_deg, e.phi_deg, e.scenario)
        if k in seen:
            issues.append(_issue("duplicate", f"duplicate entry {k}", **where))
        seen.add(k)

    by_key = {(e.band, e.theta_deg, e.phi_deg, e.scenario) for e in m.entries}
    for band in names:
        if not any(e.band == band and e.scenario == "sphere" for e in m.entries):
            issues.append(_issue("missing_sphere", f"band {band}: no sphere entry", band=band, scenario="sphere"))
    for e in m.entries:
        if e.scenario == "target" and (e.band, e.theta_deg, e.phi_deg, "background") not in by_key:
            issues.append(
                _issue(
                    "missing_background",
                    f"({e.band}, theta={e.theta_deg:g}, phi={e.phi_deg:g}): target without background",
                    band=e.band, theta_deg=e.theta_deg, phi_deg=e.phi_deg, scenario="background",
                )
            )
        if e.scenario == "sphere" and (e.band, e.theta_deg, e.phi_deg, "background") not in by_key:
            issues.append(
                _issue(
                    "missing_background",
                    f"({e.band}, theta={e.theta_deg:g}, phi={e.phi_deg:g}): sphere without background",
                    band=e.band, theta_deg=e.theta_deg, phi_deg=e.phi_deg, scenario="background",
                )
            )
    return issues


@dataclass(frozen=True, eq=False)
class Campaign:
    """Validated, read-only view of a campaign with all sweeps loaded."""

    manifest: CampaignManifest
    root: Path
    sweeps: dict = field(repr=False)

    @property
    def bands(self) -> list[str]:
        return [b.name for b in self.manifest.bands]

    def band(self, name: str) -> BandSpec:
        return self.manifest.band(name)

    def angles(self, band: str) -> list[tuple[float, float]]:
        """Sorted (theta, phi) pairs that have a target entry in ``band``."""
        self.band(band)
        return sorted(
            {(e.theta_deg, e.phi_deg) for e in self.manifest.entries if e.band == band and e.scenario == "target"}
        )

    def elevations(self, band: str) -> list[float]:
        return sorted({t for t, _ in self.angles(band)})

    def sweep(self, band: str, theta: float, phi: float, scenario: str) -> FrequencySweep:
        try:
            return self.sweeps[(band, float(theta), float(phi), scenario)]
        except KeyError:
            raise ValidationError(
                f"no {scenario} sweep for ({band}, theta={theta:g}, phi={phi:g})"
            ) from None

    def sphere_key(self, band: str, theta: float, phi: float) -> tuple[float, float]:
        """Sphere measured at the same angle if present, else the band's first sphere."""
        spheres = sorted(
            (e.theta_deg, e.phi_deg) for e in self.manifest.entries if e.band == band and e.scenario == "sphere"
        )
        if (theta, phi) in spheres:
            return (theta, phi)
        return spheres[0]

    def triple(self, band: str, theta: float, phi: float):
        from .pipeline import MeasurementTriple

        st, sp = self.sphere_key(band, theta, phi)
        return MeasurementTriple(
            target=self.sweep(band, theta, phi, "target"),
            background=self.sweep(band, theta, phi, "background"),
            sphere=self.sweep(band, st, sp, "sphere"),
            sphere_background=self.sweep(band, st, sp, "background"),
        )

    def calibration_context(self):
        from .pipeline import CalibrationContext

        return CalibrationContext(
            sphere_radius_m=self.manifest.sphere.radius_m,
            d_target_m=self.manifest.target.distance_m,
            d_sphere_m=self.manifest.sphere.distance_m,
        )


def load_manifest(path: str | os.PathLike) -> CampaignManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CampaignValidationError([_issue("schema", f"{path.name}: invalid JSON: {exc}")]) from exc
    return CampaignManifest.from_json(doc)


def load_campaign(manifest_path: str | os.PathLike, jobs: int = 1) -> Campaign:
    """Parse and validate a manifest plus every sweep file it references.

    All problems are collected and raised together as
    ``CampaignValidationError``; I/O errors on the manifest itself propagate
    as ``OSError``.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    root = manifest_path.parent
    issues = validate_manifest(manifest)
    band_specs = {b.name: b for b in manifest.bands}

    def load(e: ManifestEntry):
        b = band_specs.get(e.band)
        where = dict(band=e.band, theta_deg=e.theta_deg, phi_deg=e.phi_deg, scenario=e.scenario, path=e.path)
        p = root / e.path
        label = e.scenario
        try:
            sweep = read_sweep_file(p, e.header(None), label)
        except FileNotFoundError:
            return None, _issue("io", f"({e.band}, {e.scenario}, theta={e.theta_deg:g}, phi={e.phi_deg:g}): file not found: {e.path}", **where)
        except OSError as exc:
            return None, _issue("io", f"({e.band}, {e.scenario}): cannot read {e.path}: {exc}", **where)
        except ValidationError as exc:
            return None, _issue("parse", f"({e.band}, {e.scenario}, theta={e.theta_deg:g}, phi={e.phi_deg:g}): {exc}", **where)
        if b is not None:
            g = sweep.grid
            if g.n_samples != b.n_samples:
                return None, _issue(
                    "consistency",
                    f"({e.band}, {e.scenario}, theta={e.theta_deg:g}, phi={e.phi_deg:g}): "
                    f"file has {g.n_samples} points, band declares {b.n_samples}",
                    **where,
                )
            if not g.close_to(b.grid, rtol=UNIFORM_RTOL):
                return None, _issue(
                    "consistency",
                    f"({e.band}, {e.scenario}): file spans {g.f_start:.6g}-{g.f_stop:.6g} Hz, "
                    f"band declares {b.f_start_hz:.6g}-{b.f_stop_hz:.6g} Hz",
                    **where,
                )
            sweep = FrequencySweep(b.grid, sweep.samples, label)
        return sweep, None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(load, manifest.entries))
    else:
        results = [load(e) for e in manifest.entries]
    sweeps = {}
    for e, (sweep, issue) in zip(manifest.entries, results):
        if issue:
            issues.append(issue)
        else:
            sweeps[(e.band, float(e.theta_deg), float(e.phi_deg), e.scenario)] = sweep
    if issues:
        raise CampaignValidationError(issues)
    return Campaign(manifest, root, sweeps)


def write_manifest_atomic(manifest: CampaignManifest, path: str | os.PathLike) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(json.dumps(manifest.to_json(), indent=2) + "\n")
    os.replace(tmp, path)

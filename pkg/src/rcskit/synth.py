"""Point-scatterer oracle for the extraction chain.

Sweeps are evaluated directly from the scattering sum

    S11(f) = G(f) * sum_k sqrt(sigma_k)/d_k^2 * exp(-j 4 pi f d_k / c + j phi_k) + n(f)

with no shared code path with the pipeline beyond the data types.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .ingest import (
    BandSpec,
    CampaignManifest,
    ManifestEntry,
    SphereSpec,
    TargetSpec,
    write_manifest_atomic,
    write_touchstone_s1p,
)
from .sweep import SPEED_OF_LIGHT, FrequencyGrid, FrequencySweep

SCENE_SCHEMA_VERSION = 1
_WHICH = {"target": 0, "background": 1, "sphere": 2}


@dataclass(frozen=True)
class PointScatterer:
    """A scatterer already resolved to a range from the antenna."""

    sigma_m2: float
    distance_m: float
    phase_offset_rad: float = 0.0
    band_gain_db: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.sigma_m2 < 0:
            raise ValidationError("sigma_m2 must be >= 0")
        if not self.distance_m > 0:
            raise ValidationError("distance_m must be > 0")

    def sigma_in(self, band: str | None) -> float:
        gain = self.band_gain_db.get(band, 0.0) if band else 0.0
        return self.sigma_m2 * 10.0 ** (gain / 10.0)


@dataclass(frozen=True)
class SystemResponse:
    """Smooth complex gain common to every measurement.

    ``polynomial``: ``sum_k c_k x^k`` with ``x = (f - f_ref)/f_scale``.
    ``table``: linear interpolation of real and imaginary parts.
    """

    kind: str = "polynomial"
    coefficients: tuple = ((1.0, 0.0),)
    f_ref_hz: float = 20e9
    f_scale_hz: float = 10e9
    frequency_hz: tuple = ()
    real: tuple = ()
    imag: tuple = ()

    def __call__(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if self.kind == "polynomial":
            c = np.array([complex(re, im) for re, im in self.coefficients])
            x = (f - self.f_ref_hz) / self.f_scale_hz
            g = np.polynomial.polynomial.polyval(x, c)
        elif self.kind == "table":
            g = np.interp(f, self.frequency_hz, self.real) + 1j * np.interp(f, self.frequency_hz, self.imag)
        else:
            raise ValidationError(f"unknown system response kind {self.kind!r}")
        if np.min(np.abs(g)) < 1e-12:
            raise ValidationError("system response vanishes inside the band")
        return g

    def to_json(self) -> dict:
        if self.kind == "polynomial":
            return {
                "kind": "polynomial",
                "coefficients": [list(c) for c in self.coefficients],
                "f_ref_hz": self.f_ref_hz,
                "f_scale_hz": self.f_scale_hz,
            }
        return {"kind": "table", "frequency_hz": list(self.frequency_hz), "real": list(self.real), "imag": list(self.imag)}

    @classmethod
    def from_json(cls, d: dict | None) -> "SystemResponse":
        if not d:
            return cls()
        if d.get("kind", "polynomial") == "polynomial":
            return cls(
                "polynomial",
                tuple(tuple(map(float, c)) for c in d["coefficients"]),
                float(d.get("f_ref_hz", 20e9)),
                float(d.get("f_scale_hz", 10e9)),
            )
        return cls("table", frequency_hz=tuple(d["frequency_hz"]), real=tuple(d["real"]), imag=tuple(d["imag"]))

    @classmethod
    def random_smooth(cls, rng: np.random.Generator, order: int = 3, ripple: float = 0.15) -> "SystemResponse":
        """Unit-mean polynomial with small random complex higher-order terms.

        ``sum |c_k| <= ripple`` for k >= 1 keeps ``|G| >= 1 - ripple`` on [-1, 1].
        """
        raw = rng.normal(size=order) + 1j * rng.normal(size=order)
        raw *= ripple / np.sum(np.abs(raw))
        coeffs = [(1.0, 0.0)] + [(float(c.real), float(c.imag)) for c in raw]
        return cls("polynomial", tuple(coeffs))


@dataclass(frozen=True)
class SyntheticScene:
    target_scatterers: tuple = ()
    clutter_scatterers: tuple = ()
    system_response: SystemResponse = SystemResponse()
    noise_rms: float = 0.0
    seed: int = 0


def _echo_sum(scatterers, f: np.ndarray, band: str | None) -> np.ndarray:
    acc = np.zeros(f.size, dtype=complex)
    for s in scatterers:
        amp = math.sqrt(s.sigma_in(band)) / s.distance_m**2
        acc += amp * np.exp(-4j * np.pi * f * s.distance_m / SPEED_OF_LIGHT + 1j * s.phase_offset_rad)
    return acc


def simulate_sweep(
    scene: SyntheticScene,
    which: str,
    grid: FrequencyGrid,
    sphere: SphereSpec,
    band: str | None = None,
    noise_key: tuple[int, ...] = (),
) -> FrequencySweep:
    """Evaluate one measurement of ``scene``.

    ``which='background'`` drops the target scatterers; ``'sphere'``
    replaces them with a single scatterer of ``pi R^2`` at the sphere
    distance. Noise is complex white Gaussian with ``E|n|^2 = noise_rms^2``,
    drawn from PCG64 seeded by ``(seed, which, *noise_key)``.
    """
    if which not in _WHICH:
        raise ValidationError(f"unknown measurement {which!r}")
    f = grid.frequencies
    if which == "target":
        scat = tuple(scene.target_scatterers) + tuple(scene.clutter_scatterers)
    elif which == "background":
        scat = tuple(scene.clutter_scatterers)
    else:
        ball = PointScatterer(math.pi * sphere.radius_m**2, sphere.distance_m)
        scat = (ball,) + tuple(scene.clutter_scatterers)
    s = scene.system_response(f) * _echo_sum(scat, f, band)
    if scene.noise_rms > 0:
        rng = np.random.Generator(np.random.PCG64([int(scene.seed), _WHICH[which], *map(int, noise_key)]))
        noise = rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size)
        s = s + noise * (scene.noise_rms / math.sqrt(2.0))
    return FrequencySweep(grid, s, which)


# --- campaign templates -------------------------------------------------------


@dataclass(frozen=True)
class BodyScatterer:
    """Scatterer fixed in the target body frame (metres from the target centre).

    ``lobe_center_deg``/``lobe_width_deg`` optionally give a Gaussian azimuth
    visibility pattern on sigma, ``exp(-0.5*(dphi/width)^2)``.
    """

    sigma_m2: float
    position_m: tuple = (0.0, 0.0, 0.0)
    phase_offset_rad: float = 0.0
    band_gain_db: dict = field(default_factory=dict, hash=False, compare=False)
    lobe_center_deg: float | None = None
    lobe_width_deg: float | None = None

    def at_aspect(self, d_target: float, theta_deg: float, phi_deg: float) -> PointScatterer:
        th, ph = math.radians(theta_deg), math.radians(phi_deg)
        toward_antenna = np.array([math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), math.sin(th)])
        d = d_target - float(np.dot(np.asarray(self.position_m, dtype=float), toward_antenna))
        sigma = self.sigma_m2
        if self.lobe_center_deg is not None and self.lobe_width_deg:
            dphi = (phi_deg - self.lobe_center_deg + 180.0) % 360.0 - 180.0
            sigma *= math.exp(-0.5 * (dphi / self.lobe_width_deg) ** 2)
        return PointScatterer(sigma, d, self.phase_offset_rad, dict(self.band_gain_db))


@dataclass(frozen=True)
class SceneTemplate:
    """Declarative description of a whole synthetic campaign (scene JSON)."""

    campaign_id: str
    bands: tuple
    target: TargetSpec
    sphere: SphereSpec
    body_scatterers: tuple
    clutter_scatterers: tuple = ()
    system_response: SystemResponse = SystemResponse()
    noise_rms: float = 0.0
    seed: int = 0
    theta_deg: tuple = (0.0,)
    phi_deg: tuple = (0.0,)
    mirror_azimuth: bool = False

    def scene_at(self, theta: float, phi: float) -> SyntheticScene:
        tgt = tuple(b.at_aspect(self.target.distance_m, theta, phi) for b in self.body_scatterers)
        return SyntheticScene(tgt, tuple(self.clutter_scatterers), self.system_response, self.noise_rms, self.seed)

    def to_json(self) -> dict:
        def body(b: BodyScatterer) -> dict:
            d = {"sigma_m2": b.sigma_m2, "position_m": list(b.position_m), "phase_rad": b.phase_offset_rad}
            if b.band_gain_db:
                d["band_gain_db"] = dict(b.band_gain_db)
            if b.lobe_center_deg is not None:
                d["lobe"] = {"center_deg": b.lobe_center_deg, "width_deg": b.lobe_width_deg}
            return d

        return {
            "schema_version": SCENE_SCHEMA_VERSION,
            "campaign_id": self.campaign_id,
            "seed": self.seed,
            "noise_rms": self.noise_rms,
            "mirror_azimuth": self.mirror_azimuth,
            "system_response": self.system_response.to_json(),
            "bands": [{k: v for k, v in vars(b).items() if v is not None} for b in self.bands],
            "target": {k: v for k, v in vars(self.target).items() if v is not None},
            "sphere": vars(self.sphere).copy(),
            "target_scatterers": [body(b) for b in self.body_scatterers],
            "clutter_scatterers": [
                {"sigma_m2": c.sigma_m2, "distance_m": c.distance_m, "phase_rad": c.phase_offset_rad}
                for c in self.clutter_scatterers
            ],
            "angles": {"theta_deg": list(self.theta_deg), "phi_deg": list(self.phi_deg)},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SceneTemplate":
        if doc.get("schema_version", SCENE_SCHEMA_VERSION) != SCENE_SCHEMA_VERSION:
            raise ValidationError(f"unsupported scene schema_version {doc.get('schema_version')!r}")
        try:
            bodies = []
            for b in doc["target_scatterers"]:
                lobe = b.get("lobe") or {}
                bodies.append(
                    BodyScatterer(
                        sigma_m2=float(b["sigma_m2"]),
                        position_m=tuple(float(x) for x in b.get("position_m", (0, 0, 0))),
                        phase_offset_rad=float(b.get("phase_rad", 0.0)),
                        band_gain_db=dict(b.get("band_gain_db", {})),
                        lobe_center_deg=lobe.get("center_deg"),
                        lobe_width_deg=lobe.get("width_deg"),
                    )
                )
            clutter = tuple(
                PointScatterer(float(c["sigma_m2"]), float(c["distance_m"]), float(c.get("phase_rad", 0.0)))
                for c in doc.get("clutter_scatterers", [])
            )
            angles = doc.get("angles", {})
            return cls(
                campaign_id=str(doc.get("campaign_id", "synthetic")),
                bands=tuple(BandSpec(**b) for b in doc["bands"]),
                target=TargetSpec(**doc["target"]),
                sphere=SphereSpec(**doc["sphere"]),
                body_scatterers=tuple(bodies),
                clutter_scatterers=clutter,
                system_response=SystemResponse.from_json(doc.get("system_response")),
                noise_rms=float(doc.get("noise_rms", 0.0)),
                seed=int(doc.get("seed", 0)),
                theta_deg=tuple(float(t) for t in _angle_list(angles.get("theta_deg", [0.0]))),
                phi_deg=tuple(float(p) for p in _angle_list(angles.get("phi_deg", [0.0]))),
                mirror_azimuth=bool(doc.get("mirror_azimuth", False)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"scene schema violation: {exc!r}") from exc


def _angle_list(spec) -> list[float]:
    """Accept an explicit list or ``{"start", "stop", "step"}`` (stop inclusive)."""
    if isinstance(spec, dict):
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(n)]
    return list(spec)


def load_scene(path: str | os.PathLike) -> SceneTemplate:
    return SceneTemplate.from_json(json.loads(Path(path).read_text()))


def _fmt_angle(a: float) -> str:
    return f"{a:g}".replace(".", "p")


def generate_campaign(template: SceneTemplate, out_dir: str | os.PathLike) -> Path:
    """Write Touchstone sweeps plus ``manifest.json`` for every band and angle.

    Per (band, theta, phi): target, background and sphere sweeps; the
    sphere's background is the background at the same angle. Returns the
    manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []
    for bi, band in enumerate(template.bands):
        grid = band.grid
        (out / band.name).mkdir(exist_ok=True)
        for ti, theta in enumerate(template.theta_deg):
            for pi_, phi in enumerate(template.phi_deg):
                scene = template.scene_at(theta, phi)
                for which in ("target", "background", "sphere"):
                    sweep = simulate_sweep(scene, which, grid, template.sphere, band.name, (bi, ti, pi_))
                    rel = f"{band.name}/t{_fmt_angle(theta)}_p{_fmt_angle(phi)}_{which}.s1p"
                    (out / rel).write_bytes(write_touchstone_s1p(sweep))
                    entries.append(ManifestEntry(band.name, theta, phi, which, rel))
    manifest = CampaignManifest(
        campaign_id=template.campaign_id,
        bands=tuple(template.bands),
        sphere=template.sphere,
        target=template.target,
        entries=tuple(entries),
        mirror_azimuth=template.mirror_azimuth,
    )
    path = out / "manifest.json"
    write_manifest_atomic(manifest, path)
    return path


def oracle_template(
    *,
    sigma_m2: float = 0.5,
    d_target: float = 5.0,
    d_sphere: float = 4.0,
    radius: float = 0.15,
    bands: tuple | None = None,
    theta_deg=(0.0,),
    phi_deg=tuple(range(0, 181, 10)),
    clutter=(),
    system_response: SystemResponse | None = None,
    noise_rms: float = 0.0,
    seed: int = 0,
    band2_gain_db: float = 0.0,
    extent_m: float = 0.5,
    body_scatterers: tuple | None = None,
) -> SceneTemplate:
    """Convenience template: one scatterer at the target centre by default."""
    if bands is None:
        bands = (BandSpec("FR3", 10e9, 14e9, 2001, 16.0),)
    gain = {bands[1].name: band2_gain_db} if len(bands) > 1 and band2_gain_db else {}
    if body_scatterers is None:
        body_scatterers = (BodyScatterer(sigma_m2, (0.0, 0.0, 0.0), 0.0, gain),)
    return SceneTemplate(
        campaign_id="oracle",
        bands=tuple(bands),
        target=TargetSpec("oracle", d_target, extent_m=extent_m),
        sphere=SphereSpec(radius, d_sphere),
        body_scatterers=tuple(body_scatterers),
        clutter_scatterers=tuple(clutter),
        system_response=system_response or SystemResponse(),
        noise_rms=noise_rms,
        seed=seed,
        theta_deg=tuple(float(t) for t in theta_deg),
        phi_deg=tuple(float(p) for p in phi_deg),
    )


def with_system_response(template: SceneTemplate, g: SystemResponse) -> SceneTemplate:
    return replace(template, system_response=g)

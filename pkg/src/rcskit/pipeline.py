"""RCS extraction chain.

background subtraction -> delay gating (target and sphere channels each at
their own delay) -> sphere calibration with distance correction ->
band-averaged RCS.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CalibrationError, GateDesignError, PipelineError, RcsError
from .gating import (
    DEFAULT_CONCENTRATION,
    DEFAULT_GATE_METHOD,
    DEFAULT_GATE_TAPER,
    TimeGate,
    apply_gate,
    design_gate,
    gate_span_for_extent,
)
from .sweep import (
    DEFAULT_PAD,
    DEFAULT_WINDOW,
    SPEED_OF_LIGHT,
    FrequencyGrid,
    FrequencySweep,
    WindowSpec,
    dbsm,
    to_time_domain,
)


@dataclass(frozen=True, eq=False)
class MeasurementTriple:
    target: FrequencySweep
    background: FrequencySweep
    sphere: FrequencySweep
    sphere_background: FrequencySweep

    def __post_init__(self):
        g = self.target.grid
        for name in ("background", "sphere", "sphere_background"):
            if getattr(self, name).grid != g:
                raise PipelineError("input", f"{name} grid differs from target grid")

    @property
    def grid(self) -> FrequencyGrid:
        return self.target.grid

    def map(self, fn) -> "MeasurementTriple":
        return MeasurementTriple(
            fn(self.target), fn(self.background), fn(self.sphere), fn(self.sphere_background)
        )


@dataclass(frozen=True)
class CalibrationContext:
    sphere_radius_m: float
    d_target_m: float
    d_sphere_m: float
    sigma_sph_m2: float = field(init=False)

    def __post_init__(self):
        if not self.sphere_radius_m > 0:
            raise PipelineError("calibrate", "sphere radius must be positive")
        if not (self.d_target_m > 0 and self.d_sphere_m > 0):
            raise PipelineError("calibrate", "distances must be positive")
        object.__setattr__(self, "sigma_sph_m2", sphere_rcs(self.sphere_radius_m))

    @property
    def distance_factor(self) -> float:
        return (self.d_target_m / self.d_sphere_m) ** 2


def sphere_rcs(radius_m: float) -> float:
    """Optical-limit RCS of a conducting sphere, ``pi R^2``."""
    return math.pi * radius_m**2


@dataclass(frozen=True, eq=False)
class SigmaSpectrum:
    """Calibrated ``sqrt(sigma)(f)`` in metres.

    Zero delay in this spectrum corresponds to ``reference_range_m`` (the
    sphere position), because the calibration ratio removes the sphere's
    own propagation phase.
    """

    grid: FrequencyGrid
    sqrt_sigma: np.ndarray
    band_label: str = ""
    reference_range_m: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.sqrt_sigma, dtype=complex)
        if s.size != self.grid.n_samples:
            raise PipelineError("calibrate", "spectrum length does not match grid")
        if not np.all(np.isfinite(s)):
            raise PipelineError("calibrate", "non-finite calibrated values")
        s.setflags(write=False)
        object.__setattr__(self, "sqrt_sigma", s)

    @property
    def sigma(self) -> np.ndarray:
        return np.abs(self.sqrt_sigma) ** 2


def subtract_background(scene: FrequencySweep, background: FrequencySweep) -> FrequencySweep:
    if scene.grid != background.grid:
        raise PipelineError("subtract", "scene and background grids differ")
    return FrequencySweep(scene.grid, scene.samples - background.samples, scene.label)


def calibrate(
    target_gated: FrequencySweep,
    sphere_gated: FrequencySweep,
    ctx: CalibrationContext,
    band_label: str = "",
) -> SigmaSpectrum:
    """``sqrt(sigma_sph) * (S_tg / S_sph) * (D_tg / D_sph)^2`` per frequency."""
    if target_gated.grid != sphere_gated.grid:
        raise PipelineError("calibrate", "target and sphere grids differ")
    s = sphere_gated.samples
    bad = np.flatnonzero(np.abs(s) < 1e-12)
    if bad.size:
        raise CalibrationError(
            f"sphere response below 1e-12 at {bad.size} bin(s): {bad[:20].tolist()}", bad.tolist()
        )
    ratio = target_gated.samples / s
    vals = math.sqrt(ctx.sigma_sph_m2) * ratio * ctx.distance_factor
    return SigmaSpectrum(target_gated.grid, vals, band_label, ctx.d_sphere_m)


def band_average_rcs(spec: SigmaSpectrum) -> float:
    """Mean of linear ``|sqrt(sigma)|^2`` over the band (never a mean of dB)."""
    if spec.sqrt_sigma.size == 0:
        raise PipelineError("average", "empty spectrum")
    return float(np.mean(np.abs(spec.sqrt_sigma) ** 2))


@dataclass(frozen=True)
class GateParams:
    """Gate configuration shared by the target and sphere channels.

    ``extent_m`` sets the peak-search guard and, unless ``span_s`` is given,
    the span. Both channels always use the same span, which keeps the
    gating operator common to them.
    """

    extent_m: float = 1.0
    span_s: float | None = None
    method: str = DEFAULT_GATE_METHOD
    window: WindowSpec = DEFAULT_WINDOW
    taper: WindowSpec = DEFAULT_GATE_TAPER
    pad_factor: int = DEFAULT_PAD
    concentration: float = DEFAULT_CONCENTRATION
    noise_floor_db: float = 10.0

    @property
    def span(self) -> float:
        return gate_span_for_extent(self.extent_m) if self.span_s is None else self.span_s

    def to_json(self) -> dict:
        return {
            "extent_m": self.extent_m,
            "span_s": self.span,
            "span_override": self.span_s is not None,
            "method": self.method,
            "window": self.window.describe(),
            "taper": self.taper.describe(),
            "pad_factor": self.pad_factor,
            "concentration": self.concentration,
            "noise_floor_db": self.noise_floor_db,
        }


def gate_channel(sweep: FrequencySweep, expected_delay_s: float, params: GateParams) -> tuple[FrequencySweep, TimeGate]:
    profile = to_time_domain(sweep, params.window, params.pad_factor)
    gate = design_gate(
        profile,
        expected_delay_s,
        params.extent_m,
        span_s=params.span,
        method=params.method,
        taper=params.taper,
        concentration=params.concentration,
        noise_floor_db=params.noise_floor_db,
    )
    return apply_gate(sweep, gate), gate


@dataclass(frozen=True, eq=False)
class ExtractionResult:
    spectrum: SigmaSpectrum
    rcs_m2: float
    target_gate: TimeGate
    sphere_gate: TimeGate
    diagnostics: dict

    @property
    def rcs_dbsm(self) -> float:
        return float(dbsm(self.rcs_m2)) if self.rcs_m2 > 0 else float("-inf")


def _energy(x: np.ndarray) -> float:
    return float(np.vdot(x, x).real)


def _gate_named(sweep, tau, params, channel):
    try:
        return gate_channel(sweep, tau, params)
    except GateDesignError as exc:
        raise GateDesignError(f"{channel} channel: {exc.args[0].removeprefix('[gate] ')}", exc.diagnostics) from exc
    except PipelineError as exc:
        raise PipelineError("gate", f"{channel} channel: {exc}", exc.diagnostics) from exc


def extract_rcs(
    triple: MeasurementTriple,
    ctx: CalibrationContext,
    gate_params: GateParams | None = None,
    band_label: str = "",
) -> ExtractionResult:
    params = gate_params or GateParams()

    def stage(name, fn, *args):
        try:
            return fn(*args)
        except PipelineError:
            raise
        except RcsError as exc:
            raise PipelineError(name, str(exc)) from exc

    tg = stage("subtract", subtract_background, triple.target, triple.background)
    sp = stage("subtract", subtract_background, triple.sphere, triple.sphere_background)
    tau_t = 2.0 * ctx.d_target_m / SPEED_OF_LIGHT
    tau_s = 2.0 * ctx.d_sphere_m / SPEED_OF_LIGHT
    tg_gated, t_gate = _gate_named(tg, tau_t, params, "target")
    sp_gated, s_gate = _gate_named(sp, tau_s, params, "sphere")
    spec = stage("calibrate", calibrate, tg_gated, sp_gated, ctx, band_label)
    rcs = band_average_rcs(spec)

    e_tg = _energy(triple.target.samples)
    e_sp = _energy(triple.sphere.samples)
    diagnostics = {
        "gate_params": params.to_json(),
        "target_gate": t_gate.to_json() | {"peak_to_floor_db": t_gate.peak_to_floor_db},
        "sphere_gate": s_gate.to_json() | {"peak_to_floor_db": s_gate.peak_to_floor_db},
        "target_residual_energy_ratio": _energy(tg.samples) / e_tg if e_tg > 0 else 0.0,
        "sphere_residual_energy_ratio": _energy(sp.samples) / e_sp if e_sp > 0 else 0.0,
        "target_gate_retained_ratio": _energy(tg_gated.samples) / max(_energy(tg.samples), 1e-300),
        "sphere_rcs_m2": ctx.sigma_sph_m2,
        "distance_factor": ctx.distance_factor,
        "engineering_defaults": "window, zero-pad factor and gate span are analysis choices, not measured values",
    }
    return ExtractionResult(spec, rcs, t_gate, s_gate, diagnostics)


@dataclass(frozen=True)
class ExtractionRecord:
    """Serializable outcome for one (band, theta, phi) cell."""

    band: str
    theta_deg: float
    phi_deg: float
    rcs_m2: float
    gate: dict
    diagnostics: dict

    @property
    def rcs_dbsm(self) -> float:
        return float(dbsm(self.rcs_m2))

    def to_json(self) -> dict:
        return {
            "band": self.band,
            "theta_deg": self.theta_deg,
            "phi_deg": self.phi_deg,
            "rcs_m2": self.rcs_m2,
            "rcs_dbsm": self.rcs_dbsm,
            "gate": self.gate,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ExtractionRecord":
        return cls(d["band"], d["theta_deg"], d["phi_deg"], d["rcs_m2"], d["gate"], d.get("diagnostics", {}))


def default_gate_params(campaign, **overrides) -> GateParams:
    return replace(GateParams(extent_m=campaign.manifest.target.gate_extent_m), **overrides)


def extract_cell(campaign, band: str, theta: float, phi: float, params: GateParams):
    """Extract one angle; returns (record, result)."""
    triple = campaign.triple(band, theta, phi)
    res = extract_rcs(triple, campaign.calibration_context(), params, band)
    rec = ExtractionRecord(
        band=band,
        theta_deg=theta,
        phi_deg=phi,
        rcs_m2=res.rcs_m2,
        gate={"center_s": res.target_gate.center_s, "span_s": res.target_gate.span_s},
        diagnostics=res.diagnostics,
    )
    return rec, res


def extract_campaign(
    campaign,
    band: str,
    params: GateParams | None = None,
    jobs: int = 1,
    keep_spectra: bool = False,
    angles=None,
):
    """Extract every target angle of ``band`` (or just ``angles``).

    Errors are collected per angle rather than aborting the run. Returns
    ``(records, errors, spectra)``; ``spectra`` maps (theta, phi) to
    SigmaSpectrum when ``keep_spectra`` is set. Output order is by angle,
    independent of ``jobs``.
    """
    params = params or default_gate_params(campaign)
    angles = campaign.angles(band) if angles is None else sorted(angles)

    def run(angle):
        theta, phi = angle
        try:
            rec, res = extract_cell(campaign, band, theta, phi, params)
            return rec, res.spectrum, None
        except RcsError as exc:
            return None, None, {"band": band, "theta_deg": theta, "phi_deg": phi, "error": str(exc), "type": type(exc).__name__}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(run, angles))
    else:
        out = [run(a) for a in angles]
    records = [r for r, _, _ in out if r is not None]
    errors = [e for _, _, e in out if e is not None]
    spectra = {a: s for a, (_, s, _) in zip(angles, out) if s is not None} if keep_spectra else {}
    return records, errors, spectra

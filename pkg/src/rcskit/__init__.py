"""Monostatic radar cross-section extraction from VNA S11 sweeps.

Background subtraction, delay gating and sphere calibration turn raw sweeps
into calibrated RCS; the analysis layer builds heatmap grids, cross-band
statistics and range-azimuth images. ``rcskit.synth`` provides a
point-scatterer oracle for every stage.
"""

from .analysis import (
    GaussianFit,
    RangeAzimuthImage,
    RcsGrid,
    build_range_azimuth_image,
    build_rcs_grid,
    delta_rcs,
    fit_gaussian,
    range_response,
    top_contributors,
)
from .gating import TimeGate, apply_gate, design_gate
from .geometry import AntennaSpec, PlacementPlan, elevation_placement, far_field_distance, footprint_distance, plan_measurement
from .ingest import CampaignManifest, load_campaign, parse_csv_sweep, parse_touchstone_s1p, write_touchstone_s1p
from .pipeline import (
    CalibrationContext,
    GateParams,
    MeasurementTriple,
    SigmaSpectrum,
    band_average_rcs,
    calibrate,
    extract_rcs,
    subtract_background,
)
from .sweep import FrequencyGrid, FrequencySweep, TimeProfile, WindowSpec, to_frequency_domain, to_time_domain

__version__ = "0.1.0"

__all__ = [
    "AntennaSpec",
    "CalibrationContext",
    "CampaignManifest",
    "FrequencyGrid",
    "FrequencySweep",
    "GateParams",
    "GaussianFit",
    "MeasurementTriple",
    "PlacementPlan",
    "RangeAzimuthImage",
    "RcsGrid",
    "SigmaSpectrum",
    "TimeGate",
    "TimeProfile",
    "WindowSpec",
    "apply_gate",
    "band_average_rcs",
    "build_range_azimuth_image",
    "build_rcs_grid",
    "calibrate",
    "delta_rcs",
    "design_gate",
    "elevation_placement",
    "extract_rcs",
    "far_field_distance",
    "fit_gaussian",
    "footprint_distance",
    "load_campaign",
    "parse_csv_sweep",
    "parse_touchstone_s1p",
    "plan_measurement",
    "range_response",
    "subtract_background",
    "to_frequency_domain",
    "to_time_domain",
    "top_contributors",
    "write_touchstone_s1p",
]

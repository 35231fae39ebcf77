"""Measurement placement: far-field distance, beam footprint distance, elevation geometry.

Footprint distance
------------------
The target's half width plus a margin must fit inside half the beam::

    tan(HPBW/2) = (W/2 + margin) / d   =>   d = (W/2 + margin) / tan(HPBW/2)

i.e. the cotangent of the half beamwidth. The same expression is sometimes
typeset with ``tan^-1``, which read literally as an arctangent would mix an
angle into a length; the reciprocal is the only dimensionally consistent
reading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError
from .sweep import SPEED_OF_LIGHT


@dataclass(frozen=True)
class AntennaSpec:
    aperture_m: float
    hpbw_deg: float

    def __post_init__(self):
        if not self.aperture_m > 0:
            raise ValidationError(f"aperture_m must be > 0, got {self.aperture_m}")
        _check_hpbw(self.hpbw_deg)


@dataclass(frozen=True)
class PlacementPlan:
    distance_m: float
    antenna_height_m: float
    standoff_m: float
    theta_deg: float
    constraint_binding: str | None = None
    far_field_m: float | None = None
    footprint_m: float | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in vars(self).items() if v is not None}

    def table(self) -> str:
        rows = [
            ("slant distance", f"{self.distance_m:.4f} m"),
            ("antenna height", f"{self.antenna_height_m:.4f} m"),
            ("ground standoff", f"{self.standoff_m:.4f} m"),
            ("elevation", f"{self.theta_deg:g} deg"),
        ]
        if self.far_field_m is not None:
            rows.append(("far-field minimum", f"{self.far_field_m:.4f} m"))
        if self.footprint_m is not None:
            rows.append(("footprint minimum", f"{self.footprint_m:.4f} m"))
        if self.constraint_binding:
            rows.append(("binding constraint", self.constraint_binding))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def _check_hpbw(hpbw_deg: float) -> None:
    if not 0 < hpbw_deg < 180:
        raise ValidationError(f"hpbw_deg must lie in (0, 180), got {hpbw_deg}")


def wavelength(f_hz: float) -> float:
    if not f_hz > 0:
        raise ValidationError(f"frequency must be > 0, got {f_hz}")
    return SPEED_OF_LIGHT / f_hz


def far_field_distance(antenna: AntennaSpec | float, f_hz: float) -> float:
    """``2 D^2 / lambda``; ``antenna`` may be an AntennaSpec or the aperture in metres."""
    d = antenna.aperture_m if isinstance(antenna, AntennaSpec) else float(antenna)
    if not d > 0:
        raise ValidationError(f"aperture must be > 0, got {d}")
    return 2.0 * d * d / wavelength(f_hz)


def footprint_distance(target_width_m: float, margin_m: float, hpbw_deg: float) -> float:
    """``(W/2 + margin) / tan(HPBW/2)``; see the module docstring."""
    if not target_width_m > 0:
        raise ValidationError(f"target width must be > 0, got {target_width_m}")
    if not margin_m >= 0:
        raise ValidationError(f"margin must be >= 0, got {margin_m}")
    _check_hpbw(hpbw_deg)
    return (target_width_m / 2.0 + margin_m) / math.tan(math.radians(hpbw_deg) / 2.0)


def elevation_placement(min_distance_m: float, theta_deg: float) -> PlacementPlan:
    """Keep the slant range at ``min_distance_m`` and raise the antenna to elevation ``theta``."""
    if not min_distance_m > 0:
        raise ValidationError(f"distance must be > 0, got {min_distance_m}")
    if not 0 <= theta_deg < 90:
        raise ValidationError(f"theta must lie in [0, 90), got {theta_deg}")
    th = math.radians(theta_deg)
    return PlacementPlan(min_distance_m, min_distance_m * math.sin(th), min_distance_m * math.cos(th), float(theta_deg))


def plan_measurement(
    antenna: AntennaSpec,
    f_hz: float,
    target_width_m: float,
    margin_m: float,
    theta_deg: float = 0.0,
) -> PlacementPlan:
    """Slant distance ``max(far field, footprint)`` placed at elevation ``theta``.

    Ties go to ``footprint``. The far-field bound uses the highest
    frequency the caller passes, so pass the top of the band.
    """
    ff = far_field_distance(antenna, f_hz)
    fp = footprint_distance(target_width_m, margin_m, antenna.hpbw_deg)
    if ff > fp:
        dist, binding = ff, "farfield"
    else:
        dist, binding = fp, "footprint"
    base = elevation_placement(dist, theta_deg)
    return PlacementPlan(
        base.distance_m, base.antenna_height_m, base.standoff_m, base.theta_deg, binding, ff, fp
    )


def horn_aperture_estimate(hpbw_deg: float, f_hz: float) -> float:
    """Rough horn aperture from its beamwidth, ``HPBW ~ 70 lambda / D`` (degrees)."""
    _check_hpbw(hpbw_deg)
    return 70.0 * wavelength(f_hz) / hpbw_deg

"""Heatmap grids, cross-band RCS differences, range responses and range-azimuth images."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .pipeline import SigmaSpectrum
from .sweep import DEFAULT_PAD, DEFAULT_WINDOW, SPEED_OF_LIGHT, FrequencySweep, WindowSpec, to_time_domain

INTERP_METHODS = ("linear", "nearest")
_ANGLE_TOL = 1e-9


# --- RCS grids -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RcsGrid:
    """RCS in dBsm on a (theta x phi) lattice for one band.

    ``mask`` marks measured cells, ``mirrored`` cells copied by azimuth
    symmetry. Cells that are neither hold NaN.
    """

    band_label: str
    theta_values: tuple
    phi_values: tuple
    rcs_dbsm: np.ndarray
    mask: np.ndarray
    mirrored: np.ndarray | None = None

    def __post_init__(self):
        shape = (len(self.theta_values), len(self.phi_values))
        vals = np.array(self.rcs_dbsm, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        mir = np.zeros(shape, dtype=bool) if self.mirrored is None else np.array(self.mirrored, dtype=bool)
        for name, a in (("rcs_dbsm", vals), ("mask", mask), ("mirrored", mir)):
            if a.shape != shape:
                raise ValidationError(f"{name} shape {a.shape} does not match axes {shape}")
        if np.any(mask & mir):
            raise ValidationError("a cell cannot be both measured and mirrored")
        for a in (vals, mask, mir):
            a.setflags(write=False)
        object.__setattr__(self, "theta_values", tuple(float(t) for t in self.theta_values))
        object.__setattr__(self, "phi_values", tuple(float(p) for p in self.phi_values))
        object.__setattr__(self, "rcs_dbsm", vals)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "mirrored", mir)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rcs_dbsm.shape

    @property
    def rcs_m2(self) -> np.ndarray:
        return 10.0 ** (self.rcs_dbsm / 10.0)

    def cell(self, theta: float, phi: float) -> tuple[int, int]:
        return self.theta_values.index(float(theta)), self.phi_values.index(float(phi))

    def to_csv(self) -> str:
        """Theta rows by phi columns, dBsm; blank cells are ``nan``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta_deg\\phi_deg"] + [_num(p) for p in self.phi_values])
        for t, row in zip(self.theta_values, self.rcs_dbsm):
            w.writerow([_num(t)] + [_num(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "band": self.band_label,
            "theta_deg": list(self.theta_values),
            "phi_deg": list(self.phi_values),
            "rcs_dbsm": [[None if np.isnan(v) else float(v) for v in row] for row in self.rcs_dbsm],
            "measured": self.mask.tolist(),
            "mirrored": self.mirrored.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "RcsGrid":
        vals = np.array([[np.nan if v is None else v for v in row] for row in d["rcs_dbsm"]], dtype=float)
        return cls(d["band"], tuple(d["theta_deg"]), tuple(d["phi_deg"]), vals, np.array(d["measured"]), np.array(d["mirrored"]))


def _num(x: float) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def grid_from_csv(text: str, band_label: str = "", mask: np.ndarray | None = None) -> RcsGrid:
    """Inverse of ``RcsGrid.to_csv``; without ``mask``, finite cells count as measured."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or len(rows[0]) < 2:
        raise ValidationError("empty grid CSV")
    try:
        phi = tuple(float(p) for p in rows[0][1:])
        theta = tuple(float(r[0]) for r in rows[1:])
        vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"malformed grid CSV: {exc}") from exc
    if vals.shape != (len(theta), len(phi)):
        raise ValidationError("ragged grid CSV")
    m = np.isfinite(vals) if mask is None else mask
    return RcsGrid(band_label, theta, phi, vals, m)


def build_rcs_grid(records, mirror: bool = False, band_label: str | None = None) -> RcsGrid:
    """Place one record per (theta, phi) on a grid.

    With ``mirror``, each measured phi in (0, 180) also fills ``360 - phi``
    where that cell was not measured itself; such cells are flagged in
    ``mirrored`` and excluded from ``mask``.
    """
    records = list(records)
    if not records:
        raise ValidationError("no extraction records")
    bands = {r.band for r in records}
    if len(bands) > 1:
        raise ValidationError(f"records span several bands: {sorted(bands)}")
    values: dict[tuple[float, float], float] = {}
    for r in records:
        key = (float(r.theta_deg), float(r.phi_deg))
        if key in values:
            raise ValidationError(f"duplicate record for theta={key[0]:g}, phi={key[1]:g}")
        values[key] = float(10.0 * math.log10(r.rcs_m2)) if r.rcs_m2 > 0 else -math.inf
    thetas = sorted({k[0] for k in values})
    phis = {k[1] for k in values}
    if mirror:
        phis |= {_wrap360(360.0 - p) for p in phis if 0.0 < p < 180.0}
    phis = sorted(phis)
    shape = (len(thetas), len(phis))
    vals = np.full(shape, np.nan)
    mask = np.zeros(shape, dtype=bool)
    mir = np.zeros(shape, dtype=bool)
    ti = {t: i for i, t in enumerate(thetas)}
    pj = {p: j for j, p in enumerate(phis)}
    for (t, p), v in values.items():
        vals[ti[t], pj[p]] = v
        mask[ti[t], pj[p]] = True
    if mirror:
        for (t, p), v in values.items():
            if 0.0 < p < 180.0:
                j = pj[_wrap360(360.0 - p)]
                if not mask[ti[t], j]:
                    vals[ti[t], j] = v
                    mir[ti[t], j] = True
    return RcsGrid(band_label or records[0].band, tuple(thetas), tuple(phis), vals, mask, mir)


def _wrap360(a: float) -> float:
    a = a % 360.0
    return 0.0 if abs(a - 360.0) < _ANGLE_TOL else a


# --- cross-band statistics --------------------------------------------------------


@dataclass(frozen=True)
class DeltaRcsSample:
    theta_deg: float
    phi_deg: float
    delta_db: float

    def __post_init__(self):
        if not math.isfinite(self.delta_db):
            raise ValidationError(f"non-finite delta at theta={self.theta_deg:g}, phi={self.phi_deg:g}")


def delta_rcs(grid1: RcsGrid, grid2: RcsGrid, include_mirrored: bool = False) -> list[DeltaRcsSample]:
    """``10*log10(RCS_2 / RCS_1)`` per shared cell, in (theta, phi) order.

    Computed as a difference of dBsm values so swapping the bands negates
    every sample exactly. A cell counts when it was measured in both grids,
    or, with ``include_mirrored``, mirrored in both.
    """
    out: list[DeltaRcsSample] = []
    for i, t in enumerate(grid1.theta_values):
        if t not in grid2.theta_values:
            continue
        i2 = grid2.theta_values.index(t)
        for j, p in enumerate(grid1.phi_values):
            if p not in grid2.phi_values:
                continue
            j2 = grid2.phi_values.index(p)
            both_measured = grid1.mask[i, j] and grid2.mask[i2, j2]
            both_mirrored = grid1.mirrored[i, j] and grid2.mirrored[i2, j2]
            if both_measured or (include_mirrored and both_mirrored):
                out.append(DeltaRcsSample(t, p, float(grid2.rcs_dbsm[i2, j2] - grid1.rcs_dbsm[i, j])))
    if not out:
        raise ValidationError(f"grids {grid1.band_label!r} and {grid2.band_label!r} share no measured cells")
    return out


def delta_to_csv(samples: list[DeltaRcsSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta_deg", "phi_deg", "delta_db"])
    for s in samples:
        w.writerow([repr(s.theta_deg), repr(s.phi_deg), repr(s.delta_db)])
    return buf.getvalue()


@dataclass(frozen=True)
class GaussianFit:
    """Maximum-likelihood normal fit: sample mean and population std (divide by n)."""

    mu_db: float
    sigma_db: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValidationError("a fit needs at least 2 samples")
        if self.sigma_db < 0:
            raise ValidationError("sigma_db must be >= 0")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.sigma_db == 0:
            return np.where(x == self.mu_db, np.inf, 0.0)
        z = (x - self.mu_db) / self.sigma_db
        return np.exp(-0.5 * z * z) / (self.sigma_db * math.sqrt(2 * math.pi))


def fit_gaussian(samples) -> GaussianFit:
    x = np.array([s.delta_db if isinstance(s, DeltaRcsSample) else s for s in samples], dtype=float)
    if x.size < 2:
        raise ValidationError(f"fit_gaussian needs n >= 2, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("fit_gaussian got non-finite samples")
    mu = float(np.mean(x))
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    if np.all(x == x[0]):
        mu, sigma = float(x[0]), 0.0
    return GaussianFit(mu, sigma, int(x.size))


def fit_table(samples: list[DeltaRcsSample]) -> list[dict]:
    """One row per elevation plus ``Overall``: ``{"theta", "mu_db", "sigma_db", "n"}``.

    Elevations with a single sample get ``None`` statistics.
    """
    rows = []
    for t in sorted({s.theta_deg for s in samples}):
        sub = [s.delta_db for s in samples if s.theta_deg == t]
        rows.append(_row(f"{t:g}", sub))
    rows.append(_row("Overall", [s.delta_db for s in samples]))
    return rows


def _row(label: str, vals: list[float]) -> dict:
    if len(vals) < 2:
        return {"theta": label, "mu_db": None, "sigma_db": None, "n": len(vals)}
    f = fit_gaussian(vals)
    return {"theta": label, "mu_db": f.mu_db, "sigma_db": f.sigma_db, "n": f.n_samples}


def fit_table_text(rows: list[dict]) -> str:
    lines = [f"{'theta':>8}  {'mu (dB)':>9}  {'sigma (dB)':>10}  {'n':>5}"]
    for r in rows:
        mu = "-" if r["mu_db"] is None else f"{r['mu_db']:.2f}"
        sd = "-" if r["sigma_db"] is None else f"{r['sigma_db']:.2f}"
        lines.append(f"{r['theta']:>8}  {mu:>9}  {sd:>10}  {r['n']:>5}")
    return "\n".join(lines) + "\n"


def histogram_bins(x) -> np.ndarray:
    """Freedman-Diaconis bin edges, falling back to sqrt(n) bins for degenerate spreads."""
    x = np.asarray(x, dtype=float)
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return np.array([lo - 0.5, lo + 0.5])
    q75, q25 = np.percentile(x, [75, 25])
    width = 2.0 * (q75 - q25) / x.size ** (1.0 / 3.0)
    if width <= 0:
        n = max(1, int(math.ceil(math.sqrt(x.size))))
        return np.linspace(lo, hi, n + 1)
    n = max(1, int(math.ceil((hi - lo) / width)))
    return np.linspace(lo, hi, n + 1)


# --- range responses ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RangeProfile:
    """``|sqrt(sigma)|`` versus range relative to the target centre (metres)."""

    range_m: np.ndarray
    magnitude: np.ndarray
    window: WindowSpec = DEFAULT_WINDOW
    pad_factor: int = DEFAULT_PAD

    @property
    def bin_m(self) -> float:
        return float(self.range_m[1] - self.range_m[0])


def range_response(
    spec: SigmaSpectrum,
    d_target_m: float,
    window: WindowSpec = DEFAULT_WINDOW,
    pad_factor: int = DEFAULT_PAD,
) -> RangeProfile:
    """Delay transform of the calibrated spectrum, centred on the target.

    The spectrum is first shifted so the target centre falls on zero delay.
    The range axis is then exactly ``k * bin`` for ``|k| < M/2``, which is
    symmetric about zero whatever the target distance.
    """
    grid = spec.grid
    n = grid.n_samples
    shift = 2.0 * (d_target_m - spec.reference_range_m) / SPEED_OF_LIGHT
    idx = np.arange(n)
    centred = spec.sqrt_sigma * np.exp(2j * np.pi * idx * grid.step * shift)
    prof = to_time_domain(FrequencySweep(grid, centred, "sigma"), window, pad_factor)
    m = prof.samples.size
    half = m // 2 - 1
    k = np.arange(-half, half + 1)
    mag = np.abs(prof.samples[k % m])
    dr = SPEED_OF_LIGHT * prof.dt / 2.0
    return RangeProfile(k * dr, mag, window, pad_factor)


def profile_peaks(profile: RangeProfile, k: int = 2) -> list[float]:
    """Ranges of the ``k`` largest local maxima of a range profile."""
    y = profile.magnitude
    inner = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    order = inner[np.argsort(-y[inner], kind="stable")]
    return [float(profile.range_m[i]) for i in order[:k]]


# --- range-azimuth images -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RangeAzimuthImage:
    range_axis_m: np.ndarray
    phi_axis_deg: np.ndarray
    magnitude: np.ndarray  # [range, phi]
    measured: np.ndarray  # per phi column
    interpolation_note: str
    wrapped: bool = False
    theta_deg: float | None = None

    def __post_init__(self):
        if self.magnitude.shape != (self.range_axis_m.size, self.phi_axis_deg.size):
            raise ValidationError("image shape does not match its axes")
        if self.measured.shape != self.phi_axis_deg.shape:
            raise ValidationError("measured flags do not match the phi axis")

    def crop(self, max_range_m: float) -> "RangeAzimuthImage":
        """Rows with ``|range| <= max_range_m``; columns and flags unchanged."""
        sel = np.abs(self.range_axis_m) <= max_range_m
        return RangeAzimuthImage(
            self.range_axis_m[sel], self.phi_axis_deg, self.magnitude[sel], self.measured,
            self.interpolation_note, self.wrapped, self.theta_deg,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["range_m\\phi_deg"] + [repr(float(p)) for p in self.phi_axis_deg])
        for r, row in zip(self.range_axis_m, self.magnitude):
            w.writerow([repr(float(r))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def build_range_azimuth_image(
    profiles,
    interp: str = "linear",
    phi_step_deg: float = 1.0,
    wrap: bool | None = None,
    measured_phis=None,
    theta_deg: float | None = None,
) -> RangeAzimuthImage:
    """Assemble per-azimuth range profiles into an image.

    ``profiles`` maps phi (deg) to a RangeProfile. The phi axis is the
    union of the inputs and a ``phi_step_deg`` lattice between them;
    input columns are inserted verbatim. ``nearest`` resolves exact
    midpoints to the lower angle. ``wrap`` (default: automatic when the
    inputs span the full circle) interpolates across 360 -> 0.
    ``measured_phis`` restricts which input columns are flagged measured,
    e.g. to keep mirrored profiles out of peak picking.
    """
    if interp not in INTERP_METHODS:
        raise ValidationError(f"interp must be one of {INTERP_METHODS}, got {interp!r}")
    if not phi_step_deg > 0:
        raise ValidationError("phi_step_deg must be positive")
    items = sorted((float(p), prof) for p, prof in dict(profiles).items())
    if len(items) < 2:
        raise ValidationError("need at least 2 azimuth profiles")
    ref = items[0][1].range_m
    for p, prof in items[1:]:
        if prof.range_m.shape != ref.shape or not np.allclose(prof.range_m, ref, rtol=0, atol=1e-12):
            raise ValidationError(f"range axis at phi={p:g} differs from phi={items[0][0]:g}")
    phis = np.array([p for p, _ in items])
    cols = np.stack([prof.magnitude for _, prof in items], axis=1)
    steps = np.diff(phis)
    if wrap is None:
        wrap = bool(phis[-1] - phis[0] + np.min(steps) >= 360.0 - _ANGLE_TOL)
    hi = phis[0] + 360.0 if wrap else phis[-1]
    lattice = phis[0] + phi_step_deg * np.arange(int(math.floor((hi - phis[0]) / phi_step_deg + _ANGLE_TOL)) + 1)
    lattice = lattice[lattice < hi - _ANGLE_TOL] if wrap else lattice
    axis = np.unique(np.concatenate([phis, lattice]))
    keep = [axis[0]]
    for a in axis[1:]:
        if a - keep[-1] > _ANGLE_TOL:
            keep.append(a)
    axis = np.array(keep)

    xp = np.concatenate([phis, [phis[0] + 360.0]]) if wrap else phis
    cp = np.concatenate([cols, cols[:, :1]], axis=1) if wrap else cols
    out = np.empty((ref.size, axis.size))
    is_input = np.zeros(axis.size, dtype=bool)
    for j, a in enumerate(axis):
        hit = np.flatnonzero(np.abs(phis - a) <= _ANGLE_TOL)
        if hit.size:
            out[:, j] = cols[:, hit[0]]
            is_input[j] = True
            continue
        u = int(np.searchsorted(xp, a))
        lo, up = u - 1, u
        if interp == "nearest":
            src = lo if (a - xp[lo]) <= (xp[up] - a) else up
            out[:, j] = cp[:, src]
        else:
            t = (a - xp[lo]) / (xp[up] - xp[lo])
            out[:, j] = (1.0 - t) * cp[:, lo] + t * cp[:, up]
    if measured_phis is None:
        measured = is_input
    else:
        mset = [float(p) for p in measured_phis]
        measured = np.array([any(abs(a - m) <= _ANGLE_TOL for m in mset) for a in axis]) & is_input
    note = (
        f"{interp} interpolation of magnitude over phi, step {phi_step_deg:g} deg"
        + (", wrapped across 360 deg" if wrap else "")
        + f"; {int(is_input.sum())} input columns inserted verbatim"
    )
    return RangeAzimuthImage(ref.copy(), axis, out, measured, note, wrap, theta_deg)


@dataclass(frozen=True)
class Contributor:
    range_m: float
    phi_deg: float
    magnitude: float

    def to_json(self) -> dict:
        return {"range_m": self.range_m, "phi_deg": self.phi_deg, "magnitude": self.magnitude}


@dataclass(frozen=True)
class ContributorList:
    points: tuple
    requested: int
    note: str | None = None

    def __iter__(self):
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def to_json(self) -> dict:
        return {"requested": self.requested, "points": [p.to_json() for p in self.points], "note": self.note}


def top_contributors(image: RangeAzimuthImage, k: int) -> ContributorList:
    """The ``k`` strongest 2-D local maxima among measured columns.

    A cell is a local maximum when it is >= every neighbour in range and
    in adjacent measured azimuth columns (wrapping when the image wraps),
    and is non-zero.
    Order: magnitude descending, then smaller ``|range|``, then smaller phi.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    cols = np.flatnonzero(image.measured)
    if cols.size == 0:
        raise ValidationError("image has no measured columns")
    sub = image.magnitude[:, cols]
    nr, nc = sub.shape
    pad = np.full((nr + 2, nc + 2), -np.inf)
    pad[1:-1, 1:-1] = sub
    if image.wrapped and nc > 2:
        pad[1:-1, 0] = sub[:, -1]
        pad[1:-1, -1] = sub[:, 0]
    is_max = sub > 0  # an all-zero plateau is not a scatterer
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_max &= sub >= pad[1 + di : 1 + di + nr, 1 + dj : 1 + dj + nc]
    ri, ci = np.nonzero(is_max)
    r = image.range_axis_m[ri]
    p = image.phi_axis_deg[cols[ci]]
    m = sub[ri, ci]
    order = np.lexsort((p, np.abs(r), -m))
    pts = tuple(Contributor(float(r[o]), float(p[o]), float(m[o])) for o in order[:k])
    note = None
    if len(order) < k:
        note = f"requested {k} contributors but the image has only {len(order)} local maxima"
    return ContributorList(pts, k, note)

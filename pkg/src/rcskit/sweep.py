"""Sampled frequency sweeps and the delay-domain transforms built on them.

Conventions used throughout the package:

* A sweep is ``S11(f_i)`` on a uniform grid ``f_i = f_start + i*df``.
* A reflector at two-way delay ``tau`` contributes ``exp(-j*2*pi*f*tau)``.
* The delay profile is the inverse DFT of the (windowed, zero-padded)
  sweep, scaled so that an in-band unit tone produces a unit peak.
* Range is one-way: ``r = c*t/2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import windows as _sigwin

from .errors import SweepValidationError

SPEED_OF_LIGHT = 299_792_458.0

SCENARIOS = ("target", "background", "sphere", "sphere_background")

MAX_PAD_FACTOR = 16


@dataclass(frozen=True)
class FrequencyGrid:
    f_start: float
    f_stop: float
    n_samples: int

    def __post_init__(self):
        if not (np.isfinite(self.f_start) and np.isfinite(self.f_stop)):
            raise SweepValidationError("grid edges must be finite")
        if not self.f_stop > self.f_start > 0:
            raise SweepValidationError(
                f"need f_stop > f_start > 0, got {self.f_start!r}..{self.f_stop!r}"
            )
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise SweepValidationError(f"n_samples must be an integer >= 2, got {self.n_samples!r}")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "f_start", float(self.f_start))
        object.__setattr__(self, "f_stop", float(self.f_stop))

    @property
    def bandwidth(self) -> float:
        return self.f_stop - self.f_start

    @property
    def step(self) -> float:
        return self.bandwidth / (self.n_samples - 1)

    @property
    def center(self) -> float:
        return 0.5 * (self.f_start + self.f_stop)

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_start + np.arange(self.n_samples) * self.step

    @property
    def unambiguous_delay(self) -> float:
        """Delay span before the DFT wraps around: ``1/df``."""
        return 1.0 / self.step

    @property
    def range_resolution(self) -> float:
        """One resolution cell in range, ``c/(2B)``."""
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    def close_to(self, other: "FrequencyGrid", rtol: float = 1e-9) -> bool:
        return (
            self.n_samples == other.n_samples
            and abs(self.f_start - other.f_start) <= rtol * self.f_start
            and abs(self.f_stop - other.f_stop) <= rtol * self.f_stop
        )


@dataclass(frozen=True, eq=False)
class FrequencySweep:
    grid: FrequencyGrid
    samples: np.ndarray
    label: str = "target"

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.ndim != 1 or s.size != self.grid.n_samples:
            raise SweepValidationError(
                f"sweep has {s.size} samples but grid declares {self.grid.n_samples}"
            )
        bad = np.flatnonzero(~np.isfinite(s))
        if bad.size:
            raise SweepValidationError(
                f"non-finite samples at indices {bad[:10].tolist()}"
                + (" ..." if bad.size > 10 else "")
            )
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.grid.n_samples

    def with_samples(self, samples, label: str | None = None) -> "FrequencySweep":
        return FrequencySweep(self.grid, samples, self.label if label is None else label)

    def equals(self, other: "FrequencySweep") -> bool:
        """Bit-exact equality of grid and samples."""
        return self.grid == other.grid and np.array_equal(self.samples, other.samples)


def validate_sweep(grid: FrequencyGrid, samples, label: str = "target") -> FrequencySweep:
    """Shared validator for file-ingested and instrument-acquired data."""
    return FrequencySweep(grid, samples, label)


@dataclass(frozen=True)
class WindowSpec:
    """Taper applied across the frequency samples before a delay transform."""

    kind: str = "tukey"
    alpha: float = 0.25

    def __post_init__(self):
        if self.kind not in ("rectangular", "hann", "tukey"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.kind == "tukey" and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"tukey alpha must lie in [0, 1], got {self.alpha}")

    @classmethod
    def rectangular(cls) -> "WindowSpec":
        return cls("rectangular", 0.0)

    @classmethod
    def hann(cls) -> "WindowSpec":
        return cls("hann", 1.0)

    @classmethod
    def tukey(cls, alpha: float = 0.25) -> "WindowSpec":
        return cls("tukey", alpha)

    def samples(self, n: int) -> np.ndarray:
        return _window(self.kind, float(self.alpha), int(n)).copy()

    def coherent_gain(self, n: int) -> float:
        return float(np.mean(_window(self.kind, float(self.alpha), int(n))))

    def describe(self) -> str:
        return self.kind if self.kind != "tukey" else f"tukey(alpha={self.alpha:g})"


@lru_cache(maxsize=64)
def _window(kind: str, alpha: float, n: int) -> np.ndarray:
    if kind == "rectangular":
        w = np.ones(n)
    elif kind == "hann":
        w = _sigwin.hann(n, sym=True)
    else:
        w = _sigwin.tukey(n, alpha, sym=True)
    w.setflags(write=False)
    return w


DEFAULT_WINDOW = WindowSpec.tukey(0.25)
DEFAULT_PAD = 4


@dataclass(frozen=True, eq=False)
class TimeProfile:
    """Delay-domain view of a sweep.

    ``samples[n]`` sits at delay ``t0 + n*dt``. The source grid, window and
    pad factor are kept so the transform can be inverted.
    """

    dt: float
    t0: float
    samples: np.ndarray
    grid: FrequencyGrid
    window: WindowSpec = DEFAULT_WINDOW
    pad_factor: int = 1
    label: str = "target"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if self.dt <= 0:
            raise SweepValidationError("dt must be positive")
        if s.size != self.grid.n_samples * self.pad_factor:
            raise SweepValidationError(
                f"profile length {s.size} inconsistent with grid "
                f"{self.grid.n_samples} x pad {self.pad_factor}"
            )
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) * self.dt

    @property
    def ranges(self) -> np.ndarray:
        return SPEED_OF_LIGHT * self.times / 2.0

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.samples)


def to_time_domain(
    sweep: FrequencySweep,
    window: WindowSpec = DEFAULT_WINDOW,
    zero_pad_factor: int = DEFAULT_PAD,
) -> TimeProfile:
    """Inverse DFT of the windowed sweep, zero padded by ``zero_pad_factor``.

    Amplitudes are divided by ``N * coherent_gain`` so a unit in-band tone
    gives a unit peak regardless of window or padding.
    """
    if int(zero_pad_factor) != zero_pad_factor or not 1 <= zero_pad_factor <= MAX_PAD_FACTOR:
        raise ValueError(f"zero_pad_factor must be an integer in [1, {MAX_PAD_FACTOR}]")
    zero_pad_factor = int(zero_pad_factor)
    x = np.asarray(sweep.samples)
    if not np.all(np.isfinite(x)):
        raise SweepValidationError("sweep contains non-finite samples")
    n = sweep.grid.n_samples
    m = n * zero_pad_factor
    w = window.samples(n)
    cg = window.coherent_gain(n)
    buf = np.zeros(m, dtype=complex)
    buf[:n] = w * x
    prof = np.fft.ifft(buf) * (m / (n * cg))
    dt = 1.0 / (m * sweep.grid.step)
    return TimeProfile(dt, 0.0, prof, sweep.grid, window, zero_pad_factor, sweep.label)


def to_frequency_domain(profile: TimeProfile, grid: FrequencyGrid | None = None) -> FrequencySweep:
    """Forward DFT back onto the sweep grid.

    Returns the *windowed* spectrum ``w_i * S11(f_i)``; divide by
    ``profile.window.samples(n)`` to undo the taper.
    """
    grid = profile.grid if grid is None else grid
    if profile.samples.size != grid.n_samples * profile.pad_factor:
        raise SweepValidationError(
            f"profile length {profile.samples.size} does not match grid of "
            f"{grid.n_samples} samples at pad {profile.pad_factor}"
        )
    n = grid.n_samples
    m = profile.samples.size
    cg = profile.window.coherent_gain(n)
    spec = np.fft.fft(profile.samples)[:n] * (n * cg / m)
    return FrequencySweep(grid, spec, profile.label)


def delay_to_range(t) -> np.ndarray | float:
    return SPEED_OF_LIGHT * np.asarray(t) / 2.0


def range_to_delay(r) -> np.ndarray | float:
    return 2.0 * np.asarray(r) / SPEED_OF_LIGHT


def tone(grid: FrequencyGrid, delay_s: float, amplitude: complex = 1.0) -> np.ndarray:
    """Samples of a point reflector at two-way delay ``delay_s``."""
    return amplitude * np.exp(-2j * np.pi * grid.frequencies * delay_s)


def linear_to_db_power(x):
    return 10.0 * np.log10(x)


def linear_to_db_amplitude(x):
    return 20.0 * np.log10(x)


def dbsm(sigma_m2):
    """dBsm of an RCS in square metres: ``10*log10(sigma / 1 m^2)``."""
    return 10.0 * np.log10(sigma_m2)

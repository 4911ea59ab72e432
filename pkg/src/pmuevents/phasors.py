"""Phasor domain types and complex-phasor arithmetic.

Angles are stored in degrees (PMU convention) and converted to radians only
inside trigonometric kernels, so values round-trip through files bit-exactly.
All types are immutable values after construction and safe to share between
threads.

The voltage base and power formula encode one stated assumption: phasors are
a single-phase equivalent of a balanced three-phase feeder, so real power is
``3 * v_mag * i_mag * cos(theta_v - theta_i)``. The factor is configurable
wherever it is used.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError

DEFAULT_RATE = 120.0          # micro-PMU reporting rate, frames/second
DEFAULT_RATED_POWER = 4.0e6   # watts; solar feeder plant rating
DEFAULT_PHASE_FACTOR = 3.0    # balanced three-phase, single-phase-equivalent


def wrap_angle_deg(angle):
    """Wrap angles (degrees) into (-180, 180].

    Values already inside the interval are returned unchanged (bit-exact);
    re-wrapping in-range floats would perturb them. Accepts scalars or
    arrays.
    """
    a = np.asarray(angle, dtype=float)
    wrapped = np.where((a > -180.0) & (a <= 180.0), a, 180.0 - (180.0 - a) % 360.0)
    if np.ndim(angle) == 0:
        return float(wrapped)
    return wrapped


def to_complex(mag, ang_deg) -> complex:
    """Polar (magnitude, angle in degrees) -> rectangular complex phasor.

    Raises DomainError for non-finite inputs or negative magnitude.
    """
    if not (math.isfinite(mag) and math.isfinite(ang_deg)):
        raise DomainError("phasor components must be finite")
    if mag < 0:
        raise DomainError("phasor magnitude must be >= 0")
    theta = math.radians(ang_deg)
    return complex(mag * math.cos(theta), mag * math.sin(theta))


def to_polar(z: complex) -> tuple[float, float]:
    """Rectangular complex phasor -> (magnitude, angle in degrees (-180, 180])."""
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError("phasor components must be finite")
    mag, theta = cmath.polar(z)
    return mag, wrap_angle_deg(math.degrees(theta))


@dataclass(frozen=True)
class PhasorSample:
    """One timestamped voltage/current phasor pair from one feeder.

    timestamp is integer microseconds since epoch; magnitudes are volts and
    amperes (>= 0); angles are degrees, normalized into (-180, 180] at
    construction.
    """

    timestamp: int
    v_mag: float
    v_ang: float
    i_mag: float
    i_ang: float

    def __post_init__(self):
        for name in ("v_mag", "v_ang", "i_mag", "i_ang"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite")
        if self.v_mag < 0 or self.i_mag < 0:
            raise DomainError("phasor magnitudes must be >= 0")
        object.__setattr__(self, "v_ang", wrap_angle_deg(self.v_ang))
        object.__setattr__(self, "i_ang", wrap_angle_deg(self.i_ang))

    def voltage(self) -> complex:
        return to_complex(self.v_mag, self.v_ang)

    def current(self) -> complex:
        return to_complex(self.i_mag, self.i_ang)


@dataclass
class PhasorStream:
    """Ordered micro-PMU sample sequence from one feeder.

    Treat instances as immutable after construction; numpy views of the
    channels are cached lazily and must not be written to.
    """

    feeder_id: str
    samples: tuple[PhasorSample, ...]
    nominal_rate: float = DEFAULT_RATE
    rated_power: float = DEFAULT_RATED_POWER

    def __post_init__(self):
        self.samples = tuple(self.samples)
        if self.nominal_rate <= 0:
            raise DomainError("nominal_rate must be > 0")
        if self.rated_power <= 0:
            raise DomainError("rated_power must be > 0")
        ts = [s.timestamp for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DomainError("timestamps must strictly increase")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[PhasorSample]:
        return iter(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]

    @property
    def frame_us(self) -> float:
        """Nominal frame spacing in microseconds."""
        return 1e6 / self.nominal_rate

    @cached_property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.samples], dtype=np.int64)

    @cached_property
    def v_mag(self) -> np.ndarray:
        return np.array([s.v_mag for s in self.samples])

    @cached_property
    def v_ang(self) -> np.ndarray:
        return np.array([s.v_ang for s in self.samples])

    @cached_property
    def i_mag(self) -> np.ndarray:
        return np.array([s.i_mag for s in self.samples])

    @cached_property
    def i_ang(self) -> np.ndarray:
        return np.array([s.i_ang for s in self.samples])

    @cached_property
    def angle_diff(self) -> np.ndarray:
        """theta_v - theta_i per sample, wrapped into (-180, 180]."""
        return wrap_angle_deg(self.v_ang - self.i_ang)

    def slice_us(self, start_us: int, end_us: int) -> tuple[PhasorSample, ...]:
        """Samples with start_us <= timestamp < end_us."""
        lo = int(np.searchsorted(self.timestamps, start_us, side="left"))
        hi = int(np.searchsorted(self.timestamps, end_us, side="left"))
        return self.samples[lo:hi]


def phase_angle_difference(sample: PhasorSample) -> float:
    """theta_v - theta_i in degrees, wrapped into (-180, 180]."""
    return wrap_angle_deg(sample.v_ang - sample.i_ang)


def power_factor(sample: PhasorSample) -> float:
    """cos(theta_v - theta_i); shares the angle code path exactly."""
    return math.cos(math.radians(phase_angle_difference(sample)))


def production_level(
    sample: PhasorSample,
    rated_power: float = DEFAULT_RATED_POWER,
    phase_factor: float = DEFAULT_PHASE_FACTOR,
) -> float:
    """Instantaneous real power as a percentage of plant rating, >= 0.

    P = phase_factor * v_mag * i_mag * cos(theta_v - theta_i); negative
    (absorbing) readings clamp to 0 %.
    """
    if rated_power <= 0:
        raise DomainError("rated_power must be > 0")
    p = phase_factor * sample.v_mag * sample.i_mag * power_factor(sample)
    return max(0.0, 100.0 * p / rated_power)


def production_level_series(
    samples: Sequence[PhasorSample],
    rated_power: float = DEFAULT_RATED_POWER,
    phase_factor: float = DEFAULT_PHASE_FACTOR,
) -> np.ndarray:
    """Vectorized production_level over a sample sequence."""
    if rated_power <= 0:
        raise DomainError("rated_power must be > 0")
    v = np.array([s.v_mag for s in samples])
    i = np.array([s.i_mag for s in samples])
    ang = wrap_angle_deg(np.array([s.v_ang - s.i_ang for s in samples]))
    p = phase_factor * v * i * np.cos(np.radians(ang))
    return np.maximum(0.0, 100.0 * p / rated_power)


def mean_phasor(samples: Sequence[PhasorSample], channel: str) -> complex:
    """Complex mean of the voltage or current phasors over samples."""
    if not samples:
        raise DomainError("mean_phasor needs at least one sample")
    if channel == "v":
        zs = [s.voltage() for s in samples]
    elif channel == "i":
        zs = [s.current() for s in samples]
    else:
        raise DomainError(f"unknown channel {channel!r}")
    return complex(np.mean(zs))

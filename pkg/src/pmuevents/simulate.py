"""Ground-truth generator: labeled synthetic streams for two feeders.

Models the feeder-head aggregate of a solar plant (not individual
inverters): production follows an irradiance profile at near-unity power
factor, current magnitude tracks production, and a synchronized auxiliary
feeder carries a mixed net load. Two event kinds can be injected:

* local_step — a short current step/transient on the solar feeder only;
  the voltage deviation is derived through a configurable positive source
  impedance, so Real{dV/dI} > 0 by construction;
* grid_voltage_step — a voltage step on BOTH feeders; the solar current
  follows the five-stage control response (hold, prompt counter-step, MPPT
  correction, ramp-limit dip, moderate ramp back to the constant-power
  setpoint), while the auxiliary feeder responds as a constant-impedance
  load with a persistent power-factor shift.

Everything is deterministic given (config, seed): one RNG, fixed draw
order. Stage durations, ramp fractions and noise floors are declared
engineering defaults, configurable per event.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .io import serialize_stream
from .locate import Origin
from .phasors import (
    DEFAULT_RATE,
    DEFAULT_RATED_POWER,
    PhasorSample,
    PhasorStream,
    wrap_angle_deg,
)

DEFAULT_NOMINAL_VOLTAGE = 7200.0   # volts, line-to-neutral equivalent
MAX_GRID_STEP_FRACTION = 0.2       # |dV| beyond this is outside the modeled regime

LOCAL_STEP = "local_step"
GRID_VOLTAGE_STEP = "grid_voltage_step"

#: five-stage |I| templates as (level fractions of the constant-power offset,
#: stage durations in seconds); levels are anchored at (I_pre, ..., I_final)
_STAGE_DURATIONS_UP = (0.25, 0.4, 0.6, 0.4, 1.2)
_STAGE_DURATIONS_DOWN = (0.25, 0.4, 0.4, 0.6, 1.2)
_STAGE_LEVELS_UP = (0.0, 0.0, -2.0, 1.0, -0.6, 0.0)     # offsets from I_final, x |I_pre - I_final|
_STAGE_LEVELS_DOWN = (0.0, 0.0, 2.5, -0.5, -1.5, 0.0)


@dataclass(frozen=True)
class EventSpec:
    """One injectable event.

    magnitude is dI in amperes for local_step (sign allowed) or dV in
    signed volts for grid_voltage_step. hold_s=None makes a local step
    persist to the end of the stream; otherwise it reverts after hold_s.
    stage_durations_s defaults to the canonical template for the step
    direction when omitted.
    """

    kind: str
    onset_s: float
    magnitude: float
    hold_s: float | None = None
    di_angle_deg: float = 0.0
    ramp_s: float = 0.1
    stage_durations_s: tuple[float, ...] | None = None
    pf_transient_deg: float = 1.0
    aux_pf_shift_deg: float = 2.0

    def __post_init__(self):
        if self.kind not in (LOCAL_STEP, GRID_VOLTAGE_STEP):
            raise ConfigError(f"unknown event kind {self.kind!r}")
        if self.onset_s < 0:
            raise ConfigError("onset_s must be >= 0")
        if self.stage_durations_s is not None and any(d <= 0 for d in self.stage_durations_s):
            raise ConfigError("stage durations must be positive")

    @property
    def origin(self) -> Origin:
        return Origin.LOCALLY_INDUCED if self.kind == LOCAL_STEP else Origin.GRID_INDUCED

    def durations(self) -> tuple[float, ...]:
        if self.stage_durations_s is not None:
            return self.stage_durations_s
        return _STAGE_DURATIONS_UP if self.magnitude >= 0 else _STAGE_DURATIONS_DOWN

    def settle_s(self) -> float:
        """Seconds from onset until the event's response has settled."""
        if self.kind == GRID_VOLTAGE_STEP:
            return float(sum(self.durations()))
        if self.hold_s is None:
            return self.ramp_s
        return self.hold_s + 2 * self.ramp_s


@dataclass(frozen=True)
class NoiseLevels:
    """Per-channel Gaussian measurement noise (1 sigma)."""

    v_mag: float = 1.0
    i_mag: float = 0.05
    v_ang: float = 0.01
    i_ang: float = 0.01


@dataclass(frozen=True)
class ScenarioConfig:
    """Deterministic scenario description; same (config, seed) -> same bits."""

    duration_s: float
    seed: int
    rated_power: float = DEFAULT_RATED_POWER
    nominal_voltage: float = DEFAULT_NOMINAL_VOLTAGE
    nominal_rate: float = DEFAULT_RATE
    #: (time_s, fraction of rating) breakpoints, linearly interpolated
    irradiance: tuple[tuple[float, float], ...] = ((0.0, 0.5),)
    cloud_noise: float = 0.0  # fractional smoothed noise on the irradiance
    noise: NoiseLevels = field(default_factory=NoiseLevels)
    events: tuple[EventSpec, ...] = ()
    solar_feeder_id: str = "solar"
    aux_feeder_id: str = "aux"
    aux_base_current: float = 150.0
    aux_pf_angle_deg: float = 18.2   # net load at PF ~0.95 lagging
    local_source_impedance: complex = 10 + 2j

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be > 0")
        if self.rated_power <= 0 or self.nominal_voltage <= 0 or self.nominal_rate <= 0:
            raise ConfigError("ratings and rates must be > 0")
        if self.local_source_impedance.real <= 0:
            raise ConfigError("local source impedance must have a positive real part")


@dataclass(frozen=True)
class TruthEvent:
    """Ground-truth label for one injected event."""

    start_us: int
    end_us: int
    origin: Origin
    kind: str
    stage_boundaries_us: tuple[int, int, int, int] | None


@dataclass(frozen=True)
class LabeledStream:
    solar: PhasorStream
    auxiliary: PhasorStream
    truth: tuple[TruthEvent, ...]


@dataclass
class FeederTraces:
    """Working arrays for one feeder before noise and packing."""

    ts_us: np.ndarray
    v_mag: np.ndarray
    v_ang: np.ndarray
    i_mag: np.ndarray
    i_ang: np.ndarray

    def copy(self) -> "FeederTraces":
        return FeederTraces(
            self.ts_us.copy(), self.v_mag.copy(), self.v_ang.copy(),
            self.i_mag.copy(), self.i_ang.copy(),
        )


@dataclass
class ScenarioTraces:
    """Both feeders' noise-free traces during construction."""

    solar: FeederTraces
    aux: FeederTraces
    nominal_voltage: float
    rate: float

    def copy(self) -> "ScenarioTraces":
        return ScenarioTraces(self.solar.copy(), self.aux.copy(), self.nominal_voltage, self.rate)


def _time_grid_us(duration_s: float, rate: float) -> np.ndarray:
    n = int(round(duration_s * rate))
    return np.rint(np.arange(n) * (1e6 / rate)).astype(np.int64)


def _baseline_traces(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioTraces:
    ts = _time_grid_us(config.duration_s, config.nominal_rate)
    n = len(ts)
    t_s = ts / 1e6
    bp = np.asarray(config.irradiance, dtype=float)
    frac = np.interp(t_s, bp[:, 0], bp[:, 1])
    # irradiance is physically smooth: round off breakpoint corners (~2 s)
    # so they do not read as step events downstream
    w = max(int(2 * config.nominal_rate), 1)
    if n > w:
        pad = np.concatenate([np.full(w, frac[0]), frac, np.full(w, frac[-1])])
        frac = np.convolve(pad, np.ones(w) / w, mode="same")[w:-w]
    if config.cloud_noise > 0:
        raw = rng.normal(0.0, config.cloud_noise, n)
        wn = max(int(config.nominal_rate), 1)  # ~1 s smoothing
        frac = frac * (1.0 + np.convolve(raw, np.ones(wn) / wn, mode="same"))
    frac = np.clip(frac, 0.0, 1.2)

    v0 = config.nominal_voltage
    solar = FeederTraces(
        ts_us=ts,
        v_mag=np.full(n, v0),
        v_ang=np.zeros(n),
        i_mag=frac * config.rated_power / (3.0 * v0),
        i_ang=np.zeros(n),
    )
    aux = FeederTraces(
        ts_us=ts,
        v_mag=np.full(n, v0),
        v_ang=np.zeros(n),
        i_mag=np.full(n, config.aux_base_current),
        i_ang=np.full(n, -config.aux_pf_angle_deg),
    )
    return ScenarioTraces(solar, aux, v0, config.nominal_rate)


def inject_local_event(
    traces: ScenarioTraces,
    spec: EventSpec,
    source_impedance: complex = 10 + 2j,
) -> ScenarioTraces:
    """Short current step/transient on the solar feeder only.

    The complex current deviation dI (magnitude at di_angle_deg relative to
    the pre-event current angle) ramps in over ramp_s; the voltage deviates
    by source_impedance * dI throughout, so the event's differential
    impedance is the source impedance itself. The auxiliary feeder is
    untouched.
    """
    if spec.kind != LOCAL_STEP:
        raise ConfigError("inject_local_event requires a local_step spec")
    if spec.magnitude == 0.0:
        return traces
    out = traces.copy()
    s = out.solar
    ts_s = s.ts_us / 1e6
    onset_idx = int(np.searchsorted(s.ts_us, int(round(spec.onset_s * 1e6))))
    if onset_idx >= len(s.ts_us):
        raise ConfigError("event onset beyond scenario duration")

    base_i_ang = s.i_ang[max(onset_idx - 1, 0)]
    d_i = spec.magnitude * np.exp(1j * math.radians(base_i_ang + spec.di_angle_deg))
    d_v = source_impedance * d_i

    if spec.hold_s is None:
        g = np.clip((ts_s - spec.onset_s) / max(spec.ramp_s, 1e-9), 0.0, 1.0)
    else:
        up = np.clip((ts_s - spec.onset_s) / max(spec.ramp_s, 1e-9), 0.0, 1.0)
        down = np.clip(
            (ts_s - (spec.onset_s + spec.ramp_s + spec.hold_s)) / max(spec.ramp_s, 1e-9),
            0.0,
            1.0,
        )
        g = up - down
    i_c = s.i_mag * np.exp(1j * np.radians(s.i_ang)) + g * d_i
    v_c = s.v_mag * np.exp(1j * np.radians(s.v_ang)) + g * d_v
    s.i_mag, s.i_ang = np.abs(i_c), wrap_angle_deg(np.degrees(np.angle(i_c)))
    s.v_mag, s.v_ang = np.abs(v_c), wrap_angle_deg(np.degrees(np.angle(v_c)))
    return out


def _stage_knots(spec: EventSpec, i_pre: float, i_final: float):
    durations = spec.durations()
    scale = abs(i_final - i_pre)
    levels_rel = _STAGE_LEVELS_UP if spec.magnitude >= 0 else _STAGE_LEVELS_DOWN
    levels = [i_pre, i_pre] + [i_final + f * scale for f in levels_rel[2:-1]] + [i_final]
    knot_times = np.concatenate([[0.0], np.cumsum(durations)]) + spec.onset_s
    return knot_times, np.asarray(levels, dtype=float)


def inject_grid_event(traces: ScenarioTraces, spec: EventSpec) -> ScenarioTraces:
    """Voltage step on both feeders with the staged solar current response.

    The solar current lands on the constant-power setpoint
    I_final = I_pre * V_pre / V_post (so Real{dV/dI} < 0 seen from the
    meter) after the five-stage template; the auxiliary feeder acts as a
    constant-impedance load (dI proportional to dV) and takes a persistent
    power-factor shift. A transient angle wobble on the solar current
    models the brief PF disturbance.
    """
    if spec.kind != GRID_VOLTAGE_STEP:
        raise ConfigError("inject_grid_event requires a grid_voltage_step spec")
    v0 = traces.nominal_voltage
    if abs(spec.magnitude) > MAX_GRID_STEP_FRACTION * v0:
        raise ConfigError(
            f"|dV| = {abs(spec.magnitude)} V exceeds {MAX_GRID_STEP_FRACTION:.0%} of nominal"
        )
    out = traces.copy()
    ts_s = out.solar.ts_us / 1e6
    onset_idx = int(np.searchsorted(out.solar.ts_us, int(round(spec.onset_s * 1e6))))
    if onset_idx >= len(ts_s):
        raise ConfigError("event onset beyond scenario duration")
    after = ts_s >= spec.onset_s

    dv = spec.magnitude
    i_pre = float(out.solar.i_mag[max(onset_idx - 1, 0)])
    v_pre = float(out.solar.v_mag[max(onset_idx - 1, 0)])
    out.solar.v_mag = out.solar.v_mag + dv * after
    out.aux.v_mag = out.aux.v_mag + dv * after

    # solar current: staged template between I_pre and the constant-power level
    v_post = v_pre + dv
    ratio = v_pre / v_post
    i_final = i_pre * ratio
    knot_t, knot_levels = _stage_knots(spec, i_pre, i_final)
    settle = knot_t[-1]
    in_stages = after & (ts_s < settle)
    drift = out.solar.i_mag - i_pre  # carry any baseline drift additively
    staged = np.interp(ts_s, knot_t, knot_levels, left=i_pre, right=i_final)
    new_i = np.where(in_stages, staged + drift, out.solar.i_mag)
    new_i = np.where(ts_s >= settle, out.solar.i_mag * ratio, new_i)
    out.solar.i_mag = np.maximum(new_i, 0.0)

    # transient PF wobble on solar during stages 2-4
    durations = spec.durations()
    t1 = spec.onset_s + durations[0]
    t4 = spec.onset_s + sum(durations[:4])
    wobble = np.clip((t4 - ts_s) / max(t4 - t1, 1e-9), 0.0, 1.0) * ((ts_s >= t1) & (ts_s < t4))
    out.solar.i_ang = out.solar.i_ang + spec.pf_transient_deg * wobble

    # auxiliary: constant-impedance load plus a persistent PF shift
    out.aux.i_mag = out.aux.i_mag * (1.0 + (dv / v0) * after)
    shift_ramp = np.clip((ts_s - spec.onset_s) / 0.5, 0.0, 1.0) * after
    out.aux.i_ang = out.aux.i_ang + spec.aux_pf_shift_deg * shift_ramp
    return out


def simulate(config: ScenarioConfig) -> LabeledStream:
    """Generate both feeders' streams plus the ground-truth event list."""
    intervals = []
    for spec in config.events:
        if spec.onset_s + spec.settle_s() > config.duration_s:
            raise ConfigError("event extends beyond scenario duration")
        intervals.append((spec.onset_s, spec.onset_s + spec.settle_s()))
    for (a0, a1), (b0, b1) in zip(sorted(intervals), sorted(intervals)[1:]):
        if b0 < a1:
            raise ConfigError("event intervals overlap")

    rng = np.random.default_rng(config.seed)
    traces = _baseline_traces(config, rng)
    truth = []
    for spec in sorted(config.events, key=lambda s: s.onset_s):
        if spec.kind == LOCAL_STEP:
            traces = inject_local_event(traces, spec, config.local_source_impedance)
            boundaries = None
        else:
            traces = inject_grid_event(traces, spec)
            knots = np.cumsum(spec.durations())[:4] + spec.onset_s
            boundaries = tuple(int(round(t * 1e6)) for t in knots)
        truth.append(
            TruthEvent(
                start_us=int(round(spec.onset_s * 1e6)),
                end_us=int(round((spec.onset_s + spec.settle_s()) * 1e6)),
                origin=spec.origin,
                kind=spec.kind,
                stage_boundaries_us=boundaries,
            )
        )

    streams = {}
    for name, tr, feeder_id in (
        ("solar", traces.solar, config.solar_feeder_id),
        ("aux", traces.aux, config.aux_feeder_id),
    ):
        n = len(tr.ts_us)
        v_mag = np.maximum(tr.v_mag + rng.normal(0, config.noise.v_mag, n), 0.0)
        i_mag = np.maximum(tr.i_mag + rng.normal(0, config.noise.i_mag, n), 0.0)
        v_ang = wrap_angle_deg(tr.v_ang + rng.normal(0, config.noise.v_ang, n))
        i_ang = wrap_angle_deg(tr.i_ang + rng.normal(0, config.noise.i_ang, n))
        samples = tuple(
            PhasorSample(int(tr.ts_us[k]), float(v_mag[k]), float(v_ang[k]),
                         float(i_mag[k]), float(i_ang[k]))
            for k in range(n)
        )
        streams[name] = PhasorStream(
            feeder_id, samples, nominal_rate=config.nominal_rate, rated_power=config.rated_power
        )

    return LabeledStream(streams["solar"], streams["aux"], tuple(truth))


# ---------------------------------------------------------------------------
# file interfaces


def truth_to_json(truth: Sequence[TruthEvent]) -> dict:
    return {
        "format": "pmuevents-truth",
        "version": 1,
        "events": [
            {
                "start_us": t.start_us,
                "end_us": t.end_us,
                "origin": t.origin.value,
                "kind": t.kind,
                "stage_boundaries_us": list(t.stage_boundaries_us) if t.stage_boundaries_us else None,
            }
            for t in truth
        ],
    }


def truth_from_json(payload: dict) -> tuple[TruthEvent, ...]:
    events = []
    for rec in payload["events"]:
        b = rec.get("stage_boundaries_us")
        events.append(
            TruthEvent(
                start_us=rec["start_us"],
                end_us=rec["end_us"],
                origin=Origin(rec["origin"]),
                kind=rec["kind"],
                stage_boundaries_us=tuple(b) if b else None,
            )
        )
    return tuple(events)


def write_labeled_stream(labeled: LabeledStream, out_dir) -> dict[str, Path]:
    """Write solar.csv, aux.csv and truth.json into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "solar": out / "solar.csv",
        "aux": out / "aux.csv",
        "truth": out / "truth.json",
    }
    serialize_stream(labeled.solar, paths["solar"])
    serialize_stream(labeled.auxiliary, paths["aux"])
    paths["truth"].write_text(json.dumps(truth_to_json(labeled.truth), sort_keys=True, indent=1))
    return paths


def scenario_from_dict(payload: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed JSON (the CLI config format)."""
    try:
        noise = NoiseLevels(**payload.get("noise", {}))
        events = tuple(
            EventSpec(
                kind=e["kind"],
                onset_s=e["onset_s"],
                magnitude=e["magnitude"],
                hold_s=e.get("hold_s"),
                di_angle_deg=e.get("di_angle_deg", 0.0),
                ramp_s=e.get("ramp_s", 0.1),
                stage_durations_s=tuple(e["stage_durations_s"]) if e.get("stage_durations_s") else None,
                pf_transient_deg=e.get("pf_transient_deg", 1.0),
                aux_pf_shift_deg=e.get("aux_pf_shift_deg", 2.0),
            )
            for e in payload.get("events", [])
        )
        zsrc = payload.get("local_source_impedance", [10.0, 2.0])
        return ScenarioConfig(
            duration_s=payload["duration_s"],
            seed=payload["seed"],
            rated_power=payload.get("rated_power", DEFAULT_RATED_POWER),
            nominal_voltage=payload.get("nominal_voltage", DEFAULT_NOMINAL_VOLTAGE),
            nominal_rate=payload.get("nominal_rate", DEFAULT_RATE),
            irradiance=tuple(tuple(p) for p in payload.get("irradiance", [[0.0, 0.5]])),
            cloud_noise=payload.get("cloud_noise", 0.0),
            noise=noise,
            events=events,
            solar_feeder_id=payload.get("solar_feeder_id", "solar"),
            aux_feeder_id=payload.get("aux_feeder_id", "aux"),
            aux_base_current=payload.get("aux_base_current", 150.0),
            aux_pf_angle_deg=payload.get("aux_pf_angle_deg", 18.2),
            local_source_impedance=complex(zsrc[0], zsrc[1]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad scenario config: {exc}") from exc

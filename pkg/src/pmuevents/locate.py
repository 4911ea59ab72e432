"""Source-region classification: locally-induced vs grid-induced events.

Two routes: the differential-impedance test (sign of Real{dV/dI} seen from
the feeder-head meter) and signature inspection against a synchronized
auxiliary feeder. Sign convention: current is positive flowing from the
feeder into the substation (generation positive); flipping it flips the
impedance verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import IndeterminateImpedanceError, InsufficientDataError
from .io import AlignedPair
from .phasors import mean_phasor

DEFAULT_CURRENT_FLOOR_A = 0.01   # below this |dI| the impedance is undefined
DEFAULT_DEAD_BAND_OHM = 0.1      # |Real{Z}| below this is indeterminate
DEFAULT_CORR_THRESHOLD = 0.8

METHOD_IMPEDANCE = "impedance"
METHOD_SIGNATURE = "signature"
METHOD_BOTH = "both"


class Origin(str, Enum):
    LOCALLY_INDUCED = "locally_induced"
    GRID_INDUCED = "grid_induced"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class DifferentialPhasor:
    """Pre/post steady-state phasor change and the equivalent impedance."""

    delta_v: complex
    delta_i: complex
    z: complex
    v_pre: complex
    v_post: complex
    i_pre: complex
    i_post: complex


@dataclass(frozen=True)
class OriginLabel:
    """Verdict on an event's source region."""

    origin: Origin
    real_z: float | None
    method: str
    agreement: bool | None = None


def differential_phasor(event, current_floor: float = DEFAULT_CURRENT_FLOOR_A) -> DifferentialPhasor:
    """Differential phasors dV, dI and equivalent impedance Z = dV/dI.

    Pre/post phasors are complex means over the event's steady flanking
    windows. Raises IndeterminateImpedanceError when |dI| is below
    current_floor, and InsufficientDataError when the event has no steady
    flanks.
    """
    if event.pre is None or event.post is None or not event.pre or not event.post:
        raise InsufficientDataError("event has no steady pre/post windows")
    v_pre = mean_phasor(event.pre, "v")
    v_post = mean_phasor(event.post, "v")
    i_pre = mean_phasor(event.pre, "i")
    i_post = mean_phasor(event.post, "i")
    delta_v = v_post - v_pre
    delta_i = i_post - i_pre
    if abs(delta_i) < current_floor:
        raise IndeterminateImpedanceError(
            f"|dI| = {abs(delta_i):.3g} A below floor {current_floor} A"
        )
    return DifferentialPhasor(
        delta_v=delta_v,
        delta_i=delta_i,
        z=delta_v / delta_i,
        v_pre=v_pre,
        v_post=v_post,
        i_pre=i_pre,
        i_post=i_post,
    )


def classify_origin(dp: DifferentialPhasor, dead_band: float = DEFAULT_DEAD_BAND_OHM) -> OriginLabel:
    """Locally-induced iff Real{Z} > 0, grid-induced iff < 0, with a
    dead-band around zero mapped to indeterminate."""
    real_z = dp.z.real
    if abs(real_z) < dead_band:
        origin = Origin.INDETERMINATE
    elif real_z > 0:
        origin = Origin.LOCALLY_INDUCED
    else:
        origin = Origin.GRID_INDUCED
    return OriginLabel(origin, real_z, METHOD_IMPEDANCE)


def signature_match(
    event,
    pairs: Sequence[AlignedPair],
    corr_threshold: float = DEFAULT_CORR_THRESHOLD,
    flank_s: float = 0.5,
    corr_flank_s: float = 0.25,
) -> bool:
    """Grid-induced evidence from the auxiliary feeder's voltage trace.

    True when the zero-lag, mean-removed correlation of the two feeders'
    v_mag over the event interval (padded by corr_flank_s on each side so a
    step's pre/post contrast is part of the compared signature) reaches
    corr_threshold AND the auxiliary deviation exceeds its own noise floor
    (3 sigma-scaled MAD of the pre-event flank). Raises
    InsufficientDataError on coverage gaps.
    """
    if not pairs:
        raise InsufficientDataError("no aligned pairs supplied")
    ts = np.array([p.solar.timestamp for p in pairs], dtype=np.int64)
    solar_v = np.array([p.solar.v_mag for p in pairs])
    aux_v = np.array([p.auxiliary.v_mag for p in pairs])

    flank_us = int(round(flank_s * 1e6))
    pad_us = int(round(corr_flank_s * 1e6))
    ev_mask = (ts >= event.start_us - pad_us) & (ts < event.end_us + pad_us)
    pre_mask = (ts >= event.start_us - pad_us - flank_us) & (ts < event.start_us - pad_us)
    if ev_mask.sum() < 4 or pre_mask.sum() < 8:
        raise InsufficientDataError("aligned pairs do not cover the event plus flank")
    ev_ts = ts[ev_mask]
    median_spacing = float(np.median(np.diff(ev_ts))) if ev_mask.sum() > 1 else 0.0
    if ev_mask.sum() > 1 and np.max(np.diff(ev_ts)) > 4 * max(median_spacing, 1.0):
        raise InsufficientDataError("aligned coverage has a gap inside the event interval")

    a = solar_v[ev_mask] - np.mean(solar_v[ev_mask])
    b = aux_v[ev_mask] - np.mean(aux_v[ev_mask])
    denom = math.sqrt(float(a @ a) * float(b @ b))
    corr = float(a @ b) / denom if denom > 0 else 0.0

    aux_pre = aux_v[pre_mask]
    base = float(np.median(aux_pre))
    mad = float(np.median(np.abs(aux_pre - base)))
    noise_floor = 3.0 * 1.4826 * mad + 1e-9
    deviation = float(np.max(np.abs(aux_v[ev_mask] - base)))

    return corr >= corr_threshold and deviation > noise_floor


def combined_origin(
    event,
    dp: DifferentialPhasor,
    pairs: Sequence[AlignedPair],
    dead_band: float = DEFAULT_DEAD_BAND_OHM,
    corr_threshold: float = DEFAULT_CORR_THRESHOLD,
) -> OriginLabel:
    """Impedance verdict cross-checked by signature inspection.

    The label follows the impedance verdict; agreement records whether the
    signature method points the same way (None when the impedance verdict
    is indeterminate).
    """
    imp = classify_origin(dp, dead_band)
    match = signature_match(event, pairs, corr_threshold)
    if imp.origin is Origin.GRID_INDUCED:
        agreement = match
    elif imp.origin is Origin.LOCALLY_INDUCED:
        agreement = not match
    else:
        agreement = None
    return OriginLabel(imp.origin, imp.real_z, METHOD_BOTH, agreement)


def origin_record(event_id: str, label: OriginLabel) -> dict:
    """JSON-ready record for the origins report (one line per event)."""
    return {
        "event_id": event_id,
        "real_z": label.real_z,
        "label": label.origin.value,
        "method": label.method,
        "agreement": label.agreement,
    }

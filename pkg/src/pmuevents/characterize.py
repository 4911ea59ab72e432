"""Statistical characterization of classified events.

Covers production-level correlation, power-factor impact, power-law decay
fits of the form ``y = a*x**b + c`` (with offset) and ``y = d*x**e``
(without), production histograms, and the comparative two-feeder response
record for grid-induced events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, FeatureError, FitConvergenceError, InsufficientDataError
from .phasors import (
    DEFAULT_PHASE_FACTOR,
    DEFAULT_RATED_POWER,
    PhasorSample,
    production_level_series,
    wrap_angle_deg,
)

POWER_LAW_WITH_OFFSET = "power_law_with_offset"  # y = a*x**b + c
POWER_LAW = "power_law"                          # y = d*x**e


@dataclass(frozen=True)
class EventFeatures:
    """Per-event scalar features used by the statistical reports.

    d_pf is derived from the angles so that
    d_pf == cos(pre_angle + d_angle) - cos(pre_angle) holds by construction.
    """

    event_id: str
    origin: object  # OriginLabel; kept loose to avoid an import cycle
    production_pct: float
    d_angle: float
    d_pf: float
    real_z: float
    pre_angle: float


@dataclass(frozen=True)
class CurveFitResult:
    """Converged nonlinear least-squares fit."""

    model_kind: str
    params: tuple[float, ...]
    rmse: float
    n_points: int
    iterations: int
    rmse_history: tuple[float, ...]  # rmse after each accepted step

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        if self.model_kind == POWER_LAW_WITH_OFFSET:
            a, b, c = self.params
            return a * x**b + c
        d, e = self.params
        return d * x**e


def extract_features(
    event,
    dp,
    origin,
    rated_power: float = DEFAULT_RATED_POWER,
    phase_factor: float = DEFAULT_PHASE_FACTOR,
    event_id: str = "",
) -> EventFeatures:
    """Scalar features of one event from its steady flanks.

    Production is measured on the pre-event window (the event itself
    perturbs it); d_angle is the wrapped change in the mean voltage-current
    angle difference from pre to post.
    """
    if event.pre is None or event.post is None:
        raise FeatureError("event lacks steady pre/post windows")
    pre_angle = _mean_angle_diff(event.pre)
    post_angle = _mean_angle_diff(event.post)
    d_angle = wrap_angle_deg(post_angle - pre_angle)
    d_pf = math.cos(math.radians(pre_angle + d_angle)) - math.cos(math.radians(pre_angle))
    production = float(np.mean(production_level_series(event.pre, rated_power, phase_factor)))
    return EventFeatures(
        event_id=event_id,
        origin=origin,
        production_pct=production,
        d_angle=d_angle,
        d_pf=d_pf,
        real_z=dp.z.real,
        pre_angle=pre_angle,
    )


def _mean_angle_diff(samples: Sequence[PhasorSample]) -> float:
    diffs = wrap_angle_deg(np.array([s.v_ang - s.i_ang for s in samples]))
    # arithmetic mean of wrapped values; angle differences cluster near 0
    return float(np.mean(diffs))


def _power_law_residual_jacobian(theta, x, y, with_offset):
    logx = np.log(x)
    if with_offset:
        a, b, c = theta
        xb = x**b
        r = a * xb + c - y
        jac = np.column_stack([xb, a * xb * logx, np.ones_like(x)])
    else:
        d, e = theta
        xe = x**e
        r = d * xe - y
        jac = np.column_stack([xe, d * xe * logx])
    return r, jac


def fit_power_law(
    x,
    y,
    with_offset: bool,
    init: Sequence[float] | None = None,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> CurveFitResult:
    """Damped Gauss-Newton (Levenberg) fit of a power-law decay.

    with_offset=True fits ``y = a*x**b + c``; otherwise ``y = d*x**e``.
    All x must be > 0. Convergence is declared when the relative parameter
    step falls below tol. Raises FitConvergenceError (carrying the last
    iterate) when max_iter accepted steps pass without convergence or the
    damping blows up.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise DomainError("x and y must be 1-D arrays of equal length")
    if np.any(x <= 0) or not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise DomainError("fit_power_law requires finite points with x > 0")
    n_params = 3 if with_offset else 2
    if len(x) < n_params + 1:
        raise DomainError(f"need at least {n_params + 1} points, got {len(x)}")

    if init is None:
        if with_offset:
            c0 = float(np.min(y))
            a0 = (float(y[0]) - c0) * float(x[0])  # solves y0 = a*x0**-1 + c0
            theta = np.array([a0, -1.0, c0])
        else:
            theta = np.array([float(y[0]) * float(x[0]), -1.0])
    else:
        theta = np.asarray(init, dtype=float).copy()
        if theta.shape != (n_params,):
            raise DomainError(f"init must have {n_params} parameters")

    def sse_of(t):
        with np.errstate(all="ignore"):
            r, _ = _power_law_residual_jacobian(t, x, y, with_offset)
        if not np.all(np.isfinite(r)):
            return None, np.inf
        return r, float(r @ r)

    r, sse = sse_of(theta)
    if r is None:
        raise DomainError("initial parameters give non-finite residuals")
    rmse_history = [math.sqrt(sse / len(x))]
    lam = 1e-3
    eye = np.eye(n_params)

    for iteration in range(1, max_iter + 1):
        _, jac = _power_law_residual_jacobian(theta, x, y, with_offset)
        grad = jac.T @ r
        hess = jac.T @ jac
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(hess + lam * eye, -grad)
            except np.linalg.LinAlgError:
                lam *= 3.0
                continue
            rel_step = float(np.max(np.abs(step) / (np.abs(theta) + 1e-12)))
            if rel_step < tol:
                # converged: the proposed move is negligible
                return CurveFitResult(
                    model_kind=POWER_LAW_WITH_OFFSET if with_offset else POWER_LAW,
                    params=tuple(float(v) for v in theta),
                    rmse=rmse_history[-1],
                    n_points=len(x),
                    iterations=iteration - 1,
                    rmse_history=tuple(rmse_history),
                )
            cand = theta + step
            r_cand, sse_cand = sse_of(cand)
            if r_cand is not None and sse_cand < sse:
                theta, r, sse = cand, r_cand, sse_cand
                lam = max(lam * 0.3, 1e-14)
                rmse_history.append(math.sqrt(sse / len(x)))
                accepted = True
                break
            lam *= 3.0
            if lam > 1e14:
                raise FitConvergenceError(
                    "damping exploded without an acceptable step",
                    params=tuple(float(v) for v in theta),
                    rmse=rmse_history[-1],
                    iterations=iteration,
                )
        if not accepted:
            raise FitConvergenceError(
                "no acceptable step found",
                params=tuple(float(v) for v in theta),
                rmse=rmse_history[-1],
                iterations=iteration,
            )

    raise FitConvergenceError(
        f"did not converge in {max_iter} iterations",
        params=tuple(float(v) for v in theta),
        rmse=rmse_history[-1],
        iterations=max_iter,
    )


@dataclass(frozen=True)
class ProductionHistogram:
    """Histogram of event production levels plus threshold fractions."""

    values: tuple[float, ...]
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def is_empty(self) -> bool:
        return len(self.values) == 0

    def fraction_at_or_below(self, threshold_pct: float) -> float:
        """Fraction of events with production <= threshold; nan when empty."""
        if self.is_empty:
            return float("nan")
        vals = np.asarray(self.values)
        return float(np.mean(vals <= threshold_pct))


def production_histogram(
    features: Sequence[EventFeatures],
    bin_width_pct: float = 10.0,
    origin_filter=None,
) -> ProductionHistogram:
    """Bin event production levels; optionally filter by origin.

    origin_filter may be an Origin value compared to each feature's
    origin.origin, or None to keep everything. An empty selection returns
    the empty-report marker (is_empty == True).
    """
    if bin_width_pct <= 0:
        raise DomainError("bin_width_pct must be > 0")
    selected = [
        f for f in features
        if origin_filter is None or f.origin.origin == origin_filter
    ]
    values = tuple(float(f.production_pct) for f in selected)
    if not values:
        return ProductionHistogram((), (0.0, bin_width_pct), (0,))
    top = max(max(values), bin_width_pct)
    n_bins = int(math.ceil(top / bin_width_pct + 1e-12))
    edges = np.arange(n_bins + 1) * bin_width_pct
    counts, _ = np.histogram(np.asarray(values), bins=edges)
    return ProductionHistogram(values, tuple(float(e) for e in edges), tuple(int(c) for c in counts))


@dataclass(frozen=True)
class FeederResponse:
    """One feeder's reaction to an event."""

    dv: float                 # post-mean minus pre-mean v_mag, volts
    di: float                 # post-mean minus pre-mean i_mag, amperes
    dv_direction: int         # -1, 0, +1 vs the feeder's own noise floor
    di_direction: int
    pf_change: str            # "steady" | "transient" | "none"
    peak_pf_deviation: float
    settled_pf_deviation: float


@dataclass(frozen=True)
class GridResponseRecord:
    """Side-by-side response of the solar and auxiliary feeders."""

    solar: FeederResponse
    auxiliary: FeederResponse

    @property
    def opposite_current_directions(self) -> bool:
        return self.solar.di_direction * self.auxiliary.di_direction == -1


def grid_response_report(
    event,
    solar_samples: Sequence[PhasorSample],
    aux_samples: Sequence[PhasorSample],
    persist_s: float = 2.0,
    window_s: float = 0.5,
) -> GridResponseRecord:
    """Compare both feeders' reaction to one (grid-induced) event.

    The power-factor change counts as steady when its deviation from the
    pre-event baseline persists beyond persist_s after the event settles,
    transient when it only shows during the event, none otherwise. Requires
    sample coverage through end + persist_s + window_s on both feeders.
    """
    return GridResponseRecord(
        solar=_feeder_response(event, solar_samples, persist_s, window_s),
        auxiliary=_feeder_response(event, aux_samples, persist_s, window_s),
    )


def _feeder_response(event, samples, persist_s, window_s):
    if not samples:
        raise InsufficientDataError("no samples for feeder response")
    ts = np.array([s.timestamp for s in samples], dtype=np.int64)
    v = np.array([s.v_mag for s in samples])
    i = np.array([s.i_mag for s in samples])
    pf = np.cos(np.radians(wrap_angle_deg(np.array([s.v_ang - s.i_ang for s in samples]))))

    win_us = int(round(window_s * 1e6))
    persist_us = int(round(persist_s * 1e6))
    pre_mask = (ts >= event.start_us - win_us) & (ts < event.start_us)
    post_mask = (ts >= event.end_us) & (ts < event.end_us + win_us)
    event_mask = (ts >= event.start_us) & (ts < event.end_us + persist_us)
    settled_mask = (ts >= event.end_us + persist_us) & (ts < event.end_us + persist_us + win_us)
    if pre_mask.sum() < 3 or post_mask.sum() < 3 or settled_mask.sum() < 3:
        raise InsufficientDataError("feeder samples do not cover the event plus flanks")

    dv = float(np.mean(v[post_mask]) - np.mean(v[pre_mask]))
    di = float(np.mean(i[post_mask]) - np.mean(i[pre_mask]))
    v_floor = 3.0 * float(np.std(v[pre_mask])) / math.sqrt(max(1, int(post_mask.sum()))) + 1e-12
    i_floor = 3.0 * float(np.std(i[pre_mask])) / math.sqrt(max(1, int(post_mask.sum()))) + 1e-12

    pf_pre = pf[pre_mask]
    base = float(np.mean(pf_pre))
    mad = float(np.median(np.abs(pf_pre - np.median(pf_pre))))
    pf_floor = 3.0 * 1.4826 * mad + 1e-9
    peak_dev = float(np.max(np.abs(pf[event_mask] - base))) if event_mask.any() else 0.0
    settled_dev = float(np.median(np.abs(pf[settled_mask] - base)))

    if settled_dev > pf_floor:
        pf_change = "steady"
    elif peak_dev > pf_floor:
        pf_change = "transient"
    else:
        pf_change = "none"

    return FeederResponse(
        dv=dv,
        di=di,
        dv_direction=int(np.sign(dv)) if abs(dv) > v_floor else 0,
        di_direction=int(np.sign(di)) if abs(di) > i_floor else 0,
        pf_change=pf_change,
        peak_pf_deviation=peak_dev,
        settled_pf_deviation=settled_dev,
    )

"""Five-stage segmentation of an event's current-magnitude response.

A grid-induced event drives the plant through a characteristic sequence:
the disturbance itself, a prompt counter-step that stabilizes output power,
an MPPT correction in the opposite direction, a momentary ramp-limit dip,
and a moderate ramp back to the setpoint. Boundaries are found by exact
dynamic-programming minimization of the total squared error of a
piecewise-linear fit with five segments.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import SegmentationError
from .phasors import PhasorSample

DEFAULT_MIN_SEGMENT_LEN = 12      # frames (0.1 s at 120 Hz)
DEFAULT_IMPROVEMENT_GATE = 0.05   # 5-segment SSE must beat 1 segment by this
N_STAGES = 5


class StageLabel(str, Enum):
    DISTURBANCE = "disturbance"
    PROMPT_COUNTER_STEP = "prompt_counter_step"
    MPPT_CORRECTION = "mppt_correction"
    RAMP_LIMIT_DIP = "ramp_limit_dip"
    RAMP_RECOVERY = "ramp_recovery"


CANONICAL_LABELS = (
    StageLabel.DISTURBANCE,
    StageLabel.PROMPT_COUNTER_STEP,
    StageLabel.MPPT_CORRECTION,
    StageLabel.RAMP_LIMIT_DIP,
    StageLabel.RAMP_RECOVERY,
)

# slope-sign templates (0 = flat): voltage step up -> prompt current drop;
# step down -> prompt current rise; both share the stage-4 momentary dip
# and the stage-5 recovery ramp
_TEMPLATE_STEP_UP = (0, -1, 1, -1, 1)
_TEMPLATE_STEP_DOWN = (0, 1, -1, -1, 1)


@dataclass(frozen=True)
class StageSegmentation:
    """Five-segment piecewise-linear decomposition of a current trace.

    boundaries_us are the 4 interior changepoints. labels is None when the
    slope pattern matches neither control template; staged is False when
    the five-segment fit does not beat a single trend line by the
    improvement gate (no staged structure).
    """

    boundaries_us: tuple[int, int, int, int]
    labels: tuple[StageLabel, ...] | None
    slopes: tuple[float, ...]          # amperes/second per segment
    staged: bool
    sse_by_segments: tuple[float, ...]  # best SSE for 1..5 segments


def _prefix_moments(y: np.ndarray):
    n = len(y)
    x = np.arange(n, dtype=float)
    z = np.zeros(1)
    return (
        np.concatenate([z, np.cumsum(np.ones(n))]),
        np.concatenate([z, np.cumsum(x)]),
        np.concatenate([z, np.cumsum(y)]),
        np.concatenate([z, np.cumsum(x * x)]),
        np.concatenate([z, np.cumsum(x * y)]),
        np.concatenate([z, np.cumsum(y * y)]),
    )


def _segment_sse(moments, i, j):
    """SSE of the least-squares line over samples [i, j); i may be an array."""
    s1, sx, sy, sxx, sxy, syy = moments
    n = s1[j] - s1[i]
    dx = sx[j] - sx[i]
    dy = sy[j] - sy[i]
    dxx = sxx[j] - sxx[i]
    dxy = sxy[j] - sxy[i]
    dyy = syy[j] - syy[i]
    cxx = dxx - dx * dx / n
    cxy = dxy - dx * dy / n
    cyy = dyy - dy * dy / n
    with np.errstate(divide="ignore", invalid="ignore"):
        sse = cyy - np.where(cxx > 0, cxy * cxy / np.where(cxx > 0, cxx, 1.0), 0.0)
    return np.maximum(sse, 0.0)


def segment_trace(
    y,
    n_segments: int = N_STAGES,
    min_len: int = DEFAULT_MIN_SEGMENT_LEN,
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Optimal piecewise-linear segmentation by dynamic programming.

    Returns (interior boundary indices for n_segments, best SSE for each
    segment count 1..n_segments). Each segment must span at least min_len
    samples. Exact: equals brute-force enumeration of boundary placements.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if min_len < 2:
        raise SegmentationError("min_len must be >= 2 for a line fit")
    if n < n_segments * min_len:
        raise SegmentationError(
            f"trace of {n} samples cannot hold {n_segments} segments of >= {min_len}"
        )
    moments = _prefix_moments(y)

    inf = np.inf
    cost = np.full((n_segments + 1, n + 1), inf)
    parent = np.zeros((n_segments + 1, n + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for k in range(1, n_segments + 1):
        j_lo = k * min_len
        for j in range(j_lo, n + 1):
            i_lo = (k - 1) * min_len
            i_hi = j - min_len
            if i_hi < i_lo:
                continue
            i_range = np.arange(i_lo, i_hi + 1)
            feasible = np.isfinite(cost[k - 1, i_range])
            if not feasible.any():
                continue
            totals = cost[k - 1, i_range] + _segment_sse(moments, i_range, j)
            m = int(np.argmin(totals))
            cost[k, j] = float(totals[m])
            parent[k, j] = i_range[m]

    boundaries = []
    j = n
    for k in range(n_segments, 1, -1):
        j = int(parent[k, j])
        boundaries.append(j)
    boundaries.reverse()
    sse_by_k = tuple(float(cost[k, n]) for k in range(1, n_segments + 1))
    return tuple(boundaries), sse_by_k


def label_stages(
    slopes: Sequence[float],
    step_direction: int,
    flat_tol: float = 0.2,
) -> tuple[StageLabel, ...] | None:
    """Map per-segment slope signs onto the five control-stage labels.

    step_direction is +1 for a voltage step up, -1 for a step down. Only
    stage 1 may be flat: its slope must stay below flat_tol times the
    median response-stage slope (the stage-5 recovery ramp is deliberately
    moderate, so a global scale would misread it as flat). Stages 2-5 are
    classified by sign. Returns None when the pattern matches neither
    template.
    """
    if len(slopes) != N_STAGES:
        raise SegmentationError(f"expected {N_STAGES} slopes, got {len(slopes)}")
    if step_direction not in (-1, 1):
        return None
    response_scale = float(np.median(np.abs(np.asarray(slopes[1:], dtype=float))))
    if response_scale == 0:
        return None
    first = 0 if abs(slopes[0]) < flat_tol * response_scale else int(np.sign(slopes[0]))
    signs = (first,) + tuple(0 if s == 0 else (1 if s > 0 else -1) for s in slopes[1:])
    template = _TEMPLATE_STEP_UP if step_direction > 0 else _TEMPLATE_STEP_DOWN
    if signs == template:
        return CANONICAL_LABELS
    return None


def _settled_length(y: np.ndarray, min_keep: int, margin: int = 24) -> int:
    """Samples to keep so the trace ends shortly after recovery completes.

    A long settled tail is a sixth linear region that a five-segment fit
    must absorb, which rotates the recovery segment and drags the last
    boundary. Keeps margin samples beyond the last point that deviates
    from the trailing level by more than 4 noise sigmas (sigma from the
    median absolute first difference).
    """
    n = len(y)
    if n <= min_keep or n <= margin:
        return n
    base = float(np.mean(y[-margin:]))
    sigma = float(np.median(np.abs(np.diff(y)))) / 0.9539  # |diff| of white noise
    active = np.abs(y - base) > 4.0 * max(sigma, 1e-12)
    last_active = int(np.max(np.nonzero(active)[0])) if active.any() else -1
    return min(n, max(min_keep, last_active + 1 + margin))


def segment_stages(
    event,
    extended_trace: Sequence[PhasorSample],
    min_segment_len: int = DEFAULT_MIN_SEGMENT_LEN,
    improvement_gate: float = DEFAULT_IMPROVEMENT_GATE,
    flat_tol: float = 0.2,
    trim_tail: bool = True,
) -> StageSegmentation:
    """Segment an event's |I| response into the five control stages.

    extended_trace must cover the event plus enough recovery horizon for
    the final ramp; any settled excess beyond recovery is trimmed first
    (trim_tail). Boundaries come from the exact DP fit; labels from the
    slope-sign templates with the voltage-step direction inferred from the
    trace's v_mag endpoints. staged is False when five segments improve on
    one by less than improvement_gate; the improvement compares
    degrees-of-freedom-adjusted residual variances (SSE_k / (n - 2k)), so
    the 10-parameter fit's mechanical advantage on pure noise does not
    count as structure.
    """
    if len(extended_trace) < N_STAGES * min_segment_len:
        raise SegmentationError(
            f"trace of {len(extended_trace)} samples is too short for "
            f"{N_STAGES} segments of >= {min_segment_len}"
        )
    ts = np.array([s.timestamp for s in extended_trace], dtype=np.int64)
    y = np.array([s.i_mag for s in extended_trace])
    v = np.array([s.v_mag for s in extended_trace])

    # gate on the full trace: the longer the trace, the smaller the share of
    # improvement a 5-segment fit can scavenge from pure noise
    boundaries_idx, sse_by_k = segment_trace(y, N_STAGES, min_segment_len)
    n = len(y)
    var1 = sse_by_k[0] / (n - 2)
    var5 = sse_by_k[-1] / (n - 2 * N_STAGES)
    eps = 1e-12 * max(1.0, float(np.max(np.abs(y))) ** 2)
    staged = var1 > eps and (var1 - var5) / var1 >= improvement_gate

    if staged and trim_tail:
        # refine boundaries with the settled excess removed; a long flat
        # tail rotates the recovery segment and drags the last boundary
        keep = _settled_length(y, min_keep=N_STAGES * min_segment_len)
        if keep < n:
            ts, y, v = ts[:keep], y[:keep], v[:keep]
            boundaries_idx, _ = segment_trace(y, N_STAGES, min_segment_len)

    edges = (0,) + boundaries_idx + (len(y),)
    slopes = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        t_sec = (ts[lo:hi] - ts[lo]) / 1e6
        slopes.append(float(np.polyfit(t_sec, y[lo:hi], 1)[0]))

    # direction of the voltage step across the trace
    q = min_segment_len
    v_pre, v_post = float(np.mean(v[:q])), float(np.mean(v[-q:]))
    v_noise = float(np.std(v[:q])) + 1e-12
    if abs(v_post - v_pre) > 3 * v_noise / np.sqrt(q):
        direction = 1 if v_post > v_pre else -1
    else:
        direction = 0

    labels = label_stages(slopes, direction, flat_tol) if staged else None
    return StageSegmentation(
        boundaries_us=tuple(int(ts[b]) for b in boundaries_idx),
        labels=labels,
        slopes=tuple(slopes),
        staged=staged,
        sse_by_segments=sse_by_k,
    )


def segmentation_record(event_id: str, seg: StageSegmentation) -> dict:
    """JSON-ready record for the stages report."""
    return {
        "event_id": event_id,
        "boundaries_us": list(seg.boundaries_us),
        "labels": [l.value for l in seg.labels] if seg.labels else None,
        "slopes": list(seg.slopes),
        "staged": seg.staged,
    }

"""Stage segmentation: DP correctness against brute force, templates, gates."""

import itertools
from dataclasses import dataclass

import numpy as np
import pytest

from pmuevents.dynamics import (
    CANONICAL_LABELS,
    StageLabel,
    label_stages,
    segment_stages,
    segment_trace,
)
from pmuevents.errors import SegmentationError
from pmuevents.phasors import PhasorSample


@dataclass
class StubEvent:
    start_us: int
    end_us: int


def brute_force_segment(y, n_segments, min_len):
    """Oracle: enumerate every boundary placement, fit lines, take the min."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    cache = {}

    def line_sse(lo, hi):
        if (lo, hi) not in cache:
            x = np.arange(lo, hi, dtype=float)
            seg = y[lo:hi]
            coef = np.polyfit(x, seg, 1)
            resid = seg - np.polyval(coef, x)
            cache[(lo, hi)] = float(resid @ resid)
        return cache[(lo, hi)]

    best = (np.inf, None)
    interior = range(min_len, n - min_len + 1)
    for combo in itertools.combinations(interior, n_segments - 1):
        edges = (0,) + combo + (n,)
        if any(hi - lo < min_len for lo, hi in zip(edges[:-1], edges[1:])):
            continue
        sse = sum(line_sse(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
        if sse < best[0]:
            best = (sse, combo)
    return best


def staged_trace(step_dir=1, pre=60, post=60, i0=90.0, dv=144.0, noise=0.05, seed=0):
    """Synthetic five-stage |I| response with its ground-truth boundaries.

    Mirrors the simulator's canonical control templates: a step up gives a
    prompt drop, MPPT overshoot, dip, recovery; a step down gives a prompt
    rise, steep MPPT fall, gentler dip, recovery.
    """
    rng = np.random.default_rng(seed)
    i_final = i0 * 7200.0 / (7200.0 + step_dir * dv)
    s = abs(i_final - i0)
    if step_dir > 0:
        levels = [i0, i0, i_final - 2.0 * s, i_final + 1.0 * s, i_final - 0.6 * s, i_final]
        d = (30, 48, 72, 48, 144)
    else:
        levels = [i0, i0, i_final + 2.5 * s, i_final - 0.5 * s, i_final - 1.5 * s, i_final]
        d = (30, 48, 48, 72, 144)
    knots = np.cumsum([0] + list(d)) + pre
    n = pre + sum(d) + post
    t = np.arange(n, dtype=float)
    y = np.interp(t, knots, levels, left=i0, right=levels[-1])
    y += rng.normal(0, noise, n)
    v = np.where(t >= pre, 7200.0 + step_dir * dv, 7200.0) + rng.normal(0, 0.5, n)
    samples = tuple(
        PhasorSample(int(k) * 8333, float(v[k]), 0.0, max(float(y[k]), 0.0), 0.0)
        for k in range(n)
    )
    truth_boundaries = [int(b) for b in knots[1:5]]  # interior changepoints
    return samples, truth_boundaries


class TestSegmentTrace:
    def test_dp_equals_brute_force_random_traces(self):
        rng = np.random.default_rng(79)
        for trial in range(8):
            n = int(rng.integers(70, 101))
            y = np.cumsum(rng.normal(0, 1, n)) + rng.normal(0, 0.2, n)
            boundaries, sse_by_k = segment_trace(y, 5, 12)
            oracle_sse, oracle_boundaries = brute_force_segment(y, 5, 12)
            assert sse_by_k[-1] == pytest.approx(oracle_sse, rel=1e-9, abs=1e-9)
            assert boundaries == oracle_boundaries

    def test_sse_nonincreasing_in_segment_count(self):
        rng = np.random.default_rng(83)
        for _ in range(10):
            y = np.cumsum(rng.normal(0, 1, 150))
            _, sse_by_k = segment_trace(y, 5, 12)
            assert all(b <= a + 1e-9 for a, b in zip(sse_by_k, sse_by_k[1:]))

    def test_boundaries_invariant_to_affine_rescaling(self):
        rng = np.random.default_rng(89)
        y = np.cumsum(rng.normal(0, 1, 200))
        b1, _ = segment_trace(y, 5, 12)
        b2, _ = segment_trace(3.7 * y + 42.0, 5, 12)
        assert b1 == b2

    def test_too_short_trace(self):
        with pytest.raises(SegmentationError):
            segment_trace(np.zeros(40), 5, 12)

    def test_min_len_respected(self):
        rng = np.random.default_rng(97)
        y = np.cumsum(rng.normal(0, 1, 120))
        boundaries, _ = segment_trace(y, 5, 15)
        edges = (0,) + boundaries + (120,)
        assert all(hi - lo >= 15 for lo, hi in zip(edges[:-1], edges[1:]))


class TestLabelStages:
    def test_step_up_template(self):
        assert label_stages([0.01, -5.0, 4.0, -3.0, 1.0], 1) == CANONICAL_LABELS

    def test_step_down_template(self):
        assert label_stages([0.01, 5.0, -4.0, -3.0, 1.0], -1) == CANONICAL_LABELS

    def test_template_miss(self):
        assert label_stages([0.0, 2.0, 2.0, 2.0, 2.0], 1) is None

    def test_wrong_direction_misses(self):
        assert label_stages([0.01, -5.0, 4.0, -3.0, 1.0], -1) is None

    def test_unknown_direction(self):
        assert label_stages([0.01, -5.0, 4.0, -3.0, 1.0], 0) is None


class TestSegmentStages:
    def event_for(self, samples, pre=60):
        return StubEvent(samples[pre].timestamp, samples[-1].timestamp)

    def test_step_up_recovers_boundaries_and_labels(self):
        samples, truth = staged_trace(step_dir=1, seed=1)
        seg = segment_stages(self.event_for(samples), samples)
        assert seg.staged
        assert seg.labels == CANONICAL_LABELS
        found = [b // 8333 for b in seg.boundaries_us]
        for got, want in zip(found, truth):
            assert abs(got - want) <= 6
        signs = np.sign(seg.slopes)
        assert tuple(signs[1:]) == (-1, 1, -1, 1)

    def test_step_down_recovers_boundaries_and_labels(self):
        samples, truth = staged_trace(step_dir=-1, seed=2)
        seg = segment_stages(self.event_for(samples), samples)
        assert seg.staged
        assert seg.labels == CANONICAL_LABELS
        found = [b // 8333 for b in seg.boundaries_us]
        for got, want in zip(found, truth):
            assert abs(got - want) <= 6
        signs = np.sign(seg.slopes)
        assert tuple(signs[1:]) == (1, -1, -1, 1)

    def test_flat_current_is_unstaged(self):
        # a pure voltage step with no staged current recovery
        for seed in range(5):
            rng = np.random.default_rng(101 + seed)
            n = 1000
            samples = tuple(
                PhasorSample(
                    k * 8333,
                    7200.0 + (72.0 if k >= 500 else 0.0),
                    0.0,
                    90.0 + float(rng.normal(0, 0.05)),
                    0.0,
                )
                for k in range(n)
            )
            seg = segment_stages(StubEvent(500 * 8333, 999 * 8333), samples)
            assert not seg.staged
            assert seg.labels is None

    def test_exactly_flat_current_is_unstaged(self):
        samples = tuple(
            PhasorSample(k * 8333, 7200.0, 0.0, 90.0, 0.0) for k in range(120)
        )
        seg = segment_stages(StubEvent(0, 119 * 8333), samples)
        assert not seg.staged

    def test_too_short_raises(self):
        samples, _ = staged_trace()
        with pytest.raises(SegmentationError):
            segment_stages(self.event_for(samples), samples[:40])
